// Copyright 2026 The zcstyle Authors.
// SPDX-License-Identifier: Apache-2.0

#include "zcstyle/transform.hpp"

#include <array>

namespace zcstyle {

namespace {

constexpr std::array<std::pair<TransferMode, std::string_view>, 5> kModeNames{{
    {TransferMode::kAdain, "adain"},
    {TransferMode::kSwap, "swap"},
    {TransferMode::kS2, "s2"},
    {TransferMode::kAdainSwap, "adain_swap"},
    {TransferMode::kSwapAdain, "swap_adain"},
}};

}  // namespace

std::string_view to_string(TransferMode mode) {
  for (const auto& [m, name] : kModeNames) {
    if (m == mode) return name;
  }
  return "unknown";
}

std::optional<TransferMode> parse_transfer_mode(std::string_view name) {
  for (const auto& [m, mode_name] : kModeNames) {
    if (mode_name == name) return m;
  }
  return std::nullopt;
}

void TransferConfig::validate() const {
  if (patch_size < 1) fail(ErrorKind::kInvalidArgument, "patch_size must be >= 1");
  if (patch_stride < 1 || patch_stride > patch_size) {
    fail(ErrorKind::kInvalidArgument, "patch_stride must be in [1, patch_size]");
  }
  if (!(eps >= 0.0F)) fail(ErrorKind::kInvalidArgument, "eps must be >= 0");
  if (!(blend_alpha >= 0.0F && blend_alpha <= 1.0F)) {
    fail(ErrorKind::kInvalidArgument, "blend_alpha must be in [0, 1]");
  }
}

std::vector<Index> patch_origins(Index extent, Index patch, Index stride) {
  std::vector<Index> origins;
  if (patch > extent) return origins;
  for (Index y = 0; y + patch <= extent; y += stride) origins.push_back(y);
  if (origins.back() + patch < extent) origins.push_back(extent - patch);
  return origins;
}

}  // namespace zcstyle
