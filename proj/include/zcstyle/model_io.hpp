// Copyright 2026 The zcstyle Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "zcstyle/graph.hpp"

namespace zcstyle {

inline constexpr int kModelFormatVersion = 1;
inline constexpr std::string_view kManifestFileName = "model.json";
inline constexpr std::string_view kWeightsFileName = "weights.bin";

/// A model on the wire: JSON manifest text plus one little-endian float32
/// blob. Every parameter in the manifest names its byte offset and shape in
/// the blob; blobs tile the file exactly.
struct ModelBytes {
  std::string manifest;
  std::vector<std::uint8_t> weights;
};

/// Parses and validates. Unknown fields, out-of-range or overlapping blobs
/// and attribute/shape inconsistencies are rejected with the node or blob
/// named in the message.
Graph load_model(std::string_view manifest,
                 std::span<const std::uint8_t> weights);

/// Serializes a valid graph. Parameters are laid out in node order.
ModelBytes save_model(const Graph& g);

/// Reads `dir/model.json` and `dir/weights.bin`.
Graph load_model_dir(const std::filesystem::path& dir);
void save_model_dir(const Graph& g, const std::filesystem::path& dir);

}  // namespace zcstyle
