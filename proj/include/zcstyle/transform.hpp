// Copyright 2026 The zcstyle Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <type_traits>
#include <utility>
#include <vector>

#include "zcstyle/tensor.hpp"

namespace zcstyle {

enum class TransferMode {
  kAdain,      // adain(c, s)
  kSwap,       // style_swap(c, s)
  kS2,         // adain(style_swap(adain(c, s), s), s)
  kAdainSwap,  // style_swap(adain(c, s), s)
  kSwapAdain,  // adain(style_swap(c, s), s)
};

std::string_view to_string(TransferMode mode);
std::optional<TransferMode> parse_transfer_mode(std::string_view name);

struct TransferConfig {
  Index patch_size = 3;
  Index patch_stride = 1;
  float eps = kDefaultEps;
  TransferMode mode = TransferMode::kS2;
  float blend_alpha = 1.0F;

  void validate() const;
};

/// Removes per-channel mean and std. Returns the normalized feature and the
/// statistics that were removed.
template <typename Scalar>
std::pair<BasicTensor4<Scalar>, BasicChannelStats<Scalar>> normalize(
    const BasicTensor4<Scalar>& f, Scalar eps = Scalar(kDefaultEps)) {
  BasicChannelStats<Scalar> stats = channel_stats(f, eps);
  BasicTensor4<Scalar> out(f.shape());
  out.channels().array() = (f.channels().array().colwise() - stats.mean)
                               .colwise() / stats.std;
  return {std::move(out), std::move(stats)};
}

/// out[c] = f_norm[c] * target.std[c] + target.mean[c]
template <typename Scalar>
BasicTensor4<Scalar> colorize(const BasicTensor4<Scalar>& f_norm,
                              const BasicChannelStats<Scalar>& target) {
  if (f_norm.n() != 1) {
    fail(ErrorKind::kInvalidArgument, "colorize expects a single image");
  }
  if (target.channels() != f_norm.c() || target.std.size() != f_norm.c()) {
    fail(ErrorKind::kShape, "colorize: feature has " + std::to_string(f_norm.c()) +
                                " channels, stats have " +
                                std::to_string(target.channels()));
  }
  BasicTensor4<Scalar> out(f_norm.shape());
  out.channels().array() =
      (f_norm.channels().array().colwise() * target.std).colwise() + target.mean;
  return out;
}

template <typename Scalar>
BasicTensor4<Scalar> adain(const BasicTensor4<Scalar>& content,
                           const BasicTensor4<Scalar>& style,
                           Scalar eps = Scalar(kDefaultEps)) {
  if (content.c() != style.c()) {
    fail(ErrorKind::kShape, "adain: content has " + std::to_string(content.c()) +
                                " channels, style has " + std::to_string(style.c()));
  }
  if constexpr (std::is_same_v<Scalar, float>) {
    // float rounding of mu_c gets amplified by sigma_s / sigma_c; do the
    // arithmetic in double and round once
    const double e = static_cast<double>(eps);
    return colorize(normalize(content.template cast<double>(), e).first,
                    channel_stats(style.template cast<double>(), e))
        .template cast<float>();
  } else {
    return colorize(normalize(content, eps).first, channel_stats(style, eps));
  }
}

/// Window origins along one axis: 0, stride, 2*stride, ... plus extent-patch
/// when the grid would leave trailing pixels uncovered.
std::vector<Index> patch_origins(Index extent, Index patch, Index stride);

/// Patch selection of a style swap. Content locations are enumerated
/// row-major over (content_rows x content_cols); style patch k sits at
/// (style_rows[k / style_cols.size()], style_cols[k % style_cols.size()]).
struct PatchMatch {
  std::vector<Index> content_rows;
  std::vector<Index> content_cols;
  std::vector<Index> style_rows;
  std::vector<Index> style_cols;
  std::vector<Index> selected;  // one style patch index per content location
};

namespace detail {

template <typename Scalar>
using PatchMatrix =
    Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// One row per location, columns ordered (channel, dy, dx).
template <typename Scalar>
PatchMatrix<Scalar> extract_patches(const BasicTensor4<Scalar>& f,
                                    const std::vector<Index>& rows,
                                    const std::vector<Index>& cols, Index patch) {
  const Index dim = f.c() * patch * patch;
  PatchMatrix<Scalar> out(static_cast<Index>(rows.size() * cols.size()), dim);
  Index r = 0;
  for (Index y : rows) {
    for (Index x : cols) {
      Index k = 0;
      for (Index ch = 0; ch < f.c(); ++ch) {
        const auto plane = f.plane(0, ch);
        for (Index dy = 0; dy < patch; ++dy) {
          for (Index dx = 0; dx < patch; ++dx) out(r, k++) = plane(y + dy, x + dx);
        }
      }
      ++r;
    }
  }
  return out;
}

inline void check_swap_inputs(Index content_c, Index content_h, Index content_w,
                              Index style_c, Index style_h, Index style_w,
                              Index patch, Index stride) {
  if (content_c != style_c) {
    fail(ErrorKind::kShape, "style_swap: content has " + std::to_string(content_c) +
                                " channels, style has " + std::to_string(style_c));
  }
  if (patch < 1 || stride < 1 || stride > patch) {
    fail(ErrorKind::kInvalidArgument,
         "style_swap needs patch_size >= 1 and 1 <= patch_stride <= patch_size");
  }
  if (patch > std::min({content_h, content_w, style_h, style_w})) {
    fail(ErrorKind::kShape, "style_swap: patch " + std::to_string(patch) +
                                " is larger than a feature map (content " +
                                std::to_string(content_h) + "x" +
                                std::to_string(content_w) + ", style " +
                                std::to_string(style_h) + "x" +
                                std::to_string(style_w) + ")");
  }
}

}  // namespace detail

/// For every content location, picks the style patch maximizing
/// <p_c, p_s / max(|p_s|, eps)>; ties go to the lowest style index. Scores
/// within 8 * machine eps * sqrt(dim) * |p_c| of the best count as ties.
template <typename Scalar>
PatchMatch match_patches(const BasicTensor4<Scalar>& content,
                         const BasicTensor4<Scalar>& style, Index patch,
                         Index stride, Scalar eps = Scalar(kDefaultEps)) {
  if (content.n() != 1 || style.n() != 1) {
    fail(ErrorKind::kInvalidArgument, "style_swap expects single images");
  }
  detail::check_swap_inputs(content.c(), content.h(), content.w(), style.c(),
                            style.h(), style.w(), patch, stride);
  PatchMatch match;
  match.content_rows = patch_origins(content.h(), patch, stride);
  match.content_cols = patch_origins(content.w(), patch, stride);
  match.style_rows = patch_origins(style.h(), patch, stride);
  match.style_cols = patch_origins(style.w(), patch, stride);

  auto style_patches =
      detail::extract_patches(style, match.style_rows, match.style_cols, patch);
  const auto norms = style_patches.rowwise().norm().array().max(eps).eval();
  style_patches.array().colwise() /= norms;
  const auto content_patches = detail::extract_patches(
      content, match.content_rows, match.content_cols, patch);

  const auto content_norms = content_patches.rowwise().norm().eval();
  const Scalar tie_scale = Scalar(8) * std::numeric_limits<Scalar>::epsilon() *
                           std::sqrt(static_cast<Scalar>(content_patches.cols()));
  const Index locations = content_patches.rows();
  match.selected.resize(static_cast<size_t>(locations));
  constexpr Index kChunk = 256;
  for (Index begin = 0; begin < locations; begin += kChunk) {
    const Index rows = std::min(kChunk, locations - begin);
    const detail::PatchMatrix<Scalar> scores =
        content_patches.middleRows(begin, rows) * style_patches.transpose();
    for (Index r = 0; r < rows; ++r) {
      // The GEMM may round identical candidates differently, so anything
      // within rounding of the best score counts as a tie.
      Index best = 0;
      scores.row(r).maxCoeff(&best);
      const Scalar slack = tie_scale * content_norms[begin + r];
      const Scalar floor = scores(r, best) - slack;
      for (Index k = 0; k < best; ++k) {
        if (scores(r, k) >= floor) {
          best = k;
          break;
        }
      }
      match.selected[static_cast<size_t>(begin + r)] = best;
    }
  }
  return match;
}

/// Replaces content patches by their best-matching style patches and
/// averages overlaps. Output has the content's spatial size.
template <typename Scalar>
BasicTensor4<Scalar> style_swap(const BasicTensor4<Scalar>& content,
                                const BasicTensor4<Scalar>& style, Index patch = 3,
                                Index stride = 1, Scalar eps = Scalar(kDefaultEps)) {
  const PatchMatch match = match_patches(content, style, patch, stride, eps);
  const Index style_cols = static_cast<Index>(match.style_cols.size());
  BasicTensor4<Scalar> sum(content.shape());
  Eigen::Array<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> count =
      Eigen::Array<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>::Zero(
          content.h(), content.w());
  Index loc = 0;
  for (Index y : match.content_rows) {
    for (Index x : match.content_cols) {
      const Index k = match.selected[static_cast<size_t>(loc++)];
      const Index sy = match.style_rows[static_cast<size_t>(k / style_cols)];
      const Index sx = match.style_cols[static_cast<size_t>(k % style_cols)];
      for (Index ch = 0; ch < content.c(); ++ch) {
        sum.plane(0, ch).block(y, x, patch, patch) +=
            style.plane(0, ch).block(sy, sx, patch, patch);
      }
      count.block(y, x, patch, patch) += Scalar(1);
    }
  }
  for (Index ch = 0; ch < content.c(); ++ch) sum.plane(0, ch) /= count;
  return sum;
}

/// The configured transfer arm, then optional blending with the content.
template <typename Scalar>
BasicTensor4<Scalar> sandwich_swap(const BasicTensor4<Scalar>& content,
                                   const BasicTensor4<Scalar>& style,
                                   const TransferConfig& cfg = {}) {
  cfg.validate();
  const auto eps = static_cast<Scalar>(cfg.eps);
  auto swap = [&](const BasicTensor4<Scalar>& f) {
    return style_swap(f, style, cfg.patch_size, cfg.patch_stride, eps);
  };
  BasicTensor4<Scalar> out;
  switch (cfg.mode) {
    case TransferMode::kAdain:
      out = adain(content, style, eps);
      break;
    case TransferMode::kSwap:
      out = swap(content);
      break;
    case TransferMode::kS2:
      out = adain(swap(adain(content, style, eps)), style, eps);
      break;
    case TransferMode::kAdainSwap:
      out = swap(adain(content, style, eps));
      break;
    case TransferMode::kSwapAdain:
      out = adain(swap(content), style, eps);
      break;
  }
  if (cfg.blend_alpha < 1.0F) {
    const auto alpha = static_cast<Scalar>(cfg.blend_alpha);
    out.values() = alpha * out.values() + (Scalar(1) - alpha) * content.values();
  }
  return out;
}

/// Where each tap landed inside an aggregated feature.
struct AggregateRange {
  Index block = 0;
  Index begin = 0;  // first channel
  Index end = 0;    // one past the last channel
  Index height = 0; // tap size before pooling
  Index width = 0;
};

struct AggregateLayout {
  std::vector<AggregateRange> ranges;
  Index height = 0;
  Index width = 0;

  Index channels() const { return ranges.empty() ? 0 : ranges.back().end; }
};

/// Average-pools every tap down to target_h x target_w (integer factors
/// only) and concatenates along channels in tap order.
template <typename Scalar>
std::pair<BasicTensor4<Scalar>, AggregateLayout> aggregate_features(
    std::span<const BasicTensor4<Scalar>> taps, Index target_h, Index target_w) {
  if (taps.empty()) fail(ErrorKind::kInvalidArgument, "no taps to aggregate");
  if (target_h < 1 || target_w < 1) {
    fail(ErrorKind::kInvalidArgument, "aggregate target must be at least 1x1");
  }
  AggregateLayout layout;
  layout.height = target_h;
  layout.width = target_w;
  Index channels = 0;
  for (Index b = 0; b < static_cast<Index>(taps.size()); ++b) {
    const auto& t = taps[b];
    if (t.n() != 1) fail(ErrorKind::kInvalidArgument, "aggregate expects single images");
    if (t.h() % target_h != 0 || t.w() % target_w != 0) {
      fail(ErrorKind::kShape, "tap " + std::to_string(b) + " of size " +
                                  std::to_string(t.h()) + "x" + std::to_string(t.w()) +
                                  " is not an integer multiple of " +
                                  std::to_string(target_h) + "x" +
                                  std::to_string(target_w));
    }
    layout.ranges.push_back({b, channels, channels + t.c(), t.h(), t.w()});
    channels += t.c();
  }
  BasicTensor4<Scalar> out(Shape4{1, channels, target_h, target_w});
  for (const auto& range : layout.ranges) {
    const auto& t = taps[range.block];
    const Index fy = t.h() / target_h;
    const Index fx = t.w() / target_w;
    const Scalar area = static_cast<Scalar>(fy * fx);
    for (Index ch = 0; ch < t.c(); ++ch) {
      auto dst = out.plane(0, range.begin + ch);
      const auto src = t.plane(0, ch);
      for (Index y = 0; y < target_h; ++y) {
        for (Index x = 0; x < target_w; ++x) {
          dst(y, x) = src.block(y * fy, x * fx, fy, fx).sum() / area;
        }
      }
    }
  }
  return {std::move(out), std::move(layout)};
}

/// Inverse of the channel concatenation (pooling is not undone).
template <typename Scalar>
std::vector<BasicTensor4<Scalar>> split_aggregate(const BasicTensor4<Scalar>& f,
                                                  const AggregateLayout& layout) {
  if (f.c() != layout.channels()) {
    fail(ErrorKind::kShape, "aggregate has " + std::to_string(f.c()) +
                                " channels, layout describes " +
                                std::to_string(layout.channels()));
  }
  std::vector<BasicTensor4<Scalar>> parts;
  for (const auto& range : layout.ranges) {
    BasicTensor4<Scalar> part(Shape4{1, range.end - range.begin, f.h(), f.w()});
    part.channels() = f.channels().middleRows(range.begin, range.end - range.begin);
    parts.push_back(std::move(part));
  }
  return parts;
}

}  // namespace zcstyle
