// Copyright 2026 The zcstyle Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <string>
#include <utility>

#include "zcstyle/error.hpp"

namespace zcstyle {

using Index = Eigen::Index;

/// Extent of an NCHW tensor.
struct Shape4 {
  Index n = 0;
  Index c = 0;
  Index h = 0;
  Index w = 0;

  constexpr Index count() const { return n * c * h * w; }
  constexpr Index spatial() const { return h * w; }
  friend constexpr bool operator==(const Shape4&, const Shape4&) = default;

  std::string to_string() const {
    return "(" + std::to_string(n) + "," + std::to_string(c) + "," +
           std::to_string(h) + "," + std::to_string(w) + ")";
  }
};

/// Dense rank-4 array, contiguous in n, c, h, w order.
///
/// The per-image block is exposed as a C x (H*W) row-major matrix so that
/// channel statistics, Gram matrices and patch products are plain Eigen
/// expressions.
template <typename Scalar>
class BasicTensor4 {
 public:
  using Values = Eigen::Array<Scalar, Eigen::Dynamic, 1>;
  using ChannelMatrix =
      Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  using ChannelMap = Eigen::Map<ChannelMatrix>;
  using ConstChannelMap = Eigen::Map<const ChannelMatrix>;
  using Plane =
      Eigen::Array<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  using PlaneMap = Eigen::Map<Plane>;
  using ConstPlaneMap = Eigen::Map<const Plane>;

  BasicTensor4() = default;

  explicit BasicTensor4(Shape4 shape)
      : shape_(checked(shape)), values_(Values::Zero(shape.count())) {}

  BasicTensor4(Shape4 shape, Values values)
      : shape_(checked(shape)), values_(std::move(values)) {
    if (values_.size() != shape_.count()) {
      fail(ErrorKind::kShape, "tensor data length " +
                                  std::to_string(values_.size()) +
                                  " does not match shape " + shape_.to_string());
    }
  }

  static BasicTensor4 Constant(Shape4 shape, Scalar value) {
    return BasicTensor4(shape, Values::Constant(checked(shape).count(), value));
  }

  const Shape4& shape() const { return shape_; }
  Index n() const { return shape_.n; }
  Index c() const { return shape_.c; }
  Index h() const { return shape_.h; }
  Index w() const { return shape_.w; }
  Index size() const { return values_.size(); }
  bool empty() const { return values_.size() == 0; }

  const Values& values() const { return values_; }
  Values& values() { return values_; }
  const Scalar* data() const { return values_.data(); }
  Scalar* data() { return values_.data(); }

  Scalar& operator()(Index b, Index ch, Index y, Index x) {
    return values_[offset(b, ch, y, x)];
  }
  Scalar operator()(Index b, Index ch, Index y, Index x) const {
    return values_[offset(b, ch, y, x)];
  }

  /// C x (H*W) view of image `b`.
  ChannelMap channels(Index b = 0) {
    return ChannelMap(data() + b * image_stride(), shape_.c, shape_.spatial());
  }
  ConstChannelMap channels(Index b = 0) const {
    return ConstChannelMap(data() + b * image_stride(), shape_.c,
                           shape_.spatial());
  }

  /// H x W view of one channel plane.
  PlaneMap plane(Index b, Index ch) {
    return PlaneMap(data() + b * image_stride() + ch * shape_.spatial(),
                    shape_.h, shape_.w);
  }
  ConstPlaneMap plane(Index b, Index ch) const {
    return ConstPlaneMap(data() + b * image_stride() + ch * shape_.spatial(),
                         shape_.h, shape_.w);
  }

  bool all_finite() const { return values_.isFinite().all(); }

  template <typename Other>
  BasicTensor4<Other> cast() const {
    return BasicTensor4<Other>(shape_, values_.template cast<Other>());
  }

 private:
  static Shape4 checked(Shape4 shape) {
    if (shape.n < 0 || shape.c < 0 || shape.h < 0 || shape.w < 0) {
      fail(ErrorKind::kShape, "negative extent in shape " + shape.to_string());
    }
    return shape;
  }

  Index image_stride() const { return shape_.c * shape_.spatial(); }
  Index offset(Index b, Index ch, Index y, Index x) const {
    return ((b * shape_.c + ch) * shape_.h + y) * shape_.w + x;
  }

  Shape4 shape_{};
  Values values_;
};

using Tensor4 = BasicTensor4<float>;

/// Per-channel mean and (population, eps-regularized) standard deviation.
template <typename Scalar>
struct BasicChannelStats {
  Eigen::Array<Scalar, Eigen::Dynamic, 1> mean;
  Eigen::Array<Scalar, Eigen::Dynamic, 1> std;

  Index channels() const { return mean.size(); }
};

using ChannelStats = BasicChannelStats<float>;

inline constexpr float kDefaultEps = 1e-5F;

/// Mean over H*W and std = sqrt(var_pop + eps), two-pass.
template <typename Scalar>
BasicChannelStats<Scalar> channel_stats(const BasicTensor4<Scalar>& f,
                                        Scalar eps = Scalar(kDefaultEps)) {
  if (f.n() != 1) {
    fail(ErrorKind::kInvalidArgument,
         "channel_stats expects a single image, got n=" + std::to_string(f.n()));
  }
  if (f.shape().spatial() < 1) {
    fail(ErrorKind::kInvalidArgument, "channel_stats on empty spatial extent");
  }
  if (!(eps >= Scalar(0))) {
    fail(ErrorKind::kInvalidArgument, "eps must be non-negative");
  }
  const auto hw = static_cast<Scalar>(f.shape().spatial());
  auto channels = f.channels().array();
  BasicChannelStats<Scalar> stats;
  stats.mean = channels.rowwise().sum() / hw;
  const auto variance =
      (channels.colwise() - stats.mean).square().rowwise().sum() / hw;
  stats.std = (variance + eps).sqrt();
  return stats;
}

}  // namespace zcstyle
