// Copyright 2026 The zcstyle Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <span>
#include <vector>

#include "zcstyle/tensor.hpp"

namespace zcstyle {

struct ConvParams {
  Index stride = 1;
  Index padding = 0;
  Index groups = 1;
};

/// Output extent of a strided window op along one axis.
Index window_output_extent(Index in, Index kernel, Index stride,
                           Index padding);

/// Zero-padded grouped convolution, weight laid out (O, I/groups, Kh, Kw).
///
/// Every output pixel accumulates bias first, then input channel by input
/// channel, then kh, then kw. The order does not depend on `threads`, which
/// only splits the output channels across workers.
Tensor4 conv2d(const Tensor4& x, const Tensor4& weight,
               std::span<const float> bias, const ConvParams& params,
               int threads = 1);

/// Inference-mode batch normalization.
Tensor4 batch_norm(const Tensor4& x, const Eigen::ArrayXf& gamma,
                   const Eigen::ArrayXf& beta,
                   const Eigen::ArrayXf& running_mean,
                   const Eigen::ArrayXf& running_var, float eps);

enum class Activation { kRelu, kRelu6 };

Tensor4 activation(const Tensor4& x, Activation kind);

enum class PoolKind { kMax, kAvg };

struct PoolParams {
  Index kernel = 2;
  Index stride = 2;
  Index padding = 0;
};

/// Max pooling ignores padded positions; average pooling counts them as
/// zeros (divisor is always kernel*kernel).
Tensor4 pool(const Tensor4& x, PoolKind kind, const PoolParams& params);

Tensor4 upsample_nearest(const Tensor4& x, Index factor);

Tensor4 concat_channels(std::span<const Tensor4* const> xs);
Tensor4 concat_channels(const std::vector<Tensor4>& xs);

Tensor4 add(const Tensor4& x, const Tensor4& y);

/// Copies the listed channels, in the given order.
Tensor4 select_channels(const Tensor4& x, std::span<const Index> channels);

}  // namespace zcstyle
