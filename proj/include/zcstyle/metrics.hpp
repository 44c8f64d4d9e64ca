// Copyright 2026 The zcstyle Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>

#include "zcstyle/graph.hpp"

namespace zcstyle {

/// G = F F^T / (C*H*W) with F the C x (H*W) unfolding.
template <typename Scalar>
Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> gram(
    const BasicTensor4<Scalar>& f) {
  if (f.n() != 1) fail(ErrorKind::kInvalidArgument, "gram expects a single image");
  const auto scale = static_cast<Scalar>(f.c() * f.shape().spatial());
  const auto features = f.channels();
  Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> g =
      (features * features.transpose()) / scale;
  return g;
}

/// Frobenius norm of gram(a) - gram(b).
double gram_distance(const Tensor4& a, const Tensor4& b);

/// Luma for RGB (0.299, 0.587, 0.114); a single channel passes through.
Eigen::ArrayXXd grayscale(const Tensor4& image);

/// Sobel gradient magnitude, borders replicated.
Eigen::ArrayXXd sobel_magnitude(const Eigen::ArrayXXd& gray);

struct SsimOptions {
  Index window = 11;
  double sigma = 1.5;
  double k1 = 0.01;
  double k2 = 0.03;
};

/// Mean SSIM over all fully contained Gaussian windows. A window larger
/// than the image shrinks to the smaller side.
double ssim(const Eigen::ArrayXXd& a, const Eigen::ArrayXXd& b,
            double data_range, const SsimOptions& options = {});

/// SSIM between Sobel edge maps of two images; the data range is the
/// largest edge response of either map (1 when both are flat).
double edge_ssim(const Tensor4& a, const Tensor4& b,
                 const SsimOptions& options = {});

struct BenchOptions {
  Index iters = 10;
  Index warmup = 2;
  bool fixed_input = false;
  std::uint64_t seed = 0;
  int threads = 1;
};

struct BenchResult {
  double mean_seconds = 0.0;
  double median_seconds = 0.0;
  double min_seconds = 0.0;
  Index runs = 0;
  Index warmup = 0;
  Shape4 input{};
  bool fixed_input = false;
  int threads = 1;
};

/// Times execute() only. Inputs are uniform [0, 1) noise, fresh for every
/// run unless `fixed_input`.
BenchResult benchmark(const Graph& g, const Shape4& input_shape,
                      const BenchOptions& options = {});

std::string bench_to_json(const BenchResult& result, const std::string& model);

}  // namespace zcstyle
