// Copyright 2026 The zcstyle Authors.
// SPDX-License-Identifier: Apache-2.0

#include "zcstyle/metrics.hpp"

#include <algorithm>
#include <chrono>
#include <new>
#include <random>
#include <vector>

#include <nlohmann/json.hpp>

namespace zcstyle {

namespace {

Eigen::ArrayXd gaussian_kernel(Index size, double sigma) {
  Eigen::ArrayXd k(size);
  const double center = static_cast<double>(size - 1) / 2.0;
  for (Index i = 0; i < size; ++i) {
    const double d = static_cast<double>(i) - center;
    k[i] = std::exp(-(d * d) / (2.0 * sigma * sigma));
  }
  return k / k.sum();
}

// Separable "valid" filtering: rows first, then columns.
Eigen::ArrayXXd filter_valid(const Eigen::ArrayXXd& x, const Eigen::ArrayXd& k) {
  const Index size = k.size();
  const Index out_h = x.rows() - size + 1;
  const Index out_w = x.cols() - size + 1;
  Eigen::ArrayXXd horizontal = Eigen::ArrayXXd::Zero(x.rows(), out_w);
  for (Index j = 0; j < size; ++j) {
    horizontal += k[j] * x.middleCols(j, out_w);
  }
  Eigen::ArrayXXd out = Eigen::ArrayXXd::Zero(out_h, out_w);
  for (Index i = 0; i < size; ++i) {
    out += k[i] * horizontal.middleRows(i, out_h);
  }
  return out;
}

Tensor4 random_input(const Shape4& shape, std::mt19937_64& rng) {
  std::uniform_real_distribution<float> dist(0.0F, 1.0F);
  Tensor4 t(shape);
  for (Index i = 0; i < t.size(); ++i) t.values()[i] = dist(rng);
  return t;
}

}  // namespace

double gram_distance(const Tensor4& a, const Tensor4& b) {
  if (a.c() != b.c()) {
    fail(ErrorKind::kShape, "gram_distance: " + std::to_string(a.c()) + " vs " +
                                std::to_string(b.c()) + " channels");
  }
  return static_cast<double>((gram(a) - gram(b)).norm());
}

Eigen::ArrayXXd grayscale(const Tensor4& image) {
  if (image.n() != 1) fail(ErrorKind::kInvalidArgument, "grayscale expects a single image");
  if (image.c() == 1) return image.plane(0, 0).cast<double>();
  if (image.c() != 3) {
    fail(ErrorKind::kShape, "grayscale expects 1 or 3 channels, got " +
                                std::to_string(image.c()));
  }
  return 0.299 * image.plane(0, 0).cast<double>() +
         0.587 * image.plane(0, 1).cast<double>() +
         0.114 * image.plane(0, 2).cast<double>();
}

Eigen::ArrayXXd sobel_magnitude(const Eigen::ArrayXXd& gray) {
  const Index h = gray.rows();
  const Index w = gray.cols();
  Eigen::ArrayXXd out(h, w);
  auto at = [&](Index y, Index x) {
    return gray(std::clamp<Index>(y, 0, h - 1), std::clamp<Index>(x, 0, w - 1));
  };
  for (Index y = 0; y < h; ++y) {
    for (Index x = 0; x < w; ++x) {
      const double gx = (at(y - 1, x + 1) + 2.0 * at(y, x + 1) + at(y + 1, x + 1)) -
                        (at(y - 1, x - 1) + 2.0 * at(y, x - 1) + at(y + 1, x - 1));
      const double gy = (at(y + 1, x - 1) + 2.0 * at(y + 1, x) + at(y + 1, x + 1)) -
                        (at(y - 1, x - 1) + 2.0 * at(y - 1, x) + at(y - 1, x + 1));
      out(y, x) = std::sqrt(gx * gx + gy * gy);
    }
  }
  return out;
}

double ssim(const Eigen::ArrayXXd& a, const Eigen::ArrayXXd& b, double data_range,
            const SsimOptions& options) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    fail(ErrorKind::kShape, "ssim: image sizes differ");
  }
  if (a.size() == 0) fail(ErrorKind::kShape, "ssim on empty images");
  if (!(data_range > 0.0)) fail(ErrorKind::kInvalidArgument, "ssim data range must be > 0");
  const Index window = std::min({options.window, a.rows(), a.cols()});
  const Eigen::ArrayXd k = gaussian_kernel(window, options.sigma);
  const double c1 = (options.k1 * data_range) * (options.k1 * data_range);
  const double c2 = (options.k2 * data_range) * (options.k2 * data_range);

  const Eigen::ArrayXXd mu_a = filter_valid(a, k);
  const Eigen::ArrayXXd mu_b = filter_valid(b, k);
  const Eigen::ArrayXXd var_a = filter_valid(a * a, k) - mu_a * mu_a;
  const Eigen::ArrayXXd var_b = filter_valid(b * b, k) - mu_b * mu_b;
  const Eigen::ArrayXXd cov = filter_valid(a * b, k) - mu_a * mu_b;

  const Eigen::ArrayXXd map = ((2.0 * mu_a * mu_b + c1) * (2.0 * cov + c2)) /
                              ((mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2));
  return map.mean();
}

double edge_ssim(const Tensor4& a, const Tensor4& b, const SsimOptions& options) {
  if (a.shape() != b.shape()) {
    fail(ErrorKind::kShape, "edge_ssim: " + a.shape().to_string() + " vs " +
                                b.shape().to_string());
  }
  const Eigen::ArrayXXd ea = sobel_magnitude(grayscale(a));
  const Eigen::ArrayXXd eb = sobel_magnitude(grayscale(b));
  double range = std::max(ea.maxCoeff(), eb.maxCoeff());
  if (!(range > 0.0)) range = 1.0;
  return ssim(ea, eb, range, options);
}

BenchResult benchmark(const Graph& g, const Shape4& input_shape,
                      const BenchOptions& options) {
  if (options.iters < 1) fail(ErrorKind::kInvalidArgument, "iters must be >= 1");
  if (options.warmup < 0) fail(ErrorKind::kInvalidArgument, "warmup must be >= 0");
  infer_shapes(g, input_shape);

  BenchResult result;
  result.runs = options.iters;
  result.warmup = options.warmup;
  result.input = input_shape;
  result.fixed_input = options.fixed_input;
  result.threads = options.threads;

  const ExecOptions exec{options.threads};
  std::mt19937_64 rng(options.seed);
  std::vector<double> seconds;
  seconds.reserve(static_cast<size_t>(options.iters));
  try {
    Tensor4 input = random_input(input_shape, rng);
    for (Index run = 0; run < options.warmup + options.iters; ++run) {
      if (!options.fixed_input && run > 0) input = random_input(input_shape, rng);
      const auto start = std::chrono::steady_clock::now();
      const TensorMap out = execute(g, input, {}, exec);
      const auto stop = std::chrono::steady_clock::now();
      if (out.empty()) fail(ErrorKind::kShape, "graph produced no outputs");
      if (run >= options.warmup) {
        seconds.push_back(std::chrono::duration<double>(stop - start).count());
      }
    }
  } catch (const std::bad_alloc&) {
    fail(ErrorKind::kResource, "out of memory benchmarking input " +
                                   input_shape.to_string());
  }

  std::vector<double> sorted = seconds;
  std::sort(sorted.begin(), sorted.end());
  const size_t n = sorted.size();
  result.min_seconds = sorted.front();
  result.median_seconds =
      n % 2 == 1 ? sorted[n / 2] : 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]);
  double total = 0.0;
  for (double s : seconds) total += s;
  result.mean_seconds = n == 1 ? seconds.front() : total / static_cast<double>(n);
  return result;
}

std::string bench_to_json(const BenchResult& r, const std::string& model) {
  nlohmann::ordered_json doc;
  doc["report"] = "benchmark";
  doc["model"] = model;
  doc["input"] = {r.input.n, r.input.c, r.input.h, r.input.w};
  doc["runs"] = r.runs;
  doc["warmup"] = r.warmup;
  doc["threads"] = r.threads;
  doc["fixed_input"] = r.fixed_input;
  doc["timing_boundary"] = "execute only (no image decode, no model load)";
  doc["mean_seconds"] = r.mean_seconds;
  doc["median_seconds"] = r.median_seconds;
  doc["min_seconds"] = r.min_seconds;
  doc["fps_from_median"] = r.median_seconds > 0.0 ? 1.0 / r.median_seconds : 0.0;
  return doc.dump(2) + "\n";
}

}  // namespace zcstyle
