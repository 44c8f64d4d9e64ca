// Copyright 2026 The zcstyle Authors.
// SPDX-License-Identifier: Apache-2.0

#include "zcstyle/kernels.hpp"

#include <algorithm>
#include <limits>
#include <thread>

namespace zcstyle {

namespace {

void require_batch_match(const Shape4& a, const Shape4& b, const char* what) {
  if (a.n != b.n || a.h != b.h || a.w != b.w) {
    fail(ErrorKind::kShape, std::string(what) + ": shapes " + a.to_string() +
                                " and " + b.to_string() +
                                " differ outside the channel axis");
  }
}

// Accumulates one output channel of one image. Loop nest is (i, kh, kw, oy,
// ox), so each output pixel still sees the terms in (i, kh, kw) order.
void conv_output_channel(const Tensor4& x, const Tensor4& weight, float bias,
                         const ConvParams& p, Index b, Index o, Tensor4& y) {
  const Index in_per_group = weight.c();
  const Index out_per_group = weight.n() / p.groups;
  const Index group = o / out_per_group;
  const Index kh_extent = weight.h();
  const Index kw_extent = weight.w();
  auto out = y.plane(b, o);
  out.setConstant(bias);
  for (Index i = 0; i < in_per_group; ++i) {
    const auto in = x.plane(b, group * in_per_group + i);
    for (Index kh = 0; kh < kh_extent; ++kh) {
      for (Index kw = 0; kw < kw_extent; ++kw) {
        const float k = weight(o, i, kh, kw);
        for (Index oy = 0; oy < y.h(); ++oy) {
          const Index iy = oy * p.stride + kh - p.padding;
          if (iy < 0 || iy >= x.h()) continue;
          // Valid ox satisfy 0 <= ox*stride + kw - padding < x.w().
          const Index shift = kw - p.padding;
          const Index ox_begin =
              shift >= 0 ? 0 : (-shift + p.stride - 1) / p.stride;
          const Index ox_end =
              std::min(y.w(), x.w() - shift <= 0
                                  ? Index{0}
                                  : (x.w() - shift - 1) / p.stride + 1);
          for (Index ox = ox_begin; ox < ox_end; ++ox) {
            out(oy, ox) += k * in(iy, ox * p.stride + shift);
          }
        }
      }
    }
  }
}

}  // namespace

Index window_output_extent(Index in, Index kernel, Index stride,
                           Index padding) {
  if (kernel < 1 || stride < 1 || padding < 0) {
    fail(ErrorKind::kInvalidArgument,
         "window op needs kernel >= 1, stride >= 1, padding >= 0");
  }
  const Index span = in + 2 * padding - kernel;
  if (span < 0) {
    fail(ErrorKind::kShape, "window of " + std::to_string(kernel) +
                                " exceeds padded extent " +
                                std::to_string(in + 2 * padding));
  }
  return span / stride + 1;
}

Tensor4 conv2d(const Tensor4& x, const Tensor4& weight,
               std::span<const float> bias, const ConvParams& p, int threads) {
  if (p.groups < 1) fail(ErrorKind::kInvalidArgument, "groups must be >= 1");
  if (x.c() % p.groups != 0 || weight.n() % p.groups != 0) {
    fail(ErrorKind::kShape, "groups=" + std::to_string(p.groups) +
                                " does not divide channels (in " +
                                std::to_string(x.c()) + ", out " +
                                std::to_string(weight.n()) + ")");
  }
  if (weight.c() * p.groups != x.c()) {
    fail(ErrorKind::kShape, "conv weight " + weight.shape().to_string() +
                                " expects " +
                                std::to_string(weight.c() * p.groups) +
                                " input channels, got " +
                                std::to_string(x.c()));
  }
  if (!bias.empty() && static_cast<Index>(bias.size()) != weight.n()) {
    fail(ErrorKind::kShape, "conv bias length " + std::to_string(bias.size()) +
                                " != output channels " +
                                std::to_string(weight.n()));
  }
  const Index out_h =
      window_output_extent(x.h(), weight.h(), p.stride, p.padding);
  const Index out_w =
      window_output_extent(x.w(), weight.w(), p.stride, p.padding);
  Tensor4 y(Shape4{x.n(), weight.n(), out_h, out_w});

  const Index outputs = weight.n();
  auto run_range = [&](Index begin, Index end) {
    for (Index b = 0; b < x.n(); ++b) {
      for (Index o = begin; o < end; ++o) {
        conv_output_channel(x, weight, bias.empty() ? 0.0F : bias[o], p, b, o,
                            y);
      }
    }
  };
  const Index workers = std::clamp<Index>(threads, 1, std::max<Index>(outputs, 1));
  if (workers == 1) {
    run_range(0, outputs);
    return y;
  }
  std::vector<std::jthread> pool;
  pool.reserve(workers);
  const Index chunk = (outputs + workers - 1) / workers;
  for (Index begin = 0; begin < outputs; begin += chunk) {
    pool.emplace_back(run_range, begin, std::min(outputs, begin + chunk));
  }
  pool.clear();
  return y;
}

Tensor4 batch_norm(const Tensor4& x, const Eigen::ArrayXf& gamma,
                   const Eigen::ArrayXf& beta,
                   const Eigen::ArrayXf& running_mean,
                   const Eigen::ArrayXf& running_var, float eps) {
  const Index c = x.c();
  if (gamma.size() != c || beta.size() != c || running_mean.size() != c ||
      running_var.size() != c) {
    fail(ErrorKind::kShape, "batch_norm parameter length does not match " +
                                std::to_string(c) + " channels");
  }
  if ((running_var < 0.0F).any()) {
    fail(ErrorKind::kInvalidArgument, "batch_norm running_var is negative");
  }
  Tensor4 y(x.shape());
  for (Index b = 0; b < x.n(); ++b) {
    for (Index ch = 0; ch < c; ++ch) {
      const float denom = std::sqrt(running_var[ch] + eps);
      y.plane(b, ch) =
          gamma[ch] * (x.plane(b, ch) - running_mean[ch]) / denom + beta[ch];
    }
  }
  return y;
}

Tensor4 activation(const Tensor4& x, Activation kind) {
  switch (kind) {
    case Activation::kRelu:
      return Tensor4(x.shape(), x.values().max(0.0F));
    case Activation::kRelu6:
      return Tensor4(x.shape(), x.values().max(0.0F).min(6.0F));
  }
  fail(ErrorKind::kUnsupported, "unknown activation");
}

Tensor4 pool(const Tensor4& x, PoolKind kind, const PoolParams& p) {
  const Index out_h = window_output_extent(x.h(), p.kernel, p.stride, p.padding);
  const Index out_w = window_output_extent(x.w(), p.kernel, p.stride, p.padding);
  Tensor4 y(Shape4{x.n(), x.c(), out_h, out_w});
  const float area = static_cast<float>(p.kernel * p.kernel);
  for (Index b = 0; b < x.n(); ++b) {
    for (Index ch = 0; ch < x.c(); ++ch) {
      const auto in = x.plane(b, ch);
      auto out = y.plane(b, ch);
      for (Index oy = 0; oy < out_h; ++oy) {
        for (Index ox = 0; ox < out_w; ++ox) {
          float acc = kind == PoolKind::kMax
                          ? -std::numeric_limits<float>::infinity()
                          : 0.0F;
          for (Index ky = 0; ky < p.kernel; ++ky) {
            const Index iy = oy * p.stride + ky - p.padding;
            if (iy < 0 || iy >= x.h()) continue;
            for (Index kx = 0; kx < p.kernel; ++kx) {
              const Index ix = ox * p.stride + kx - p.padding;
              if (ix < 0 || ix >= x.w()) continue;
              acc = kind == PoolKind::kMax ? std::max(acc, in(iy, ix))
                                           : acc + in(iy, ix);
            }
          }
          out(oy, ox) = kind == PoolKind::kMax ? acc : acc / area;
        }
      }
    }
  }
  return y;
}

Tensor4 upsample_nearest(const Tensor4& x, Index factor) {
  if (factor < 1) fail(ErrorKind::kInvalidArgument, "upsample factor must be >= 1");
  Tensor4 y(Shape4{x.n(), x.c(), x.h() * factor, x.w() * factor});
  for (Index b = 0; b < x.n(); ++b) {
    for (Index ch = 0; ch < x.c(); ++ch) {
      const auto in = x.plane(b, ch);
      auto out = y.plane(b, ch);
      for (Index oy = 0; oy < y.h(); ++oy) {
        for (Index ox = 0; ox < y.w(); ++ox) {
          out(oy, ox) = in(oy / factor, ox / factor);
        }
      }
    }
  }
  return y;
}

Tensor4 concat_channels(std::span<const Tensor4* const> xs) {
  if (xs.empty()) fail(ErrorKind::kInvalidArgument, "concat of zero tensors");
  const Shape4 first = xs.front()->shape();
  Index channels = 0;
  for (const Tensor4* t : xs) {
    require_batch_match(first, t->shape(), "concat");
    channels += t->c();
  }
  Tensor4 y(Shape4{first.n, channels, first.h, first.w});
  for (Index b = 0; b < first.n; ++b) {
    Index offset = 0;
    for (const Tensor4* t : xs) {
      y.channels(b).middleRows(offset, t->c()) = t->channels(b);
      offset += t->c();
    }
  }
  return y;
}

Tensor4 concat_channels(const std::vector<Tensor4>& xs) {
  std::vector<const Tensor4*> ptrs;
  ptrs.reserve(xs.size());
  for (const auto& t : xs) ptrs.push_back(&t);
  return concat_channels(std::span<const Tensor4* const>(ptrs));
}

Tensor4 add(const Tensor4& x, const Tensor4& y) {
  if (x.shape() != y.shape()) {
    fail(ErrorKind::kShape, "add: shapes " + x.shape().to_string() + " and " +
                                y.shape().to_string() + " differ");
  }
  return Tensor4(x.shape(), x.values() + y.values());
}

Tensor4 select_channels(const Tensor4& x, std::span<const Index> channels) {
  Tensor4 y(Shape4{x.n(), static_cast<Index>(channels.size()), x.h(), x.w()});
  for (Index b = 0; b < x.n(); ++b) {
    for (Index k = 0; k < y.c(); ++k) {
      const Index ch = channels[k];
      if (ch < 0 || ch >= x.c()) {
        fail(ErrorKind::kRange, "channel index " + std::to_string(ch) +
                                    " out of range for " +
                                    std::to_string(x.c()) + " channels");
      }
      y.channels(b).row(k) = x.channels(b).row(ch);
    }
  }
  return y;
}

}  // namespace zcstyle
