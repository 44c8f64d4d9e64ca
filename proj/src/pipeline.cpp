// Copyright 2026 The zcstyle Authors.
// SPDX-License-Identifier: Apache-2.0

#include "zcstyle/pipeline.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <iterator>
#include <random>

namespace zcstyle {

namespace {

class PpmScanner {
 public:
  explicit PpmScanner(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  std::string token() {
    skip_space_and_comments();
    std::string out;
    while (pos_ < bytes_.size() && !std::isspace(bytes_[pos_])) {
      out.push_back(static_cast<char>(bytes_[pos_++]));
    }
    if (out.empty()) fail(ErrorKind::kParse, "truncated PPM header");
    return out;
  }

  Index number() {
    const std::string t = token();
    Index value = 0;
    for (char ch : t) {
      if (!std::isdigit(static_cast<unsigned char>(ch))) {
        fail(ErrorKind::kParse, "bad PPM header field '" + t + "'");
      }
      value = value * 10 + (ch - '0');
      if (value > (Index{1} << 30)) fail(ErrorKind::kParse, "PPM dimension too large");
    }
    return value;
  }

  // Exactly one whitespace byte separates maxval from the raster.
  std::size_t raster_start() {
    if (pos_ >= bytes_.size() || !std::isspace(bytes_[pos_])) {
      fail(ErrorKind::kParse, "PPM header not terminated by whitespace");
    }
    return pos_ + 1;
  }

 private:
  void skip_space_and_comments() {
    while (pos_ < bytes_.size()) {
      if (std::isspace(bytes_[pos_])) {
        ++pos_;
      } else if (bytes_[pos_] == '#') {
        while (pos_ < bytes_.size() && bytes_[pos_] != '\n') ++pos_;
      } else {
        break;
      }
    }
  }

  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::kIo, "cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

Tensor4 decode_ppm(std::span<const std::uint8_t> bytes) {
  PpmScanner scan(bytes);
  const std::string magic = scan.token();
  if (magic == "P5" || magic == "P2" || magic == "P4" || magic == "P1") {
    fail(ErrorKind::kUnsupported, "image is not RGB (PNM type " + magic + ")");
  }
  if (magic != "P6") fail(ErrorKind::kParse, "not a binary PPM (magic '" + magic + "')");
  const Index width = scan.number();
  const Index height = scan.number();
  const Index maxval = scan.number();
  if (width < 1 || height < 1) fail(ErrorKind::kParse, "PPM has zero extent");
  if (maxval < 1 || maxval > 255) {
    fail(ErrorKind::kUnsupported, "only 8-bit PPM is supported (maxval " +
                                      std::to_string(maxval) + ")");
  }
  const std::size_t start = scan.raster_start();
  const std::size_t need = static_cast<std::size_t>(3 * width * height);
  if (bytes.size() < start + need) fail(ErrorKind::kParse, "truncated PPM raster");

  Tensor4 image(Shape4{1, 3, height, width});
  const auto scale = static_cast<float>(maxval);
  for (Index y = 0; y < height; ++y) {
    for (Index x = 0; x < width; ++x) {
      const std::size_t px = start + static_cast<std::size_t>(3 * (y * width + x));
      for (Index ch = 0; ch < 3; ++ch) {
        image(0, ch, y, x) = static_cast<float>(bytes[px + ch]) / scale;
      }
    }
  }
  return image;
}

std::vector<std::uint8_t> encode_ppm(const Tensor4& image) {
  if (image.n() != 1 || image.c() != 3) {
    fail(ErrorKind::kShape, "PPM output needs a (1,3,H,W) tensor, got " +
                                image.shape().to_string());
  }
  const std::string header = "P6\n" + std::to_string(image.w()) + " " +
                             std::to_string(image.h()) + "\n255\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  out.reserve(out.size() + static_cast<std::size_t>(3 * image.h() * image.w()));
  for (Index y = 0; y < image.h(); ++y) {
    for (Index x = 0; x < image.w(); ++x) {
      for (Index ch = 0; ch < 3; ++ch) {
        float v = image(0, ch, y, x);
        v = std::isnan(v) ? 0.0F : std::clamp(v, 0.0F, 1.0F);
        out.push_back(static_cast<std::uint8_t>(std::lround(v * 255.0F)));
      }
    }
  }
  return out;
}

Tensor4 read_image(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  try {
    return decode_ppm(bytes);
  } catch (const Error& e) {
    fail(e.kind(), path.string() + ": " + e.what());
  }
}

void write_image(const Tensor4& image, const std::filesystem::path& path) {
  const auto bytes = encode_ppm(image);
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorKind::kIo, "cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) fail(ErrorKind::kIo, "short write to " + path.string());
}

std::vector<Tensor4> random_images(const Shape4& shape, Index count,
                                   std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> dist(0.0F, 1.0F);
  std::vector<Tensor4> images;
  images.reserve(static_cast<size_t>(count));
  for (Index i = 0; i < count; ++i) {
    Tensor4 t(shape);
    for (Index k = 0; k < t.size(); ++k) t.values()[k] = dist(rng);
    images.push_back(std::move(t));
  }
  return images;
}

std::vector<std::string> resolve_taps(const Graph& encoder,
                                      std::span<const std::string> requested) {
  if (!requested.empty()) return {requested.begin(), requested.end()};
  if (!encoder.taps.empty()) return encoder.taps;
  return encoder.outputs;
}

Index encoder_stride(const Graph& encoder, std::span<const std::string> taps) {
  if (taps.empty()) fail(ErrorKind::kInvalidArgument, "encoder has no taps");
  const Shape4& declared = encoder.input.shape;
  if (declared.h < 1 || declared.w < 1) {
    fail(ErrorKind::kShape, "encoder declares no input size");
  }
  const ShapeMap shapes = infer_shapes(encoder, declared);
  auto it = shapes.find(taps.back());
  if (it == shapes.end()) fail(ErrorKind::kInvalidArgument, "unknown tap '" + taps.back() + "'");
  const Shape4& deepest = it->second;
  if (deepest.h < 1 || declared.h % deepest.h != 0 || declared.w % deepest.w != 0 ||
      declared.h / deepest.h != declared.w / deepest.w) {
    fail(ErrorKind::kShape, "encoder has no uniform integer stride at tap '" +
                                taps.back() + "'");
  }
  return declared.h / deepest.h;
}

std::vector<Tensor4> encode(const Graph& encoder, const Tensor4& image,
                            std::span<const std::string> taps,
                            const ExecOptions& options) {
  const Index stride = encoder_stride(encoder, taps);
  if (image.h() % stride != 0 || image.w() % stride != 0) {
    fail(ErrorKind::kShape, "image " + std::to_string(image.h()) + "x" +
                                std::to_string(image.w()) +
                                " is not a multiple of the encoder stride " +
                                std::to_string(stride) + " (both sides must be multiples of " +
                                std::to_string(stride) + ")");
  }
  TensorMap features = execute(encoder, image, taps, options);
  std::vector<Tensor4> out;
  out.reserve(taps.size());
  for (const auto& tap : taps) out.push_back(std::move(features.at(tap)));
  return out;
}

namespace {

Tensor4 decode_bottleneck(const Graph& decoder, const Tensor4& bottleneck,
                          const ExecOptions& options) {
  if (decoder.input.shape.c != bottleneck.c()) {
    fail(ErrorKind::kShape, "decoder expects " + std::to_string(decoder.input.shape.c) +
                                " input channels but the bottleneck slice has " +
                                std::to_string(bottleneck.c()));
  }
  if (decoder.outputs.empty()) fail(ErrorKind::kShape, "decoder declares no outputs");
  TensorMap out = execute(decoder, bottleneck, {}, options);
  return std::move(out.at(decoder.outputs.front()));
}

}  // namespace

Tensor4 stylize(const StyleJob& job, const ExecOptions& options) {
  if (!job.encoder || !job.decoder) {
    fail(ErrorKind::kInvalidArgument, "style job needs an encoder and a decoder");
  }
  job.cfg.validate();
  const std::vector<std::string> taps = resolve_taps(*job.encoder, job.taps);
  const auto content_taps = encode(*job.encoder, job.content_image, taps, options);
  const auto style_taps = encode(*job.encoder, job.style_image, taps, options);

  const Tensor4& content_bottleneck = content_taps.back();
  const Tensor4& style_bottleneck = style_taps.back();
  auto [content_agg, content_layout] = aggregate_features<float>(
      content_taps, content_bottleneck.h(), content_bottleneck.w());
  auto [style_agg, style_layout] = aggregate_features<float>(
      style_taps, style_bottleneck.h(), style_bottleneck.w());

  const Tensor4 transferred = sandwich_swap(content_agg, style_agg, job.cfg);
  const Tensor4 bottleneck = split_aggregate(transferred, content_layout).back();
  Tensor4 image = decode_bottleneck(*job.decoder, bottleneck, options);
  if (image.h() != job.content_image.h() || image.w() != job.content_image.w()) {
    fail(ErrorKind::kShape, "decoder produced " + std::to_string(image.h()) + "x" +
                                std::to_string(image.w()) + ", content image is " +
                                std::to_string(job.content_image.h()) + "x" +
                                std::to_string(job.content_image.w()));
  }
  return image;
}

Tensor4 reconstruct(const Graph& encoder, const Graph& decoder,
                    const Tensor4& image, std::span<const std::string> taps,
                    const ExecOptions& options) {
  const std::vector<std::string> resolved = resolve_taps(encoder, taps);
  const auto features = encode(encoder, image, resolved, options);
  return decode_bottleneck(decoder, features.back(), options);
}

}  // namespace zcstyle
