// Copyright 2026 The zcstyle Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "zcstyle/graph.hpp"
#include "zcstyle/transform.hpp"

namespace zcstyle {

// Binary PPM (P6). Pixels map to [0, 1] as value / maxval; writing clamps
// to [0, 1] and rounds to the nearest 8-bit level.
Tensor4 decode_ppm(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> encode_ppm(const Tensor4& image);

Tensor4 read_image(const std::filesystem::path& path);
void write_image(const Tensor4& image, const std::filesystem::path& path);

/// `count` images of uniform [0, 1) noise from a seeded generator.
std::vector<Tensor4> random_images(const Shape4& shape, Index count,
                                   std::uint64_t seed);

/// Ratio between the declared input size and the deepest tap size.
Index encoder_stride(const Graph& encoder, std::span<const std::string> taps);

/// Tap ids a pipeline should use: explicit list, else the manifest taps,
/// else the graph outputs.
std::vector<std::string> resolve_taps(const Graph& encoder,
                                      std::span<const std::string> requested);

/// Per-block features in tap order. Rejects images whose sides are not a
/// multiple of the encoder stride.
std::vector<Tensor4> encode(const Graph& encoder, const Tensor4& image,
                            std::span<const std::string> taps,
                            const ExecOptions& options = {});

struct StyleJob {
  Tensor4 content_image;
  Tensor4 style_image;
  std::shared_ptr<const Graph> encoder;
  std::shared_ptr<const Graph> decoder;
  std::vector<std::string> taps;  // empty: resolve_taps()
  TransferConfig cfg;
};

/// Encode both images, aggregate each image's taps at its own bottleneck
/// size, transfer, hand the bottleneck slice to the decoder.
Tensor4 stylize(const StyleJob& job, const ExecOptions& options = {});

/// decoder(bottleneck(encoder(image))) with no transfer in between.
Tensor4 reconstruct(const Graph& encoder, const Graph& decoder,
                    const Tensor4& image, std::span<const std::string> taps,
                    const ExecOptions& options = {});

}  // namespace zcstyle
