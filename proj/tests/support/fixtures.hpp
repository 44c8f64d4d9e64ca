// Copyright 2026 The zcstyle Authors.
// SPDX-License-Identifier: Apache-2.0

// Test-only graph builders and synthetic networks.

#pragma once

#include <cstdint>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "zcstyle/graph.hpp"

namespace zcstyle::testing {

Tensor4 random_tensor(const Shape4& shape, std::mt19937_64& rng, float stddev = 1.0F,
                      float mean = 0.0F);
Tensor4 random_uniform(const Shape4& shape, std::mt19937_64& rng, float lo = 0.0F,
                       float hi = 1.0F);

/// Appends nodes with He-initialized random parameters.
class GraphBuilder {
 public:
  GraphBuilder(std::string name, Shape4 input, std::uint64_t seed);

  std::string conv(const std::string& id, const std::string& in, Index out_channels,
                   Index kernel, Index stride = 1, Index padding = 0, Index groups = 1,
                   bool bias = true);
  std::string bn(const std::string& id, const std::string& in);
  std::string relu(const std::string& id, const std::string& in);
  std::string relu6(const std::string& id, const std::string& in);
  std::string maxpool(const std::string& id, const std::string& in, Index kernel,
                      Index stride, Index padding = 0);
  std::string avgpool(const std::string& id, const std::string& in, Index kernel,
                      Index stride);
  std::string upsample(const std::string& id, const std::string& in, Index factor);
  std::string concat(const std::string& id, const std::vector<std::string>& ins);
  std::string add(const std::string& id, const std::string& a, const std::string& b);

  /// Makes channel `c` of the relu fed by conv -> [bn] exactly zero for
  /// every input: zero filter and a negative pre-activation constant.
  void kill_channel(const std::string& conv_id, const std::string& bn_id, Index c);

  Index channels(const std::string& id) const;
  Node& node(const std::string& id);
  std::mt19937_64& rng() { return rng_; }
  Graph& graph() { return graph_; }

  Graph build(std::vector<std::string> outputs, std::vector<std::string> taps = {});

 private:
  Node& push(Node node);

  Graph graph_;
  std::mt19937_64 rng_;
  std::map<std::string, Index> channels_;
};

/// Sets BN running statistics from data and shifts the bias of convs that
/// feed an activation directly, so every live channel is positive on part of
/// the input distribution (as in a trained net). Channels whose pre-activation
/// is constant, e.g. killed ones, are left alone.
void center_activations(Graph& g, std::uint64_t seed, Index samples = 8);

/// GoogLeNet-shaped net (stem, two inception blocks, 1x1 head) with
/// exactly-dead channels injected at every relu.
struct SyntheticNet {
  Graph graph;
  std::map<std::string, std::vector<std::uint8_t>> injected;  // relu id -> keep bits
  std::int64_t expected_params_after = 0;  // counted from the injected masks
};

SyntheticNet make_googlenet_like(std::uint64_t seed, double dead_lo = 0.2,
                                 double dead_hi = 0.4, Index input_size = 32,
                                 double width_scale = 1.0);

/// 1x1 identity conv + relu encoder and 1x1 identity conv decoder.
struct Autoencoder {
  Graph encoder;
  Graph decoder;
};
Autoencoder identity_autoencoder(Index size = 8);

/// Three-block encoder (stride 4, taps at each block end) with dead channels
/// inside the blocks, plus a random upsampling decoder.
Autoencoder toy_autoencoder(std::uint64_t seed, Index size = 16);

/// Conv(3->8)-BN-ReLU with mask 11001010 feeding Conv(8->4).
Graph fig4a_toy(std::uint64_t seed);

}  // namespace zcstyle::testing
