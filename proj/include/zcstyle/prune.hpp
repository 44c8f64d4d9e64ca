// Copyright 2026 The zcstyle Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "zcstyle/graph.hpp"

namespace zcstyle {

/// Binary per-channel vector anchored at an activation node; 1 keeps the
/// channel, 0 marks it as a zero channel.
struct KeepMask {
  std::string node_id;
  std::vector<std::uint8_t> bits;
  /// Set when every channel was below threshold; bit 0 is then forced on so
  /// the tensor never becomes empty.
  bool all_dead = false;

  Index size() const { return static_cast<Index>(bits.size()); }
  Index zero_count() const;
  /// "11001010"-style rendering, channel 0 first.
  std::string to_string() const;
};

/// One detected zero channel that propagation had to keep.
struct Reversion {
  std::string node_id;
  Index channel = 0;
  std::string reason;
};

/// Which parameter slices survive at one node.
struct SliceDirective {
  std::vector<Index> keep_out;  // conv filters / BN channels
  std::vector<Index> keep_in;   // conv input slices (empty for depthwise/BN)
};

struct PrunePlan {
  /// Keep mask of every tensor, graph input included, keyed by producer id.
  std::map<std::string, std::vector<std::uint8_t>, std::less<>> masks;
  std::map<std::string, SliceDirective, std::less<>> slices;
  std::vector<Reversion> reverted;

  bool is_identity() const;
  std::vector<Index> kept(std::string_view tensor_id) const;
};

struct EquivalenceReport {
  double max_deviation = 0.0;
  double tolerance = 0.0;
  Index inputs = 0;
  bool passed = false;
};

struct NodeChannels {
  std::string node_id;
  Index before = 0;
  Index after = 0;
};

struct PruneReport {
  std::vector<NodeChannels> nodes;  // only nodes whose width changed
  std::int64_t params_before = 0;
  std::int64_t params_after = 0;
  std::int64_t flops_before = 0;
  std::int64_t flops_after = 0;
  std::vector<Reversion> reverted;
  std::optional<EquivalenceReport> verification;
  std::vector<std::string> warnings;

  Index channels_removed() const;
};

/// Runs every calibration input and marks channel c of each relu/relu6 node
/// as zero iff max |activation| over all inputs and pixels is <= tau.
std::vector<KeepMask> detect_zero_channels(const Graph& g,
                                           std::span<const Tensor4> calibration,
                                           float tau = 0.0F,
                                           const ExecOptions& options = {});

/// Resolves keep masks for every tensor. Channels are grouped into classes
/// that must be removed together (through batch_norm, activations, pooling,
/// upsampling, concat, add and depthwise conv). A class is removed only when
/// it holds a detected zero channel, every conv that reads it reads an
/// exact zero, and it never reaches the graph input, an output or a tap.
/// Anything else is kept and listed in `reverted`.
PrunePlan propagate_masks(const Graph& g, std::span<const KeepMask> detected);

/// Slices weights per the plan. Kept channels stay in their original order.
std::pair<Graph, PruneReport> apply_prune(const Graph& g, const PrunePlan& plan);

/// Max |original - pruned| over all inputs and graph outputs.
EquivalenceReport verify_equivalence(const Graph& original, const Graph& pruned,
                                     std::span<const Tensor4> inputs, float tol);

struct PruneOptions {
  float tau = 0.0F;
  bool verify = false;
  float tolerance = 1e-5F;
};

struct PruneOutcome {
  Graph pruned;
  PruneReport report;
  std::vector<KeepMask> detected;
  PrunePlan plan;
};

/// detect -> propagate -> apply, then verification on `held_out` when
/// requested or when tau > 0.
PruneOutcome prune_zero_channels(const Graph& g,
                                 std::span<const Tensor4> calibration,
                                 std::span<const Tensor4> held_out,
                                 const PruneOptions& options = {});

/// Structured (JSON) rendering of a report.
std::string report_to_json(const PruneReport& report);

}  // namespace zcstyle
