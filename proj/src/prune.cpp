// Copyright 2026 The zcstyle Authors.
// SPDX-License-Identifier: Apache-2.0

#include "zcstyle/prune.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include <nlohmann/json.hpp>

namespace zcstyle {

namespace {

class DisjointSets {
 public:
  explicit DisjointSets(Index size) : parent_(static_cast<size_t>(size)) {
    std::iota(parent_.begin(), parent_.end(), Index{0});
  }

  Index find(Index x) {
    while (parent_[x] != x) {
      parent_[x] = parent_[parent_[x]];
      x = parent_[x];
    }
    return x;
  }

  // The smaller root wins so class ids do not depend on union order.
  void unite(Index a, Index b) {
    a = find(a);
    b = find(b);
    if (a == b) return;
    if (b < a) std::swap(a, b);
    parent_[b] = a;
  }

 private:
  std::vector<Index> parent_;
};

bool is_grouped_conv(const Node& node) {
  return node.op == OpKind::kConv2d && node.attrs.groups > 1 &&
         !node.is_depthwise();
}

// Channel positions of every tensor flattened into one index space.
struct PositionSpace {
  std::vector<std::string> ids;  // 0 is the graph input
  std::map<std::string, Index, std::less<>> index;
  std::vector<Index> offset;
  std::vector<Index> width;

  explicit PositionSpace(const Graph& g) {
    const ShapeMap shapes = infer_shapes(g, g.input.shape);
    ids.push_back(g.input.name);
    for (const Node& node : g.nodes) ids.push_back(node.id);
    Index total = 0;
    for (Index t = 0; t < static_cast<Index>(ids.size()); ++t) {
      index[ids[t]] = t;
      offset.push_back(total);
      width.push_back(shapes.at(ids[t]).c);
      total += width.back();
    }
    offset.push_back(total);
  }

  Index total() const { return offset.back(); }
  Index at(Index tensor, Index channel) const { return offset[tensor] + channel; }
  Index tensor_of(std::string_view id) const { return index.find(id)->second; }
};

Tensor4 slice_conv_weight(const Tensor4& w, const std::vector<Index>& keep_out,
                          const std::vector<Index>& keep_in) {
  const Index in_count = keep_in.empty() ? w.c() : static_cast<Index>(keep_in.size());
  Tensor4 out(Shape4{static_cast<Index>(keep_out.size()), in_count, w.h(), w.w()});
  for (Index o = 0; o < out.n(); ++o) {
    for (Index i = 0; i < in_count; ++i) {
      const Index src_i = keep_in.empty() ? i : keep_in[i];
      out.plane(o, i) = w.plane(keep_out[o], src_i);
    }
  }
  return out;
}

Eigen::ArrayXf slice_vector(const Eigen::ArrayXf& v, const std::vector<Index>& keep) {
  if (v.size() == 0) return v;
  return v(keep);
}

}  // namespace

Index KeepMask::zero_count() const {
  return static_cast<Index>(std::count(bits.begin(), bits.end(), 0));
}

std::string KeepMask::to_string() const {
  std::string s;
  s.reserve(bits.size());
  for (auto b : bits) s.push_back(b ? '1' : '0');
  return s;
}

bool PrunePlan::is_identity() const {
  return std::all_of(masks.begin(), masks.end(), [](const auto& kv) {
    return std::all_of(kv.second.begin(), kv.second.end(),
                       [](std::uint8_t b) { return b != 0; });
  });
}

std::vector<Index> PrunePlan::kept(std::string_view tensor_id) const {
  auto it = masks.find(tensor_id);
  if (it == masks.end()) {
    fail(ErrorKind::kInvalidArgument,
         "plan has no mask for '" + std::string(tensor_id) + "'");
  }
  std::vector<Index> result;
  for (Index c = 0; c < static_cast<Index>(it->second.size()); ++c) {
    if (it->second[c]) result.push_back(c);
  }
  return result;
}

Index PruneReport::channels_removed() const {
  Index total = 0;
  for (const auto& n : nodes) total += n.before - n.after;
  return total;
}

std::vector<KeepMask> detect_zero_channels(const Graph& g,
                                           std::span<const Tensor4> calibration,
                                           float tau, const ExecOptions& options) {
  if (calibration.empty()) {
    fail(ErrorKind::kInvalidArgument, "calibration set is empty");
  }
  if (!(tau >= 0.0F)) fail(ErrorKind::kInvalidArgument, "tau must be >= 0");

  std::vector<std::string> anchors;
  for (const Node& node : g.nodes) {
    if (is_activation(node.op)) anchors.push_back(node.id);
  }
  std::vector<Eigen::ArrayXf> peak(anchors.size());
  for (const Tensor4& input : calibration) {
    if (input.shape() != g.input.shape) {
      fail(ErrorKind::kShape, "calibration input " + input.shape().to_string() +
                                  " does not match graph input " +
                                  g.input.shape.to_string());
    }
    const TensorMap acts = execute(g, input, anchors, options);
    for (size_t k = 0; k < anchors.size(); ++k) {
      const auto channel_peak =
          acts.at(anchors[k]).channels().array().abs().rowwise().maxCoeff().eval();
      peak[k] = peak[k].size() == 0 ? channel_peak : peak[k].max(channel_peak).eval();
    }
  }

  std::vector<KeepMask> masks;
  for (size_t k = 0; k < anchors.size(); ++k) {
    KeepMask mask{anchors[k], {}, false};
    mask.bits.resize(static_cast<size_t>(peak[k].size()));
    for (Index c = 0; c < peak[k].size(); ++c) mask.bits[c] = peak[k][c] > tau ? 1 : 0;
    if (mask.zero_count() == mask.size() && mask.size() > 0) {
      mask.all_dead = true;
      mask.bits[0] = 1;
    }
    masks.push_back(std::move(mask));
  }
  return masks;
}

PrunePlan propagate_masks(const Graph& g, std::span<const KeepMask> detected) {
  const PositionSpace space(g);
  const Index total = space.total();

  std::vector<std::uint8_t> zero(static_cast<size_t>(total), 0);
  std::vector<std::uint8_t> anchor(static_cast<size_t>(total), 0);
  std::map<std::string, const KeepMask*, std::less<>> by_node;
  for (const KeepMask& mask : detected) {
    const Node* node = g.find(mask.node_id);
    if (node == nullptr) {
      fail(ErrorKind::kInvalidArgument, "mask anchored to unknown node '" +
                                            mask.node_id + "'");
    }
    if (!is_activation(node->op)) {
      fail(ErrorKind::kInvalidArgument, "mask anchored to non-activation node '" +
                                            mask.node_id + "'");
    }
    const Index t = space.tensor_of(mask.node_id);
    if (mask.size() != space.width[t]) {
      fail(ErrorKind::kShape, "mask for '" + mask.node_id + "' has " +
                                  std::to_string(mask.size()) + " bits, tensor has " +
                                  std::to_string(space.width[t]) + " channels");
    }
    by_node[mask.node_id] = &mask;
  }

  DisjointSets sets(total);
  std::vector<std::string> block(static_cast<size_t>(total));
  auto block_position = [&](Index pos, const std::string& reason) {
    if (block[pos].empty()) block[pos] = reason;
  };

  for (Index c = 0; c < space.width[0]; ++c) {
    block_position(space.at(0, c), "reaches the graph input");
  }
  for (const auto* list : {&g.outputs, &g.taps}) {
    for (const auto& id : *list) {
      const Index t = space.tensor_of(id);
      for (Index c = 0; c < space.width[t]; ++c) {
        block_position(space.at(t, c), "reaches graph output or tap '" + id + "'");
      }
    }
  }

  for (const Node& node : g.nodes) {
    const Index t = space.tensor_of(node.id);
    const Index in0 = space.tensor_of(node.inputs.front());
    switch (node.op) {
      case OpKind::kRelu:
      case OpKind::kRelu6: {
        auto it = by_node.find(node.id);
        for (Index c = 0; c < space.width[t]; ++c) {
          const bool detected_zero = it != by_node.end() && it->second->bits[c] == 0;
          anchor[space.at(t, c)] = detected_zero ? 1 : 0;
          zero[space.at(t, c)] = detected_zero || zero[space.at(in0, c)];
          sets.unite(space.at(t, c), space.at(in0, c));
        }
        break;
      }
      case OpKind::kMaxPool:
      case OpKind::kAvgPool:
      case OpKind::kUpsample:
        for (Index c = 0; c < space.width[t]; ++c) {
          zero[space.at(t, c)] = zero[space.at(in0, c)];
          sets.unite(space.at(t, c), space.at(in0, c));
        }
        break;
      case OpKind::kBatchNorm:
        for (Index c = 0; c < space.width[t]; ++c) {
          sets.unite(space.at(t, c), space.at(in0, c));
        }
        break;
      case OpKind::kConcat: {
        Index offset = 0;
        for (const auto& src : node.inputs) {
          const Index s = space.tensor_of(src);
          for (Index c = 0; c < space.width[s]; ++c) {
            zero[space.at(t, offset + c)] = zero[space.at(s, c)];
            sets.unite(space.at(t, offset + c), space.at(s, c));
          }
          offset += space.width[s];
        }
        break;
      }
      case OpKind::kAdd: {
        const Index in1 = space.tensor_of(node.inputs[1]);
        for (Index c = 0; c < space.width[t]; ++c) {
          zero[space.at(t, c)] = zero[space.at(in0, c)] && zero[space.at(in1, c)];
          sets.unite(space.at(t, c), space.at(in0, c));
          sets.unite(space.at(t, c), space.at(in1, c));
        }
        break;
      }
      case OpKind::kConv2d:
        if (node.is_depthwise()) {
          for (Index c = 0; c < space.width[t]; ++c) {
            sets.unite(space.at(t, c), space.at(in0, c));
          }
        } else if (is_grouped_conv(node)) {
          for (Index c = 0; c < space.width[in0]; ++c) {
            block_position(space.at(in0, c), "read by grouped conv '" + node.id + "'");
          }
          for (Index c = 0; c < space.width[t]; ++c) {
            block_position(space.at(t, c), "produced by grouped conv '" + node.id + "'");
          }
        } else {
          // Input slices can be dropped only where the input is exactly zero.
          for (Index c = 0; c < space.width[in0]; ++c) {
            if (!zero[space.at(in0, c)]) {
              block_position(space.at(in0, c), "read by conv '" + node.id +
                                                   "' where it is not provably zero");
            }
          }
        }
        break;
    }
  }

  // Aggregate per class.
  std::vector<std::uint8_t> class_anchor(static_cast<size_t>(total), 0);
  std::vector<std::string> class_block(static_cast<size_t>(total));
  for (Index p = 0; p < total; ++p) {
    const Index root = sets.find(p);
    class_anchor[root] |= anchor[p];
    if (class_block[root].empty() && !block[p].empty()) class_block[root] = block[p];
  }
  auto removable = [&](Index p) {
    const Index root = sets.find(p);
    return class_anchor[root] && class_block[root].empty();
  };

  // Never empty a tensor: pin every class touching one that would vanish.
  for (bool changed = true; changed;) {
    changed = false;
    for (Index t = 0; t < static_cast<Index>(space.ids.size()); ++t) {
      if (space.width[t] == 0) continue;
      bool any_kept = false;
      for (Index c = 0; c < space.width[t] && !any_kept; ++c) {
        any_kept = !removable(space.at(t, c));
      }
      if (any_kept) continue;
      for (Index c = 0; c < space.width[t]; ++c) {
        class_block[sets.find(space.at(t, c))] =
            "would remove every channel of '" + space.ids[t] + "'";
      }
      changed = true;
    }
  }

  PrunePlan plan;
  for (Index t = 0; t < static_cast<Index>(space.ids.size()); ++t) {
    std::vector<std::uint8_t> bits(static_cast<size_t>(space.width[t]));
    for (Index c = 0; c < space.width[t]; ++c) {
      bits[c] = removable(space.at(t, c)) ? 0 : 1;
    }
    plan.masks.emplace(space.ids[t], std::move(bits));
  }
  for (const Node& node : g.nodes) {
    const auto& mask = by_node.find(node.id);
    if (mask == by_node.end()) continue;
    const Index t = space.tensor_of(node.id);
    for (Index c = 0; c < space.width[t]; ++c) {
      const Index p = space.at(t, c);
      if (mask->second->bits[c] == 0 && !removable(p)) {
        plan.reverted.push_back({node.id, c, class_block[sets.find(p)]});
      }
    }
  }
  for (const Node& node : g.nodes) {
    if (node.op == OpKind::kConv2d) {
      SliceDirective d;
      d.keep_out = plan.kept(node.id);
      if (!node.is_depthwise()) d.keep_in = plan.kept(node.inputs.front());
      plan.slices.emplace(node.id, std::move(d));
    } else if (node.op == OpKind::kBatchNorm) {
      plan.slices.emplace(node.id, SliceDirective{plan.kept(node.id), {}});
    }
  }
  return plan;
}

std::pair<Graph, PruneReport> apply_prune(const Graph& g, const PrunePlan& plan) {
  const ShapeMap before = infer_shapes(g, g.input.shape);
  Graph pruned = g;
  for (Node& node : pruned.nodes) {
    if (!plan.masks.contains(node.id)) {
      fail(ErrorKind::kInvalidArgument, "plan does not cover node '" + node.id + "'");
    }
    if (plan.masks.at(node.id).size() != static_cast<size_t>(before.at(node.id).c)) {
      fail(ErrorKind::kInvalidArgument,
           "plan mask width for '" + node.id + "' does not match the graph");
    }
    if (node.op != OpKind::kConv2d && node.op != OpKind::kBatchNorm) continue;
    auto it = plan.slices.find(node.id);
    if (it == plan.slices.end()) {
      fail(ErrorKind::kInvalidArgument, "plan has no slice directive for '" + node.id + "'");
    }
    const SliceDirective& d = it->second;
    if (node.op == OpKind::kConv2d) {
      const bool depthwise = node.is_depthwise();
      node.weight = slice_conv_weight(node.weight, d.keep_out,
                                      depthwise ? std::vector<Index>{} : d.keep_in);
      node.bias = slice_vector(node.bias, d.keep_out);
      if (depthwise) node.attrs.groups = static_cast<Index>(d.keep_out.size());
    } else {
      node.gamma = slice_vector(node.gamma, d.keep_out);
      node.beta = slice_vector(node.beta, d.keep_out);
      node.running_mean = slice_vector(node.running_mean, d.keep_out);
      node.running_var = slice_vector(node.running_var, d.keep_out);
    }
  }
  validate(pruned);

  const ShapeMap after = infer_shapes(pruned, pruned.input.shape);
  for (const auto* list : {&g.outputs, &g.taps}) {
    for (const auto& id : *list) {
      if (before.at(id) != after.at(id)) {
        fail(ErrorKind::kShape, "pruning changed the shape of '" + id + "'");
      }
    }
  }

  PruneReport report;
  for (const Node& node : g.nodes) {
    const Index b = before.at(node.id).c;
    const Index a = after.at(node.id).c;
    if (a != b) report.nodes.push_back({node.id, b, a});
  }
  report.params_before = count_params(g);
  report.params_after = count_params(pruned);
  report.flops_before = count_flops(g, g.input.shape);
  report.flops_after = count_flops(pruned, pruned.input.shape);
  report.reverted = plan.reverted;
  return {std::move(pruned), std::move(report)};
}

EquivalenceReport verify_equivalence(const Graph& original, const Graph& pruned,
                                     std::span<const Tensor4> inputs, float tol) {
  EquivalenceReport report;
  report.tolerance = tol;
  report.inputs = static_cast<Index>(inputs.size());
  for (const Tensor4& input : inputs) {
    const TensorMap a = execute(original, input);
    const TensorMap b = execute(pruned, input);
    for (const auto& id : original.outputs) {
      const auto it = b.find(id);
      if (it == b.end()) {
        fail(ErrorKind::kShape, "pruned graph lacks output '" + id + "'");
      }
      const Tensor4& x = a.at(id);
      const Tensor4& y = it->second;
      if (x.shape() != y.shape()) {
        fail(ErrorKind::kShape, "output '" + id + "' changed shape from " +
                                    x.shape().to_string() + " to " +
                                    y.shape().to_string());
      }
      if (x.size() > 0) {
        report.max_deviation = std::max(
            report.max_deviation,
            static_cast<double>((x.values() - y.values()).abs().maxCoeff()));
      }
    }
  }
  report.passed = report.max_deviation <= tol;
  return report;
}

PruneOutcome prune_zero_channels(const Graph& g,
                                 std::span<const Tensor4> calibration,
                                 std::span<const Tensor4> held_out,
                                 const PruneOptions& options) {
  PruneOutcome outcome;
  outcome.detected = detect_zero_channels(g, calibration, options.tau);
  outcome.plan = propagate_masks(g, outcome.detected);
  auto [pruned, report] = apply_prune(g, outcome.plan);
  for (const KeepMask& mask : outcome.detected) {
    if (mask.all_dead) {
      report.warnings.push_back("every channel of '" + mask.node_id +
                                "' is zero; channel 0 kept");
    }
  }
  if (options.verify || options.tau > 0.0F) {
    if (held_out.empty()) {
      fail(ErrorKind::kInvalidArgument, "verification needs held-out inputs");
    }
    report.verification =
        verify_equivalence(g, pruned, held_out, options.tolerance);
    if (!report.verification->passed) {
      report.warnings.push_back(
          "held-out deviation exceeds tolerance; zero channels are not "
          "data-agnostic for this model");
    }
  }
  outcome.pruned = std::move(pruned);
  outcome.report = std::move(report);
  return outcome;
}

std::string report_to_json(const PruneReport& report) {
  nlohmann::ordered_json doc;
  doc["report"] = "zero-channel-prune";
  nlohmann::ordered_json nodes = nlohmann::ordered_json::array();
  for (const auto& n : report.nodes) {
    nodes.push_back({{"node", n.node_id}, {"channels_before", n.before},
                     {"channels_after", n.after}});
  }
  doc["nodes"] = std::move(nodes);
  doc["channels_removed"] = report.channels_removed();
  doc["params_before"] = report.params_before;
  doc["params_after"] = report.params_after;
  doc["params_mib_before"] = params_megabytes(report.params_before);
  doc["params_mib_after"] = params_megabytes(report.params_after);
  doc["flops_before"] = report.flops_before;
  doc["flops_after"] = report.flops_after;
  nlohmann::ordered_json reverted = nlohmann::ordered_json::array();
  for (const auto& r : report.reverted) {
    reverted.push_back({{"node", r.node_id}, {"channel", r.channel}, {"reason", r.reason}});
  }
  doc["reverted"] = std::move(reverted);
  if (report.verification) {
    const auto& v = *report.verification;
    doc["verification"] = {{"max_deviation", v.max_deviation},
                           {"tolerance", v.tolerance},
                           {"inputs", v.inputs},
                           {"passed", v.passed}};
  } else {
    doc["verification"] = nullptr;
  }
  doc["warnings"] = report.warnings;
  return doc.dump(2) + "\n";
}

}  // namespace zcstyle
