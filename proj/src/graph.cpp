// Copyright 2026 The zcstyle Authors.
// SPDX-License-Identifier: Apache-2.0

#include "zcstyle/graph.hpp"

#include <algorithm>
#include <array>
#include <new>
#include <set>
#include <utility>

namespace zcstyle {

namespace {

constexpr std::array<std::pair<OpKind, std::string_view>, 9> kOpNames{{
    {OpKind::kConv2d, "conv2d"},
    {OpKind::kBatchNorm, "batch_norm"},
    {OpKind::kRelu, "relu"},
    {OpKind::kRelu6, "relu6"},
    {OpKind::kMaxPool, "maxpool"},
    {OpKind::kAvgPool, "avgpool"},
    {OpKind::kUpsample, "upsample"},
    {OpKind::kConcat, "concat"},
    {OpKind::kAdd, "add"},
}};

[[noreturn]] void node_fail(ErrorKind kind, const Node& node,
                            const std::string& message) {
  fail(kind, "node '" + node.id + "' (" + std::string(to_string(node.op)) +
                 "): " + message);
}

void check_arity(const Node& node) {
  const auto count = node.inputs.size();
  const bool ok = node.op == OpKind::kConcat ? count >= 1
                  : node.op == OpKind::kAdd  ? count == 2
                                             : count == 1;
  if (!ok) {
    node_fail(ErrorKind::kShape, node,
              "unexpected input count " + std::to_string(count));
  }
}

Shape4 node_output_shape(const Node& node, std::span<const Shape4> in) {
  const Shape4& x = in.front();
  switch (node.op) {
    case OpKind::kConv2d: {
      const auto& a = node.attrs;
      if (node.weight.empty()) node_fail(ErrorKind::kShape, node, "missing weight");
      if (a.groups < 1 || x.c % a.groups != 0 ||
          node.weight.n() % a.groups != 0) {
        node_fail(ErrorKind::kShape, node,
                  "groups=" + std::to_string(a.groups) +
                      " does not divide channels (in " + std::to_string(x.c) +
                      ", out " + std::to_string(node.weight.n()) + ")");
      }
      if (node.weight.c() * a.groups != x.c) {
        node_fail(ErrorKind::kShape, node,
                  "weight " + node.weight.shape().to_string() + " expects " +
                      std::to_string(node.weight.c() * a.groups) +
                      " input channels, got " + std::to_string(x.c));
      }
      if (node.bias.size() != 0 && node.bias.size() != node.weight.n()) {
        node_fail(ErrorKind::kShape, node, "bias length mismatch");
      }
      if (a.stride < 1 || a.padding < 0) {
        node_fail(ErrorKind::kShape, node, "invalid stride/padding");
      }
      const Index span_h = x.h + 2 * a.padding - node.weight.h();
      const Index span_w = x.w + 2 * a.padding - node.weight.w();
      if (span_h < 0 || span_w < 0) {
        node_fail(ErrorKind::kShape, node,
                  "kernel larger than padded input " + x.to_string());
      }
      return {x.n, node.weight.n(), span_h / a.stride + 1,
              span_w / a.stride + 1};
    }
    case OpKind::kBatchNorm:
      if (node.gamma.size() != x.c || node.beta.size() != x.c ||
          node.running_mean.size() != x.c || node.running_var.size() != x.c) {
        node_fail(ErrorKind::kShape, node,
                  "parameter length does not match " + std::to_string(x.c) +
                      " channels");
      }
      if ((node.running_var < 0.0F).any()) {
        node_fail(ErrorKind::kInvalidArgument, node, "negative running_var");
      }
      return x;
    case OpKind::kRelu:
    case OpKind::kRelu6:
      return x;
    case OpKind::kMaxPool:
    case OpKind::kAvgPool: {
      const auto& a = node.attrs;
      if (a.kernel < 1 || a.stride < 1 || a.padding < 0 ||
          a.padding >= a.kernel) {
        node_fail(ErrorKind::kShape, node, "invalid pooling window");
      }
      const Index span_h = x.h + 2 * a.padding - a.kernel;
      const Index span_w = x.w + 2 * a.padding - a.kernel;
      if (span_h < 0 || span_w < 0) {
        node_fail(ErrorKind::kShape, node,
                  "window larger than input " + x.to_string());
      }
      return {x.n, x.c, span_h / a.stride + 1, span_w / a.stride + 1};
    }
    case OpKind::kUpsample:
      if (node.attrs.factor < 1) {
        node_fail(ErrorKind::kShape, node, "factor must be >= 1");
      }
      return {x.n, x.c, x.h * node.attrs.factor, x.w * node.attrs.factor};
    case OpKind::kConcat: {
      Shape4 out = x;
      out.c = 0;
      for (const Shape4& s : in) {
        if (s.n != x.n || s.h != x.h || s.w != x.w) {
          node_fail(ErrorKind::kShape, node,
                    "inputs " + x.to_string() + " and " + s.to_string() +
                        " differ outside the channel axis");
        }
        out.c += s.c;
      }
      return out;
    }
    case OpKind::kAdd:
      if (in[0] != in[1]) {
        node_fail(ErrorKind::kShape, node,
                  "inputs " + in[0].to_string() + " and " + in[1].to_string() +
                      " differ");
      }
      return x;
  }
  node_fail(ErrorKind::kUnsupported, node, "unknown op");
}

Tensor4 run_node(const Node& node, std::span<const Tensor4* const> in,
                 const ExecOptions& options) {
  const Tensor4& x = *in.front();
  const auto& a = node.attrs;
  switch (node.op) {
    case OpKind::kConv2d:
      return conv2d(x, node.weight,
                    std::span<const float>(node.bias.data(),
                                           static_cast<size_t>(node.bias.size())),
                    ConvParams{a.stride, a.padding, a.groups}, options.threads);
    case OpKind::kBatchNorm:
      return batch_norm(x, node.gamma, node.beta, node.running_mean,
                        node.running_var, a.eps);
    case OpKind::kRelu:
      return activation(x, Activation::kRelu);
    case OpKind::kRelu6:
      return activation(x, Activation::kRelu6);
    case OpKind::kMaxPool:
      return pool(x, PoolKind::kMax, PoolParams{a.kernel, a.stride, a.padding});
    case OpKind::kAvgPool:
      return pool(x, PoolKind::kAvg, PoolParams{a.kernel, a.stride, a.padding});
    case OpKind::kUpsample:
      return upsample_nearest(x, a.factor);
    case OpKind::kConcat:
      return concat_channels(in);
    case OpKind::kAdd:
      return add(x, *in[1]);
  }
  node_fail(ErrorKind::kUnsupported, node, "unknown op");
}

Tensor4 preprocess(const Graph& g, const Tensor4& input) {
  if (g.preprocessing.empty()) return input;
  Tensor4 out = input;
  for (Index ch = 0; ch < input.c(); ++ch) {
    out.plane(0, ch) =
        (input.plane(0, ch) - g.preprocessing.mean[ch]) / g.preprocessing.std[ch];
  }
  return out;
}

}  // namespace

std::string_view to_string(OpKind op) {
  for (const auto& [kind, name] : kOpNames) {
    if (kind == op) return name;
  }
  return "unknown";
}

std::optional<OpKind> parse_op(std::string_view name) {
  for (const auto& [kind, op_name] : kOpNames) {
    if (op_name == name) return kind;
  }
  return std::nullopt;
}

Index Node::param_count() const {
  switch (op) {
    case OpKind::kConv2d:
      return weight.size() + bias.size();
    case OpKind::kBatchNorm:
      return gamma.size() + beta.size() + running_mean.size() +
             running_var.size();
    default:
      return 0;
  }
}

const Node* Graph::find(std::string_view id) const {
  auto it = std::find_if(nodes.begin(), nodes.end(),
                         [&](const Node& n) { return n.id == id; });
  return it == nodes.end() ? nullptr : &*it;
}

Node* Graph::find(std::string_view id) {
  return const_cast<Node*>(std::as_const(*this).find(id));
}

std::vector<std::string> Graph::consumers(std::string_view id) const {
  std::vector<std::string> result;
  for (const Node& node : nodes) {
    if (std::find(node.inputs.begin(), node.inputs.end(), id) !=
        node.inputs.end()) {
      result.push_back(node.id);
    }
  }
  return result;
}

ShapeMap infer_shapes(const Graph& g, const Shape4& input_shape) {
  ShapeMap shapes;
  shapes.emplace(g.input.name, input_shape);
  std::vector<Shape4> in;
  for (const Node& node : g.nodes) {
    check_arity(node);
    in.clear();
    for (const auto& src : node.inputs) {
      auto it = shapes.find(src);
      if (it == shapes.end()) {
        node_fail(ErrorKind::kShape, node,
                  "input '" + src + "' is not produced earlier in the graph");
      }
      in.push_back(it->second);
    }
    shapes.emplace(node.id, node_output_shape(node, in));
  }
  return shapes;
}

void validate(const Graph& g) {
  if (g.nodes.empty()) fail(ErrorKind::kShape, "graph has no nodes");
  if (g.input.name.empty()) fail(ErrorKind::kShape, "graph input has no name");
  if (g.input.shape.n != 1) {
    fail(ErrorKind::kShape, "graph input batch must be 1, got " +
                                std::to_string(g.input.shape.n));
  }
  std::set<std::string, std::less<>> ids{g.input.name};
  for (const Node& node : g.nodes) {
    if (node.id.empty()) fail(ErrorKind::kShape, "node with empty id");
    if (!ids.insert(node.id).second) {
      fail(ErrorKind::kShape, "duplicate node id '" + node.id + "'");
    }
  }
  if (g.outputs.empty()) fail(ErrorKind::kShape, "graph declares no outputs");
  for (const auto& list : {g.outputs, g.taps}) {
    for (const auto& id : list) {
      if (!ids.contains(id)) {
        fail(ErrorKind::kShape, "output/tap '" + id + "' is not a node");
      }
    }
  }
  if (!g.preprocessing.empty()) {
    if (g.preprocessing.mean.size() != g.input.shape.c ||
        g.preprocessing.std.size() != g.input.shape.c) {
      fail(ErrorKind::kShape, "preprocessing length does not match input channels");
    }
    if (!(g.preprocessing.std > 0.0F).all()) {
      fail(ErrorKind::kInvalidArgument, "preprocessing std must be positive");
    }
  }
  for (const Node& node : g.nodes) {
    if (node.op == OpKind::kConv2d && !node.weight.all_finite()) {
      node_fail(ErrorKind::kInvalidArgument, node, "non-finite weight");
    }
  }
  infer_shapes(g, g.input.shape);
}

TensorMap execute(const Graph& g, const Tensor4& input,
                  std::span<const std::string> taps,
                  const ExecOptions& options) {
  if (input.n() != 1 || input.c() != g.input.shape.c) {
    fail(ErrorKind::kShape, "input " + input.shape().to_string() +
                                " does not match declared " +
                                g.input.shape.to_string());
  }
  std::set<std::string, std::less<>> keep(g.outputs.begin(), g.outputs.end());
  for (const auto& tap : taps) {
    if (tap != g.input.name && g.find(tap) == nullptr) {
      fail(ErrorKind::kInvalidArgument, "unknown tap '" + tap + "'");
    }
    keep.insert(tap);
  }

  // Remaining reads per tensor; a tensor is dropped after its last read.
  std::map<std::string, int, std::less<>> pending;
  for (const Node& node : g.nodes) {
    for (const auto& src : node.inputs) ++pending[src];
  }

  TensorMap live;
  TensorMap result;
  try {
    live.emplace(g.input.name, preprocess(g, input));
    std::vector<const Tensor4*> in;
    for (const Node& node : g.nodes) {
      check_arity(node);
      in.clear();
      for (const auto& src : node.inputs) {
        auto it = live.find(src);
        if (it == live.end()) {
          node_fail(ErrorKind::kShape, node,
                    "input '" + src + "' is not available");
        }
        in.push_back(&it->second);
      }
      Tensor4 out;
      try {
        out = run_node(node, in, options);
      } catch (const std::bad_alloc&) {
        throw;
      } catch (const Error& e) {
        if (std::string_view(e.what()).starts_with("node '")) throw;
        node_fail(e.kind(), node, e.what());
      }
      for (const auto& src : node.inputs) {
        if (--pending[src] == 0) {
          if (keep.contains(src)) {
            result.insert_or_assign(src, std::move(live.at(src)));
          }
          live.erase(src);
        }
      }
      live.insert_or_assign(node.id, std::move(out));
    }
  } catch (const std::bad_alloc&) {
    fail(ErrorKind::kResource, "out of memory while executing graph '" +
                                   g.name + "' on input " +
                                   input.shape().to_string());
  }
  for (auto& [id, tensor] : live) {
    if (keep.contains(id)) result.insert_or_assign(id, std::move(tensor));
  }
  return result;
}

std::int64_t count_params(const Graph& g) {
  std::int64_t total = 0;
  for (const Node& node : g.nodes) total += node.param_count();
  return total;
}

std::int64_t count_flops(const Graph& g, const Shape4& input_shape) {
  const ShapeMap shapes = infer_shapes(g, input_shape);
  std::int64_t total = 0;
  for (const Node& node : g.nodes) {
    const Shape4& out = shapes.at(node.id);
    switch (node.op) {
      case OpKind::kConv2d:
        total += 2 * node.weight.h() * node.weight.w() * node.weight.c() *
                 out.count();
        break;
      case OpKind::kBatchNorm:
        total += 2 * out.count();
        break;
      case OpKind::kRelu:
      case OpKind::kRelu6:
      case OpKind::kAdd:
        total += out.count();
        break;
      case OpKind::kMaxPool:
      case OpKind::kAvgPool:
        total += node.attrs.kernel * node.attrs.kernel * out.count();
        break;
      case OpKind::kUpsample:
      case OpKind::kConcat:
        break;
    }
  }
  return total;
}

}  // namespace zcstyle
