// Copyright 2026 The zcstyle Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "zcstyle/kernels.hpp"
#include "zcstyle/tensor.hpp"

namespace zcstyle {

enum class OpKind {
  kConv2d,
  kBatchNorm,
  kRelu,
  kRelu6,
  kMaxPool,
  kAvgPool,
  kUpsample,
  kConcat,
  kAdd,
};

std::string_view to_string(OpKind op);
std::optional<OpKind> parse_op(std::string_view name);

inline bool is_activation(OpKind op) {
  return op == OpKind::kRelu || op == OpKind::kRelu6;
}

struct NodeAttrs {
  Index stride = 1;
  Index padding = 0;
  Index groups = 1;
  Index kernel = 0;  // pooling window
  Index factor = 1;  // upsampling
  float eps = kDefaultEps;  // batch_norm
};

/// One operator. Parameters are typed members; which ones are populated
/// depends on `op` (conv2d: weight and optional bias; batch_norm: the four
/// per-channel vectors).
struct Node {
  std::string id;
  OpKind op = OpKind::kRelu;
  std::vector<std::string> inputs;
  NodeAttrs attrs;

  Tensor4 weight;  // (O, I/groups, Kh, Kw)
  Eigen::ArrayXf bias;
  Eigen::ArrayXf gamma;
  Eigen::ArrayXf beta;
  Eigen::ArrayXf running_mean;
  Eigen::ArrayXf running_var;

  bool is_depthwise() const {
    return op == OpKind::kConv2d && attrs.groups > 1 &&
           weight.c() == 1 && weight.n() == attrs.groups;
  }
  Index param_count() const;
};

/// Per-channel affine map applied to the graph input: (x - mean) / std.
struct Preprocessing {
  Eigen::ArrayXf mean;
  Eigen::ArrayXf std;

  bool empty() const { return mean.size() == 0; }
};

struct GraphInput {
  std::string name = "input";
  Shape4 shape{1, 3, 0, 0};
};

/// Directed acyclic graph of operators, stored in topological order.
struct Graph {
  std::string name;
  GraphInput input;
  Preprocessing preprocessing;
  std::vector<Node> nodes;
  std::vector<std::string> outputs;
  std::vector<std::string> taps;

  const Node* find(std::string_view id) const;
  Node* find(std::string_view id);
  /// Ids of nodes that read `id`, in node order.
  std::vector<std::string> consumers(std::string_view id) const;
};

using ShapeMap = std::map<std::string, Shape4, std::less<>>;
using TensorMap = std::map<std::string, Tensor4, std::less<>>;

/// Shape of every tensor (graph input included) for the given input extent.
/// Errors name the offending node.
ShapeMap infer_shapes(const Graph& g, const Shape4& input_shape);

/// Structural checks plus shape inference at the declared input shape.
void validate(const Graph& g);

struct ExecOptions {
  int threads = 1;
};

/// Runs the graph on one image. The result holds every graph output plus
/// each requested tap. The input must have n == 1 and the declared channel
/// count; its spatial extent may differ from the declared one as long as
/// every node accepts it.
TensorMap execute(const Graph& g, const Tensor4& input,
                  std::span<const std::string> taps = {},
                  const ExecOptions& options = {});

/// Sum of all parameter elements (conv weight and bias, 4 per BN channel).
std::int64_t count_params(const Graph& g);

/// FLOPs with one multiply-accumulate counted as 2: conv
/// 2*Kh*Kw*(Cin/groups)*Cout*Hout*Wout (bias excluded); batch_norm 2 and
/// activations 1 per element; pooling kernel*kernel per output element; add
/// 1 per element; upsample and concat are free.
std::int64_t count_flops(const Graph& g, const Shape4& input_shape);

/// Parameter bytes for 32-bit weights expressed in MiB (2^20 bytes).
inline double params_megabytes(std::int64_t params) {
  return static_cast<double>(params) * 4.0 / (1024.0 * 1024.0);
}

}  // namespace zcstyle
