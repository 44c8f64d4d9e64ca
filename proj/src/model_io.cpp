// Copyright 2026 The zcstyle Authors.
// SPDX-License-Identifier: Apache-2.0

#include "zcstyle/model_io.hpp"

#include <algorithm>
#include <bit>
#include <fstream>
#include <iterator>
#include <set>

#include <nlohmann/json.hpp>

namespace zcstyle {

namespace {

using Json = nlohmann::ordered_json;

struct BlobRange {
  std::string name;
  std::uint64_t begin = 0;
  std::uint64_t end = 0;
};

[[noreturn]] void parse_fail(const std::string& message) {
  fail(ErrorKind::kParse, message);
}

void reject_unknown(const Json& obj, std::initializer_list<std::string_view> allowed,
                    const std::string& where) {
  if (!obj.is_object()) parse_fail(where + ": expected an object");
  for (const auto& [key, value] : obj.items()) {
    if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) {
      parse_fail(where + ": unknown field '" + key + "'");
    }
  }
}

template <typename T>
T get_required(const Json& obj, const char* key, const std::string& where) {
  if (!obj.contains(key)) parse_fail(where + ": missing field '" + key + "'");
  try {
    return obj.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    parse_fail(where + ": field '" + key + "' has the wrong type");
  }
}

std::vector<std::string> string_list(const Json& obj, const char* key,
                                     const std::string& where) {
  if (!obj.contains(key)) return {};
  return get_required<std::vector<std::string>>(obj, key, where);
}

std::vector<float> float_list(const Json& value, const std::string& where) {
  try {
    return value.get<std::vector<float>>();
  } catch (const nlohmann::json::exception&) {
    parse_fail(where + ": expected a list of numbers");
  }
}

Eigen::ArrayXf to_array(const std::vector<float>& v) {
  return Eigen::Map<const Eigen::ArrayXf>(v.data(), static_cast<Index>(v.size()));
}

float read_le_float(std::span<const std::uint8_t> bytes, std::uint64_t at) {
  const std::uint32_t word = static_cast<std::uint32_t>(bytes[at]) |
                             static_cast<std::uint32_t>(bytes[at + 1]) << 8 |
                             static_cast<std::uint32_t>(bytes[at + 2]) << 16 |
                             static_cast<std::uint32_t>(bytes[at + 3]) << 24;
  return std::bit_cast<float>(word);
}

void append_le_float(std::vector<std::uint8_t>& out, float value) {
  const auto word = std::bit_cast<std::uint32_t>(value);
  out.push_back(static_cast<std::uint8_t>(word));
  out.push_back(static_cast<std::uint8_t>(word >> 8));
  out.push_back(static_cast<std::uint8_t>(word >> 16));
  out.push_back(static_cast<std::uint8_t>(word >> 24));
}

class BlobReader {
 public:
  explicit BlobReader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  Eigen::ArrayXf read(const Json& ref, const std::string& name,
                      std::vector<Index>& shape) {
    reject_unknown(ref, {"offset", "shape"}, "blob '" + name + "'");
    const auto offset = get_required<std::uint64_t>(ref, "offset", "blob '" + name + "'");
    shape = get_required<std::vector<Index>>(ref, "shape", "blob '" + name + "'");
    std::uint64_t count = 1;
    for (Index d : shape) {
      if (d < 0) fail(ErrorKind::kRange, "blob '" + name + "': negative dimension");
      count *= static_cast<std::uint64_t>(d);
    }
    const std::uint64_t end = offset + 4 * count;
    if (offset % 4 != 0) {
      fail(ErrorKind::kRange, "blob '" + name + "': offset " +
                                  std::to_string(offset) + " is not 4-aligned");
    }
    if (end > bytes_.size() || end < offset) {
      fail(ErrorKind::kRange, "blob '" + name + "': bytes [" +
                                  std::to_string(offset) + ", " +
                                  std::to_string(end) + ") exceed weights file of " +
                                  std::to_string(bytes_.size()) + " bytes");
    }
    ranges_.push_back({name, offset, end});
    Eigen::ArrayXf values(static_cast<Index>(count));
    for (std::uint64_t i = 0; i < count; ++i) {
      values[static_cast<Index>(i)] = read_le_float(bytes_, offset + 4 * i);
    }
    return values;
  }

  void check_tiling() {
    std::sort(ranges_.begin(), ranges_.end(),
              [](const BlobRange& a, const BlobRange& b) { return a.begin < b.begin; });
    std::uint64_t total = 0;
    for (size_t i = 0; i < ranges_.size(); ++i) {
      if (i > 0 && ranges_[i].begin < ranges_[i - 1].end) {
        fail(ErrorKind::kRange, "blob '" + ranges_[i].name + "' overlaps blob '" +
                                    ranges_[i - 1].name + "'");
      }
      total += ranges_[i].end - ranges_[i].begin;
    }
    if (total != bytes_.size()) {
      fail(ErrorKind::kRange, "weights file has " + std::to_string(bytes_.size()) +
                                  " bytes but blobs cover " + std::to_string(total));
    }
  }

 private:
  std::span<const std::uint8_t> bytes_;
  std::vector<BlobRange> ranges_;
};

Shape4 shape4_from(const std::vector<Index>& dims, const std::string& where) {
  if (dims.size() != 4) parse_fail(where + ": expected a rank-4 shape");
  return {dims[0], dims[1], dims[2], dims[3]};
}

void read_attrs(const Json& attrs, Node& node) {
  const std::string where = "node '" + node.id + "' attrs";
  switch (node.op) {
    case OpKind::kConv2d:
      reject_unknown(attrs, {"stride", "padding", "groups"}, where);
      break;
    case OpKind::kBatchNorm:
      reject_unknown(attrs, {"eps"}, where);
      break;
    case OpKind::kMaxPool:
    case OpKind::kAvgPool:
      reject_unknown(attrs, {"kernel", "stride", "padding"}, where);
      if (!attrs.contains("kernel")) parse_fail(where + ": missing 'kernel'");
      break;
    case OpKind::kUpsample:
      reject_unknown(attrs, {"factor"}, where);
      if (!attrs.contains("factor")) parse_fail(where + ": missing 'factor'");
      break;
    default:
      reject_unknown(attrs, {}, where);
  }
  auto& a = node.attrs;
  a.stride = attrs.value("stride", a.stride);
  a.padding = attrs.value("padding", a.padding);
  a.groups = attrs.value("groups", a.groups);
  a.kernel = attrs.value("kernel", a.kernel);
  a.factor = attrs.value("factor", a.factor);
  a.eps = attrs.value("eps", a.eps);
  if (node.op == OpKind::kMaxPool || node.op == OpKind::kAvgPool) {
    if (!attrs.contains("stride")) a.stride = a.kernel;
  }
}

void read_params(const Json& params, Node& node, BlobReader& reader) {
  const std::string where = "node '" + node.id + "' params";
  auto vector_param = [&](const char* key) {
    std::vector<Index> shape;
    Eigen::ArrayXf v = reader.read(params.at(key), node.id + "." + key, shape);
    if (shape.size() != 1) parse_fail(where + ": '" + key + "' must be rank 1");
    return v;
  };
  switch (node.op) {
    case OpKind::kConv2d: {
      reject_unknown(params, {"weight", "bias"}, where);
      if (!params.contains("weight")) parse_fail(where + ": missing 'weight'");
      std::vector<Index> shape;
      Eigen::ArrayXf w = reader.read(params.at("weight"), node.id + ".weight", shape);
      node.weight = Tensor4(shape4_from(shape, where + " weight"), std::move(w));
      if (params.contains("bias")) node.bias = vector_param("bias");
      break;
    }
    case OpKind::kBatchNorm:
      reject_unknown(params, {"gamma", "beta", "running_mean", "running_var"}, where);
      for (const char* key : {"gamma", "beta", "running_mean", "running_var"}) {
        if (!params.contains(key)) parse_fail(where + ": missing '" + key + "'");
      }
      node.gamma = vector_param("gamma");
      node.beta = vector_param("beta");
      node.running_mean = vector_param("running_mean");
      node.running_var = vector_param("running_var");
      break;
    default:
      reject_unknown(params, {}, where);
  }
}

Json blob_ref(std::vector<std::uint8_t>& out, const float* data, Index count,
              const std::vector<Index>& shape) {
  Json ref;
  ref["offset"] = out.size();
  ref["shape"] = shape;
  for (Index i = 0; i < count; ++i) append_le_float(out, data[i]);
  return ref;
}

Json vector_ref(std::vector<std::uint8_t>& out, const Eigen::ArrayXf& v) {
  return blob_ref(out, v.data(), v.size(), {v.size()});
}

std::vector<float> to_vector(const Eigen::ArrayXf& v) {
  return {v.data(), v.data() + v.size()};
}

}  // namespace

Graph load_model(std::string_view manifest,
                 std::span<const std::uint8_t> weights) {
  Json doc;
  try {
    doc = Json::parse(manifest);
  } catch (const nlohmann::json::parse_error& e) {
    parse_fail(std::string("manifest is not valid JSON: ") + e.what());
  }
  reject_unknown(doc, {"format_version", "name", "input", "preprocessing",
                       "outputs", "taps", "nodes"},
                 "manifest");
  const int version = get_required<int>(doc, "format_version", "manifest");
  if (version != kModelFormatVersion) {
    parse_fail("unsupported format_version " + std::to_string(version));
  }

  Graph g;
  g.name = doc.value("name", std::string{});
  const Json& input = doc.contains("input") ? doc.at("input") : Json::object();
  reject_unknown(input, {"name", "shape"}, "input");
  g.input.name = get_required<std::string>(input, "name", "input");
  g.input.shape = shape4_from(get_required<std::vector<Index>>(input, "shape", "input"),
                              "input");
  if (doc.contains("preprocessing") && !doc.at("preprocessing").is_null()) {
    const Json& pre = doc.at("preprocessing");
    reject_unknown(pre, {"mean", "std"}, "preprocessing");
    if (!pre.contains("mean") || !pre.contains("std")) {
      parse_fail("preprocessing: needs both 'mean' and 'std'");
    }
    g.preprocessing.mean = to_array(float_list(pre.at("mean"), "preprocessing.mean"));
    g.preprocessing.std = to_array(float_list(pre.at("std"), "preprocessing.std"));
  }
  g.outputs = string_list(doc, "outputs", "manifest");
  g.taps = string_list(doc, "taps", "manifest");

  BlobReader reader(weights);
  const Json& nodes = doc.contains("nodes") ? doc.at("nodes") : Json::array();
  if (!nodes.is_array()) parse_fail("manifest: 'nodes' must be a list");
  for (const Json& item : nodes) {
    reject_unknown(item, {"id", "op", "inputs", "attrs", "params"}, "node");
    Node node;
    node.id = get_required<std::string>(item, "id", "node");
    const std::string where = "node '" + node.id + "'";
    const auto op_name = get_required<std::string>(item, "op", where);
    const auto op = parse_op(op_name);
    if (!op) fail(ErrorKind::kUnsupported, where + ": unsupported op '" + op_name + "'");
    node.op = *op;
    node.inputs = get_required<std::vector<std::string>>(item, "inputs", where);
    read_attrs(item.contains("attrs") ? item.at("attrs") : Json::object(), node);
    read_params(item.contains("params") ? item.at("params") : Json::object(), node,
                reader);
    g.nodes.push_back(std::move(node));
  }
  reader.check_tiling();
  validate(g);
  return g;
}

ModelBytes save_model(const Graph& g) {
  validate(g);
  ModelBytes out;
  Json doc;
  doc["format_version"] = kModelFormatVersion;
  doc["name"] = g.name;
  doc["input"] = {{"name", g.input.name},
                  {"shape", std::vector<Index>{g.input.shape.n, g.input.shape.c,
                                               g.input.shape.h, g.input.shape.w}}};
  if (g.preprocessing.empty()) {
    doc["preprocessing"] = nullptr;
  } else {
    doc["preprocessing"] = {{"mean", to_vector(g.preprocessing.mean)},
                            {"std", to_vector(g.preprocessing.std)}};
  }
  doc["outputs"] = g.outputs;
  doc["taps"] = g.taps;
  Json nodes = Json::array();
  for (const Node& node : g.nodes) {
    Json item;
    item["id"] = node.id;
    item["op"] = std::string(to_string(node.op));
    item["inputs"] = node.inputs;
    Json attrs = Json::object();
    Json params = Json::object();
    const auto& a = node.attrs;
    switch (node.op) {
      case OpKind::kConv2d: {
        attrs = {{"stride", a.stride}, {"padding", a.padding}, {"groups", a.groups}};
        const Shape4& s = node.weight.shape();
        params["weight"] = blob_ref(out.weights, node.weight.data(), node.weight.size(),
                                    {s.n, s.c, s.h, s.w});
        if (node.bias.size() > 0) params["bias"] = vector_ref(out.weights, node.bias);
        break;
      }
      case OpKind::kBatchNorm:
        attrs = {{"eps", a.eps}};
        params["gamma"] = vector_ref(out.weights, node.gamma);
        params["beta"] = vector_ref(out.weights, node.beta);
        params["running_mean"] = vector_ref(out.weights, node.running_mean);
        params["running_var"] = vector_ref(out.weights, node.running_var);
        break;
      case OpKind::kMaxPool:
      case OpKind::kAvgPool:
        attrs = {{"kernel", a.kernel}, {"stride", a.stride}, {"padding", a.padding}};
        break;
      case OpKind::kUpsample:
        attrs = {{"factor", a.factor}};
        break;
      default:
        break;
    }
    item["attrs"] = std::move(attrs);
    item["params"] = std::move(params);
    nodes.push_back(std::move(item));
  }
  doc["nodes"] = std::move(nodes);
  out.manifest = doc.dump(2) + "\n";
  return out;
}

Graph load_model_dir(const std::filesystem::path& dir) {
  const auto manifest_path = dir / kManifestFileName;
  const auto weights_path = dir / kWeightsFileName;
  std::ifstream manifest_in(manifest_path, std::ios::binary);
  if (!manifest_in) fail(ErrorKind::kIo, "cannot open " + manifest_path.string());
  std::string manifest((std::istreambuf_iterator<char>(manifest_in)),
                       std::istreambuf_iterator<char>());
  std::ifstream weights_in(weights_path, std::ios::binary);
  if (!weights_in) fail(ErrorKind::kIo, "cannot open " + weights_path.string());
  std::vector<std::uint8_t> weights((std::istreambuf_iterator<char>(weights_in)),
                                    std::istreambuf_iterator<char>());
  return load_model(manifest, weights);
}

void save_model_dir(const Graph& g, const std::filesystem::path& dir) {
  const ModelBytes bytes = save_model(g);
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) fail(ErrorKind::kIo, "cannot create " + dir.string() + ": " + ec.message());
  std::ofstream manifest_out(dir / kManifestFileName, std::ios::binary);
  std::ofstream weights_out(dir / kWeightsFileName, std::ios::binary);
  if (!manifest_out || !weights_out) {
    fail(ErrorKind::kIo, "cannot write model files under " + dir.string());
  }
  manifest_out << bytes.manifest;
  weights_out.write(reinterpret_cast<const char*>(bytes.weights.data()),
                    static_cast<std::streamsize>(bytes.weights.size()));
  if (!manifest_out || !weights_out) {
    fail(ErrorKind::kIo, "short write under " + dir.string());
  }
}

}  // namespace zcstyle
