// Copyright 2026 The zcstyle Authors.
// SPDX-License-Identifier: Apache-2.0

#include "support/fixtures.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace zcstyle::testing {

Tensor4 random_tensor(const Shape4& shape, std::mt19937_64& rng, float stddev, float mean) {
  std::normal_distribution<float> dist(mean, stddev);
  Tensor4 t(shape);
  for (Index i = 0; i < t.size(); ++i) t.values()[i] = dist(rng);
  return t;
}

Tensor4 random_uniform(const Shape4& shape, std::mt19937_64& rng, float lo, float hi) {
  std::uniform_real_distribution<float> dist(lo, hi);
  Tensor4 t(shape);
  for (Index i = 0; i < t.size(); ++i) t.values()[i] = dist(rng);
  return t;
}

GraphBuilder::GraphBuilder(std::string name, Shape4 input, std::uint64_t seed) : rng_(seed) {
  graph_.name = std::move(name);
  graph_.input.shape = input;
  channels_[graph_.input.name] = input.c;
}

Node& GraphBuilder::push(Node node) {
  graph_.nodes.push_back(std::move(node));
  return graph_.nodes.back();
}

std::string GraphBuilder::conv(const std::string& id, const std::string& in,
                               Index out_channels, Index kernel, Index stride,
                               Index padding, Index groups, bool bias) {
  const Index in_channels = channels(in);
  Node node;
  node.id = id;
  node.op = OpKind::kConv2d;
  node.inputs = {in};
  node.attrs.stride = stride;
  node.attrs.padding = padding;
  node.attrs.groups = groups;
  const Index fan_in = in_channels / groups * kernel * kernel;
  node.weight = random_tensor(Shape4{out_channels, in_channels / groups, kernel, kernel},
                              rng_, std::sqrt(2.0F / static_cast<float>(fan_in)));
  if (bias) {
    std::uniform_real_distribution<float> dist(-0.1F, 0.1F);
    node.bias.resize(out_channels);
    for (Index o = 0; o < out_channels; ++o) node.bias[o] = dist(rng_);
  }
  push(std::move(node));
  channels_[id] = out_channels;
  return id;
}

std::string GraphBuilder::bn(const std::string& id, const std::string& in) {
  const Index c = channels(in);
  std::uniform_real_distribution<float> gamma(0.5F, 1.5F);
  std::uniform_real_distribution<float> beta(0.1F, 0.5F);
  std::normal_distribution<float> mean(0.0F, 0.1F);
  std::uniform_real_distribution<float> var(0.5F, 1.5F);
  Node node;
  node.id = id;
  node.op = OpKind::kBatchNorm;
  node.inputs = {in};
  node.gamma.resize(c);
  node.beta.resize(c);
  node.running_mean.resize(c);
  node.running_var.resize(c);
  for (Index i = 0; i < c; ++i) {
    node.gamma[i] = gamma(rng_);
    node.beta[i] = beta(rng_);
    node.running_mean[i] = mean(rng_);
    node.running_var[i] = var(rng_);
  }
  push(std::move(node));
  channels_[id] = c;
  return id;
}

namespace {

Node unary(const std::string& id, OpKind op, const std::string& in) {
  Node node;
  node.id = id;
  node.op = op;
  node.inputs = {in};
  return node;
}

}  // namespace

std::string GraphBuilder::relu(const std::string& id, const std::string& in) {
  push(unary(id, OpKind::kRelu, in));
  channels_[id] = channels(in);
  return id;
}

std::string GraphBuilder::relu6(const std::string& id, const std::string& in) {
  push(unary(id, OpKind::kRelu6, in));
  channels_[id] = channels(in);
  return id;
}

std::string GraphBuilder::maxpool(const std::string& id, const std::string& in, Index kernel,
                                  Index stride, Index padding) {
  Node node = unary(id, OpKind::kMaxPool, in);
  node.attrs.kernel = kernel;
  node.attrs.stride = stride;
  node.attrs.padding = padding;
  push(std::move(node));
  channels_[id] = channels(in);
  return id;
}

std::string GraphBuilder::avgpool(const std::string& id, const std::string& in, Index kernel,
                                  Index stride) {
  Node node = unary(id, OpKind::kAvgPool, in);
  node.attrs.kernel = kernel;
  node.attrs.stride = stride;
  push(std::move(node));
  channels_[id] = channels(in);
  return id;
}

std::string GraphBuilder::upsample(const std::string& id, const std::string& in, Index factor) {
  Node node = unary(id, OpKind::kUpsample, in);
  node.attrs.factor = factor;
  push(std::move(node));
  channels_[id] = channels(in);
  return id;
}

std::string GraphBuilder::concat(const std::string& id, const std::vector<std::string>& ins) {
  Node node;
  node.id = id;
  node.op = OpKind::kConcat;
  node.inputs = ins;
  Index c = 0;
  for (const auto& in : ins) c += channels(in);
  push(std::move(node));
  channels_[id] = c;
  return id;
}

std::string GraphBuilder::add(const std::string& id, const std::string& a, const std::string& b) {
  Node node;
  node.id = id;
  node.op = OpKind::kAdd;
  node.inputs = {a, b};
  push(std::move(node));
  channels_[id] = channels(a);
  return id;
}

void GraphBuilder::kill_channel(const std::string& conv_id, const std::string& bn_id, Index c) {
  Node& conv = node(conv_id);
  for (Index i = 0; i < conv.weight.c(); ++i) conv.weight.plane(c, i).setZero();
  if (bn_id.empty()) {
    if (conv.bias.size() == 0) conv.bias = Eigen::ArrayXf::Zero(conv.weight.n());
    conv.bias[c] = -1.0F;
    return;
  }
  if (conv.bias.size() > 0) conv.bias[c] = 0.0F;
  Node& norm = node(bn_id);
  norm.running_mean[c] = 0.0F;
  norm.beta[c] = -1.0F;
}

Index GraphBuilder::channels(const std::string& id) const { return channels_.at(id); }

Node& GraphBuilder::node(const std::string& id) {
  Node* n = graph_.find(id);
  if (n == nullptr) throw std::out_of_range("no node " + id);
  return *n;
}

Graph GraphBuilder::build(std::vector<std::string> outputs, std::vector<std::string> taps) {
  graph_.outputs = std::move(outputs);
  graph_.taps = std::move(taps);
  validate(graph_);
  return graph_;
}

void center_activations(Graph& g, std::uint64_t seed, Index samples) {
  std::mt19937_64 rng(seed);
  std::vector<Tensor4> inputs;
  for (Index i = 0; i < samples; ++i) inputs.push_back(random_uniform(g.input.shape, rng));
  auto stats = [&](const std::string& id) {
    const std::vector<std::string> taps{id};
    Eigen::ArrayXd sum, sq;
    double count = 0.0;
    for (const auto& x : inputs) {
      const Tensor4 t = execute(g, x, taps).at(id);
      const auto m = t.channels().template cast<double>().array();
      if (sum.size() == 0) {
        sum = Eigen::ArrayXd::Zero(t.c());
        sq = Eigen::ArrayXd::Zero(t.c());
      }
      sum += m.rowwise().sum();
      sq += m.square().rowwise().sum();
      count += static_cast<double>(t.shape().spatial());
    }
    const Eigen::ArrayXd mean = sum / count;
    const Eigen::ArrayXd var = (sq / count - mean.square()).max(0.0);
    return std::pair{mean, var};
  };
  for (Node& node : g.nodes) {
    if (node.op == OpKind::kBatchNorm) {
      const auto [mean, var] = stats(node.inputs.front());
      for (Index c = 0; c < mean.size(); ++c) {
        if (var[c] <= 1e-12) continue;
        node.running_mean[c] = static_cast<float>(mean[c]);
        node.running_var[c] = static_cast<float>(var[c]);
      }
    } else if (node.op == OpKind::kConv2d && node.bias.size() > 0) {
      const auto readers = g.consumers(node.id);
      const bool feeds_activation =
          !readers.empty() && std::all_of(readers.begin(), readers.end(), [&](const auto& r) {
            return is_activation(g.find(r)->op);
          });
      if (!feeds_activation) continue;
      const auto [mean, var] = stats(node.id);
      for (Index c = 0; c < mean.size(); ++c) {
        if (var[c] <= 1e-12) continue;
        node.bias[c] += static_cast<float>(-mean[c] + 0.5 * std::sqrt(var[c]));
      }
    }
  }
  validate(g);
}

SyntheticNet make_googlenet_like(std::uint64_t seed, double dead_lo, double dead_hi,
                                 Index input_size, double width_scale) {
  GraphBuilder b("googlenet_like_" + std::to_string(seed), Shape4{1, 3, input_size, input_size},
                 seed);
  SyntheticNet net;
  std::map<std::string, Index> kept{{"input", 3}};
  std::uniform_real_distribution<double> fraction(dead_lo, dead_hi);
  auto width = [&](Index base) {
    return std::max<Index>(2, static_cast<Index>(std::lround(static_cast<double>(base) * width_scale)));
  };

  // conv -> bn -> relu with a random dead subset; accounts the pruned size.
  auto cbr = [&](const std::string& name, const std::string& in, Index out, Index k, Index s,
                 Index p) {
    b.conv(name + "_conv", in, out, k, s, p);
    b.bn(name + "_bn", name + "_conv");
    const std::string relu = b.relu(name + "_relu", name + "_bn");
    Index dead = static_cast<Index>(std::lround(fraction(b.rng()) * static_cast<double>(out)));
    dead = std::clamp<Index>(dead, 1, out - 1);
    std::vector<Index> order(static_cast<size_t>(out));
    std::iota(order.begin(), order.end(), Index{0});
    std::shuffle(order.begin(), order.end(), b.rng());
    std::vector<std::uint8_t> bits(static_cast<size_t>(out), 1);
    for (Index i = 0; i < dead; ++i) {
      bits[order[i]] = 0;
      b.kill_channel(name + "_conv", name + "_bn", order[i]);
    }
    net.injected[relu] = bits;
    const Index keep = out - dead;
    net.expected_params_after += keep * kept.at(in) * k * k + keep + 4 * keep;
    kept[relu] = keep;
    return relu;
  };
  auto pass = [&](const std::string& id, const std::string& in) { kept[id] = kept.at(in); };

  std::string x = cbr("stem1", "input", width(16), 3, 2, 1);
  x = b.maxpool("pool1", x, 3, 2, 1);
  pass("pool1", "stem1_relu");
  x = cbr("stem2", x, width(24), 1, 1, 0);
  x = cbr("stem3", x, width(32), 3, 1, 1);

  auto inception = [&](const std::string& name, const std::string& in, Index w1, Index w3r,
                       Index w3, Index w5r, Index w5, Index wp) {
    const std::string b1 = cbr(name + "_b1", in, width(w1), 1, 1, 0);
    const std::string b2 = cbr(name + "_b2b", cbr(name + "_b2a", in, width(w3r), 1, 1, 0),
                               width(w3), 3, 1, 1);
    const std::string b3 = cbr(name + "_b3b", cbr(name + "_b3a", in, width(w5r), 1, 1, 0),
                               width(w5), 5, 1, 2);
    const std::string pool = b.maxpool(name + "_pool", in, 3, 1, 1);
    pass(pool, in);
    const std::string b4 = cbr(name + "_b4", pool, width(wp), 1, 1, 0);
    const std::string out = b.concat(name + "_concat", {b1, b2, b3, b4});
    kept[out] = kept.at(b1) + kept.at(b2) + kept.at(b3) + kept.at(b4);
    return out;
  };

  x = inception("inc3a", x, 8, 8, 12, 4, 6, 6);
  x = b.maxpool("pool2", x, 3, 2, 1);
  pass("pool2", "inc3a_concat");
  x = inception("inc4a", x, 12, 8, 16, 4, 8, 8);

  const Index head = width(16);
  b.conv("head", x, head, 1);
  net.expected_params_after += head * kept.at(x) + head;
  net.graph = b.build({"head"});
  center_activations(net.graph, seed ^ 0x5eedULL);
  return net;
}

namespace {

void set_identity(Node& conv) {
  conv.weight.values().setZero();
  for (Index c = 0; c < conv.weight.n(); ++c) conv.weight(c, c, 0, 0) = 1.0F;
  conv.bias = Eigen::ArrayXf::Zero(conv.weight.n());
}

}  // namespace

Autoencoder identity_autoencoder(Index size) {
  GraphBuilder enc("identity_encoder", Shape4{1, 3, size, size}, 1);
  enc.conv("enc_conv", "input", 3, 1);
  set_identity(enc.node("enc_conv"));
  enc.relu("enc_relu", "enc_conv");
  GraphBuilder dec("identity_decoder", Shape4{1, 3, size, size}, 2);
  dec.conv("dec_conv", "input", 3, 1);
  set_identity(dec.node("dec_conv"));
  return {enc.build({"enc_relu"}, {"enc_relu"}), dec.build({"dec_conv"})};
}

Autoencoder toy_autoencoder(std::uint64_t seed, Index size) {
  GraphBuilder enc("toy_encoder", Shape4{1, 3, size, size}, seed);
  enc.graph().preprocessing.mean = Eigen::Array3f(0.485F, 0.456F, 0.406F);
  enc.graph().preprocessing.std = Eigen::Array3f(0.229F, 0.224F, 0.225F);

  enc.conv("b1_conv1", "input", 8, 3, 1, 1);
  enc.bn("b1_bn1", "b1_conv1");
  enc.relu("b1_relu1", "b1_bn1");
  for (Index c : {1, 4, 6}) enc.kill_channel("b1_conv1", "b1_bn1", c);
  enc.conv("b1_conv2", "b1_relu1", 8, 3, 1, 1);
  enc.relu("tap1", "b1_conv2");

  enc.maxpool("pool1", "tap1", 2, 2);
  enc.conv("b2_conv1", "pool1", 12, 3, 1, 1);
  enc.bn("b2_bn1", "b2_conv1");
  enc.relu("b2_relu1", "b2_bn1");
  for (Index c : {0, 5, 7, 11}) enc.kill_channel("b2_conv1", "b2_bn1", c);
  enc.conv("b2_conv2", "b2_relu1", 12, 1);
  enc.relu("tap2", "b2_conv2");

  enc.maxpool("pool2", "tap2", 2, 2);
  enc.conv("b3_conv1", "pool2", 16, 1);
  enc.bn("b3_bn1", "b3_conv1");
  enc.relu("b3_relu1", "b3_bn1");
  for (Index c : {2, 3, 9}) enc.kill_channel("b3_conv1", "b3_bn1", c);
  enc.conv("b3_conv2", "b3_relu1", 16, 1);
  enc.relu("tap3", "b3_conv2");

  const Index bottleneck = size / 4;
  GraphBuilder dec("toy_decoder", Shape4{1, 16, bottleneck, bottleneck}, seed + 1);
  dec.conv("d3_conv", "input", 12, 3, 1, 1);
  dec.relu("d3_relu", "d3_conv");
  dec.upsample("up2", "d3_relu", 2);
  dec.conv("d2_conv", "up2", 8, 3, 1, 1);
  dec.relu("d2_relu", "d2_conv");
  dec.upsample("up1", "d2_relu", 2);
  dec.conv("d1_conv", "up1", 3, 3, 1, 1);

  Autoencoder ae{enc.build({"tap3"}, {"tap1", "tap2", "tap3"}), dec.build({"d1_conv"})};
  center_activations(ae.encoder, seed);
  center_activations(ae.decoder, seed + 1);
  return ae;
}

Graph fig4a_toy(std::uint64_t seed) {
  GraphBuilder b("conv_bn_relu_toy", Shape4{1, 3, 6, 6}, seed);
  b.conv("conv1", "input", 8, 3, 1, 1);
  b.bn("bn1", "conv1");
  b.relu("relu1", "bn1");
  for (Index c : {2, 3, 5, 7}) b.kill_channel("conv1", "bn1", c);
  b.conv("conv2", "relu1", 4, 3, 1, 1);
  Graph g = b.build({"conv2"});
  center_activations(g, seed);
  return g;
}

}  // namespace zcstyle::testing
