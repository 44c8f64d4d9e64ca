// Copyright 2026 The zcstyle Authors.
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <nlohmann/json.hpp>

#include "support/fixtures.hpp"
#include "zcstyle/pipeline.hpp"
#include "zcstyle/prune.hpp"

using namespace zcstyle;
using namespace zcstyle::testing;

namespace {

std::vector<Index> positions_of_ones(const std::vector<std::uint8_t>& bits) {
  std::vector<Index> out;
  for (size_t i = 0; i < bits.size(); ++i)
    if (bits[i] != 0) out.push_back(static_cast<Index>(i));
  return out;
}

const KeepMask& mask_for(const std::vector<KeepMask>& masks, const std::string& id) {
  for (const auto& m : masks)
    if (m.node_id == id) return m;
  throw std::out_of_range(id);
}

bool reverted_with(const std::vector<Reversion>& list, const std::string& node, Index c,
                   const std::string& reason_part) {
  for (const auto& r : list) {
    if (r.node_id == node && r.channel == c && r.reason.find(reason_part) != std::string::npos)
      return true;
  }
  return false;
}

// Four-branch toy block with dead channels in two branches.
Graph inception_toy(std::uint64_t seed) {
  GraphBuilder b("inception_toy", Shape4{1, 3, 8, 8}, seed);
  b.conv("stem", "input", 4, 3, 1, 1);
  b.relu("stem_relu", "stem");
  b.conv("b1", "stem_relu", 3, 1);
  b.relu("b1_relu", "b1");                    // channels 0..2 of concat
  b.conv("b2", "stem_relu", 4, 3, 1, 1);
  b.bn("b2_bn", "b2");
  b.relu("b2_relu", "b2_bn");                 // 3..6, dead 1 and 3 -> 4, 6
  b.conv("b3", "stem_relu", 2, 1);
  b.relu("b3_relu", "b3");                    // 7..8
  b.maxpool("b4_pool", "stem_relu", 3, 1, 1);
  b.conv("b4", "b4_pool", 3, 1);
  b.relu("b4_relu", "b4");                    // 9..11, dead 0 -> 9
  b.concat("cat", {"b1_relu", "b2_relu", "b3_relu", "b4_relu"});
  b.conv("after", "cat", 5, 1);
  b.kill_channel("b2", "b2_bn", 1);
  b.kill_channel("b2", "b2_bn", 3);
  b.kill_channel("b4", "", 0);
  Graph g = b.build({"after"});
  center_activations(g, seed);
  return g;
}

// Mobilenetv2-style unit: expand 1x1 -> depthwise 3x3 -> project 1x1 with a skip.
Graph inverted_residual_toy(std::uint64_t seed) {
  GraphBuilder b("inverted_residual", Shape4{1, 3, 8, 8}, seed);
  b.conv("stem", "input", 6, 3, 1, 1);
  b.bn("stem_bn", "stem");
  b.relu6("x", "stem_bn");
  b.conv("expand", "x", 12, 1);
  b.bn("expand_bn", "expand");
  b.relu6("e", "expand_bn");
  b.conv("dw", "e", 12, 3, 1, 1, 12);
  b.bn("dw_bn", "dw");
  b.relu6("d", "dw_bn");
  b.conv("project", "d", 6, 1);
  b.bn("project_bn", "project");
  b.add("sum", "x", "project_bn");
  b.conv("head", "sum", 4, 1);
  // dead on the skip side only
  b.kill_channel("stem", "stem_bn", 1);
  // dead through the whole expand/depthwise chain
  for (Index c : {3, 7}) {
    b.kill_channel("expand", "expand_bn", c);
    b.kill_channel("dw", "dw_bn", c);
  }
  Graph g = b.build({"head"});
  center_activations(g, seed);
  return g;
}

}  // namespace

TEST_CASE("detect: zero weights and bias -1 give a dead channel for any calibration") {
  GraphBuilder b("dead", Shape4{1, 2, 5, 5}, 1);
  b.conv("c", "input", 3, 3, 1, 1);
  b.relu("r", "c");
  b.conv("out", "r", 2, 1);
  b.kill_channel("c", "", 1);
  const Graph g = b.build({"out"});
  for (std::uint64_t seed : {1, 2, 3}) {
    std::mt19937_64 rng(seed);
    std::vector<Tensor4> calib;
    for (int i = 0; i < 4; ++i) calib.push_back(random_tensor(g.input.shape, rng, 10.0F));
    const auto masks = detect_zero_channels(g, calib);
    REQUIRE(masks.size() == 1);
    CHECK(masks[0].to_string() == "101");
    CHECK(masks[0].zero_count() == 1);
  }
}

TEST_CASE("detect: Conv-BN-ReLU with channels 2,3,5,7 dead gives 11001010") {
  const Graph g = fig4a_toy(1);
  const auto calib = random_images(g.input.shape, 50, 2);
  const auto masks = detect_zero_channels(g, calib);
  CHECK(mask_for(masks, "relu1").to_string() == "11001010");
}

TEST_CASE("detect: equals a brute-force max-abs scan, tau 0 and tau > 0") {
  GraphBuilder b("tiny", Shape4{1, 3, 6, 6}, 9);
  b.conv("c1", "input", 6, 3, 1, 1);
  b.relu("r1", "c1");
  b.conv("c2", "r1", 5, 3, 1, 1);
  b.relu("r2", "c2");
  b.conv("c3", "r2", 2, 1);
  // a few weak but live channels so tau > 0 flags more than tau = 0
  b.node("c1").weight.plane(2, 0) *= 1e-3F;
  b.node("c1").weight.plane(2, 1) *= 1e-3F;
  b.node("c1").weight.plane(2, 2) *= 1e-3F;
  b.node("c1").bias[2] = 0.0F;
  b.kill_channel("c1", "", 4);
  b.kill_channel("c2", "", 0);
  const Graph g = b.build({"c3"});
  const auto calib = random_images(g.input.shape, 50, 3);
  const std::vector<std::string> taps{"r1", "r2"};
  std::map<std::string, std::vector<float>> max_abs;
  for (const auto& x : calib) {
    const auto out = execute(g, x, taps);
    for (const auto& id : taps) {
      const auto& t = out.at(id);
      auto& m = max_abs[id];
      m.resize(static_cast<size_t>(t.c()), 0.0F);
      for (Index c = 0; c < t.c(); ++c)
        for (Index y = 0; y < t.h(); ++y)
          for (Index xx = 0; xx < t.w(); ++xx) m[c] = std::max(m[c], std::abs(t(0, c, y, xx)));
    }
  }
  for (float tau : {0.0F, 0.01F}) {
    const auto masks = detect_zero_channels(g, calib, tau);
    for (const auto& id : taps) {
      const auto& bits = mask_for(masks, id).bits;
      for (size_t c = 0; c < bits.size(); ++c) CHECK(bits[c] == (max_abs[id][c] <= tau ? 0 : 1));
    }
  }
  CHECK(mask_for(detect_zero_channels(g, calib, 0.01F), "r1").bits[2] == 0);
  CHECK(mask_for(detect_zero_channels(g, calib, 0.0F), "r1").bits[2] == 1);
}

TEST_CASE("detect: errors") {
  const Graph g = fig4a_toy(1);
  CHECK_THROWS_AS(detect_zero_channels(g, {}), Error);
  const auto calib = random_images(g.input.shape, 2, 1);
  CHECK_THROWS_AS(detect_zero_channels(g, calib, -0.1F), Error);
  const auto wrong = random_images(Shape4{1, 3, 8, 8}, 1, 1);
  CHECK_THROWS_AS(detect_zero_channels(g, wrong), Error);
}

TEST_CASE("detect: a relu with every channel dead keeps channel 0 and says so") {
  GraphBuilder b("all_dead", Shape4{1, 1, 4, 4}, 1);
  b.conv("c", "input", 3, 1);
  b.relu("r", "c");
  b.conv("out", "r", 2, 1);
  for (Index c = 0; c < 3; ++c) b.kill_channel("c", "", c);
  const Graph g = b.build({"out"});
  const auto calib = random_images(g.input.shape, 5, 1);
  const auto masks = detect_zero_channels(g, calib);
  CHECK(masks[0].all_dead);
  CHECK(masks[0].to_string() == "100");
  const auto outcome = prune_zero_channels(g, calib, calib, {0.0F, true});
  CHECK(outcome.plan.masks.at("r") == std::vector<std::uint8_t>{1, 0, 0});
  CHECK(outcome.report.verification->passed);
  CHECK(!outcome.report.warnings.empty());
}

TEST_CASE("propagate: mask errors") {
  const Graph g = fig4a_toy(1);
  CHECK_THROWS_AS(propagate_masks(g, std::vector<KeepMask>{{"relu1", {1, 0}}}), Error);
  CHECK_THROWS_AS(propagate_masks(g, std::vector<KeepMask>{{"nope", {1}}}), Error);
  CHECK_THROWS_AS(propagate_masks(g, std::vector<KeepMask>{{"conv1", std::vector<std::uint8_t>(8, 1)}}),
                  Error);
}

TEST_CASE("no zero channels: identity plan, unchanged graph, deviation exactly 0") {
  GraphBuilder b("alive", Shape4{1, 3, 6, 6}, 4);
  b.conv("c1", "input", 5, 3, 1, 1);
  b.bn("bn", "c1");
  b.relu("r", "bn");
  b.conv("c2", "r", 4, 1);
  const Graph g = b.build({"c2"});
  const auto calib = random_images(g.input.shape, 20, 5);
  const auto held = random_images(g.input.shape, 20, 6);
  const auto outcome = prune_zero_channels(g, calib, held, {0.0F, true});
  CHECK(outcome.plan.is_identity());
  for (const auto& [id, bits] : outcome.plan.masks) {
    CHECK(std::all_of(bits.begin(), bits.end(), [](auto v) { return v == 1; }));
  }
  CHECK(outcome.report.params_after == outcome.report.params_before);
  CHECK(outcome.report.flops_after == outcome.report.flops_before);
  CHECK(outcome.report.verification->max_deviation == 0.0);
  CHECK(outcome.report.channels_removed() == 0);
}

TEST_CASE("Conv(8)-BN-ReLU with 11001010 feeding Conv(I=8): slices") {
  const Graph g = fig4a_toy(3);
  const auto calib = random_images(g.input.shape, 50, 7);
  const auto held = random_images(g.input.shape, 20, 8);
  const auto outcome = prune_zero_channels(g, calib, held, {0.0F, true});
  const std::vector<Index> expected{0, 1, 4, 6};
  CHECK(positions_of_ones(outcome.plan.masks.at("relu1")) == expected);
  CHECK(outcome.plan.slices.at("conv1").keep_out == expected);
  CHECK(outcome.plan.slices.at("bn1").keep_out == expected);
  CHECK(outcome.plan.slices.at("conv2").keep_in == expected);

  const Node* conv1 = outcome.pruned.find("conv1");
  const Node* bn1 = outcome.pruned.find("bn1");
  const Node* conv2 = outcome.pruned.find("conv2");
  CHECK(conv1->weight.n() == 4);
  CHECK(bn1->gamma.size() == 4);
  CHECK(conv2->weight.c() == 4);
  CHECK(conv2->weight.n() == 4);
  const Node* orig2 = g.find("conv2");
  const Node* orig1 = g.find("conv1");
  for (Index o = 0; o < 4; ++o) {
    for (Index i = 0; i < 4; ++i) {
      CHECK((conv2->weight.plane(o, i) == orig2->weight.plane(o, expected[i])).all());
      CHECK((conv1->weight.plane(o, 0) == orig1->weight.plane(expected[o], 0)).all());
    }
    CHECK(bn1->beta[o] == g.find("bn1")->beta[expected[o]]);
  }
  CHECK(outcome.report.verification->max_deviation <= 1e-5);
  CHECK(outcome.report.params_after < outcome.report.params_before);
  // 4 of 8 filters gone from conv1 (27+1 each), bn1 (4 each), conv2 slices (9 each x 4 out)
  CHECK(outcome.report.params_before - outcome.report.params_after == 4 * 28 + 4 * 4 + 4 * 9 * 4);
}

TEST_CASE("inception toy: concat mask is the per-branch concatenation") {
  const Graph g = inception_toy(5);
  const auto calib = random_images(g.input.shape, 50, 9);
  const auto held = random_images(g.input.shape, 20, 10);
  const auto outcome = prune_zero_channels(g, calib, held, {0.0F, true});
  const auto& m = outcome.plan.masks;
  std::vector<std::uint8_t> cat;
  for (const char* id : {"b1_relu", "b2_relu", "b3_relu", "b4_relu"}) {
    cat.insert(cat.end(), m.at(id).begin(), m.at(id).end());
  }
  CHECK(m.at("cat") == cat);
  // by hand: 12 channels, branch 2 loses its 1 and 3 (global 4, 6), branch 4 its 0 (global 9)
  const std::vector<Index> expected{0, 1, 2, 3, 5, 7, 8, 10, 11};
  CHECK(outcome.plan.slices.at("after").keep_in == expected);
  CHECK(outcome.pruned.find("after")->weight.c() == 9);
  CHECK(outcome.pruned.find("b2")->weight.n() == 2);
  CHECK(outcome.pruned.find("b4")->weight.n() == 2);
  CHECK(outcome.report.verification->max_deviation <= 1e-5);
  CHECK(outcome.report.reverted.empty());
}

TEST_CASE("inverted residual: add union rule, depthwise pass-through") {
  const Graph g = inverted_residual_toy(6);
  const auto calib = random_images(g.input.shape, 50, 11);
  const auto held = random_images(g.input.shape, 20, 12);
  const auto outcome = prune_zero_channels(g, calib, held, {0.0F, true});
  const auto& m = outcome.plan.masks;
  CHECK(mask_for(outcome.detected, "x").to_string() == "101111");
  // zero on the skip side only: kept on both inputs and the output
  CHECK(m.at("x") == m.at("project_bn"));
  CHECK(m.at("sum") == m.at("x"));
  CHECK(m.at("x")[1] == 1);
  CHECK(reverted_with(outcome.plan.reverted, "x", 1, "not provably zero"));
  // dead through expand/depthwise: removed, depthwise groups shrink
  const std::vector<std::uint8_t> e_mask{1, 1, 1, 0, 1, 1, 1, 0, 1, 1, 1, 1};
  CHECK(m.at("e") == e_mask);
  CHECK(m.at("dw") == e_mask);
  CHECK(m.at("d") == e_mask);
  const Node* dw = outcome.pruned.find("dw");
  CHECK(dw->attrs.groups == 10);
  CHECK(dw->weight.n() == 10);
  CHECK(dw->weight.c() == 1);
  CHECK(outcome.pruned.find("project")->weight.c() == 10);
  CHECK(outcome.report.verification->max_deviation <= 1e-5);
}

TEST_CASE("zero channel feeding a BN without its own conv is reverted") {
  GraphBuilder b("bn_after_relu", Shape4{1, 3, 6, 6}, 2);
  b.conv("c1", "input", 4, 3, 1, 1);
  b.relu("r", "c1");
  b.bn("bn", "r");
  b.conv("c2", "bn", 3, 1);
  b.kill_channel("c1", "", 2);
  const Graph g = b.build({"c2"});
  const auto calib = random_images(g.input.shape, 20, 13);
  const auto outcome = prune_zero_channels(g, calib, calib, {0.0F, true});
  CHECK(mask_for(outcome.detected, "r").to_string() == "1101");
  CHECK(outcome.plan.is_identity());
  CHECK(reverted_with(outcome.report.reverted, "r", 2, "not provably zero"));
  CHECK(outcome.report.verification->max_deviation == 0.0);
}

TEST_CASE("zero channels at a graph output or tap are kept (shape preservation)") {
  GraphBuilder b("tap_dead", Shape4{1, 3, 6, 6}, 2);
  b.conv("c1", "input", 4, 3, 1, 1);
  b.relu("r", "c1");
  b.conv("c2", "r", 3, 1);
  b.relu("out", "c2");
  b.kill_channel("c1", "", 0);
  b.kill_channel("c2", "", 1);
  const Graph g = b.build({"out"}, {"r"});
  const auto calib = random_images(g.input.shape, 20, 14);
  const auto outcome = prune_zero_channels(g, calib, {});
  CHECK(outcome.plan.is_identity());
  CHECK(reverted_with(outcome.report.reverted, "r", 0, "tap 'r'"));
  CHECK(reverted_with(outcome.report.reverted, "out", 1, "output or tap 'out'"));
  CHECK(infer_shapes(outcome.pruned, g.input.shape).at("r").c == 4);
}

TEST_CASE("tau > 0 on near-zero channels: deviation shown, not passed silently") {
  GraphBuilder b("weak", Shape4{1, 3, 6, 6}, 3);
  b.conv("c1", "input", 4, 3, 1, 1);
  b.relu("r", "c1");
  b.conv("c2", "r", 2, 1);
  Node& c1 = b.node("c1");
  for (Index i = 0; i < 3; ++i) c1.weight.plane(1, i) *= 1e-3F;
  c1.bias[1] = 0.02F;
  b.node("c2").weight.values() *= 100.0F;
  const Graph g = b.build({"c2"});
  const auto calib = random_images(g.input.shape, 20, 15);
  const auto held = random_images(g.input.shape, 20, 16);
  PruneOptions options;
  options.tau = 0.05F;
  const auto outcome = prune_zero_channels(g, calib, held, options);  // verify forced
  REQUIRE(outcome.report.verification.has_value());
  CHECK(outcome.report.verification->max_deviation > 1e-5);
  CHECK_FALSE(outcome.report.verification->passed);
  CHECK_FALSE(outcome.report.warnings.empty());
  CHECK_THROWS_AS(prune_zero_channels(g, calib, {}, options), Error);
}

TEST_CASE("GoogLeNet-shaped net: exact masks, analytic params, equivalence") {
  for (std::uint64_t seed : {21, 22}) {
    const auto net = make_googlenet_like(seed, 0.3, 0.3);
    const auto calib = random_images(net.graph.input.shape, 50, seed);
    const auto held = random_images(net.graph.input.shape, 20, seed + 100);
    const auto outcome = prune_zero_channels(net.graph, calib, held, {0.0F, true});
    for (const auto& [relu, bits] : net.injected) CHECK(mask_for(outcome.detected, relu).bits == bits);
    CHECK(outcome.report.params_after == net.expected_params_after);
    CHECK(outcome.report.flops_after < outcome.report.flops_before);
    CHECK(outcome.report.verification->max_deviation <= 1e-5);
    CHECK(outcome.report.reverted.empty());
  }
}

TEST_CASE("properties: idempotence, determinism, monotonicity") {
  const auto net = make_googlenet_like(31);
  const auto calib = random_images(net.graph.input.shape, 20, 1);
  const auto first = prune_zero_channels(net.graph, calib, {});
  const auto again = prune_zero_channels(net.graph, calib, {});
  CHECK(first.plan.masks == again.plan.masks);
  CHECK(report_to_json(first.report) == report_to_json(again.report));

  const auto second = prune_zero_channels(first.pruned, calib, {});
  CHECK(second.plan.is_identity());
  CHECK(second.report.params_after == first.report.params_after);
  for (const auto& m : second.detected) CHECK(m.zero_count() == 0);

  CHECK(first.report.params_after < first.report.params_before);
  CHECK(first.report.flops_after < first.report.flops_before);
  CHECK(second.report.flops_after == second.report.flops_before);
}

TEST_CASE("apply_prune rejects a plan from another graph") {
  const Graph a = fig4a_toy(1);
  const Graph b = inception_toy(1);
  const auto plan = propagate_masks(b, {});
  CHECK_THROWS_AS(apply_prune(a, plan), Error);
  auto wrong = propagate_masks(a, {});
  wrong.masks["relu1"].pop_back();
  CHECK_THROWS_AS(apply_prune(a, wrong), Error);
}

TEST_CASE("verify_equivalence rejects a changed output shape") {
  const Graph a = fig4a_toy(1);
  Graph b = a;
  b.nodes.back().weight = Tensor4({3, 8, 3, 3});
  b.nodes.back().bias = Eigen::ArrayXf::Zero(3);
  const auto inputs = random_images(a.input.shape, 1, 1);
  CHECK_THROWS_AS(verify_equivalence(a, b, inputs, 1e-5F), Error);
}

TEST_CASE("report_to_json has the documented fields") {
  const Graph g = fig4a_toy(2);
  const auto calib = random_images(g.input.shape, 10, 1);
  const auto outcome = prune_zero_channels(g, calib, calib, {0.0F, true});
  const auto doc = nlohmann::json::parse(report_to_json(outcome.report));
  CHECK(doc.at("params_before").get<std::int64_t>() == outcome.report.params_before);
  CHECK(doc.at("params_after").get<std::int64_t>() == outcome.report.params_after);
  CHECK(doc.contains("flops_before"));
  CHECK(doc.at("verification").at("passed").get<bool>());
  CHECK(doc.at("nodes").size() == outcome.report.nodes.size());
}
