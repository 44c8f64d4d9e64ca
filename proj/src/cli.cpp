// Copyright 2026 The zcstyle Authors.
// SPDX-License-Identifier: Apache-2.0

#include "zcstyle/cli.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <memory>
#include <new>
#include <regex>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "zcstyle/metrics.hpp"
#include "zcstyle/model_io.hpp"
#include "zcstyle/pipeline.hpp"
#include "zcstyle/prune.hpp"
#include "zcstyle/transform.hpp"

namespace zcstyle {

namespace {

namespace fs = std::filesystem;
using Json = nlohmann::ordered_json;

constexpr const char* kExitCodeHelp =
    "Exit codes: 0 ok, 1 internal error, 2 usage/invalid argument, 3 file I/O,\n"
    "4 model or image format, 5 shape mismatch, 6 equivalence check failed,\n"
    "7 out of memory, 8 unsupported input.";

int exit_code_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kInvalidArgument: return kExitUsage;
    case ErrorKind::kShape: return kExitShape;
    case ErrorKind::kParse:
    case ErrorKind::kRange: return kExitFormat;
    case ErrorKind::kIo: return kExitIo;
    case ErrorKind::kResource: return kExitResource;
    case ErrorKind::kUnsupported: return kExitUnsupported;
    case ErrorKind::kVerification: return kExitVerification;
  }
  return kExitInternal;
}

std::string one_line(std::string text) {
  std::replace(text.begin(), text.end(), '\n', ' ');
  return text;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorKind::kIo, "cannot write " + path.string());
  out << text;
  if (!out) fail(ErrorKind::kIo, "short write to " + path.string());
}

void emit(const std::string& text, const std::string& path, std::ostream& out) {
  if (path.empty()) {
    out << text;
  } else {
    write_text(path, text);
  }
}

std::vector<Tensor4> load_calibration(const Graph& g, const std::string& dir,
                                      Index random_count, std::uint64_t seed) {
  if (!dir.empty()) {
    if (!fs::is_directory(dir)) fail(ErrorKind::kIo, "calibration directory " + dir + " not found");
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(dir)) {
      if (entry.is_regular_file() && entry.path().extension() == ".ppm") {
        files.push_back(entry.path());
      }
    }
    std::sort(files.begin(), files.end());
    if (files.empty()) fail(ErrorKind::kIo, "no .ppm images in " + dir);
    std::vector<Tensor4> images;
    for (const auto& f : files) images.push_back(read_image(f));
    return images;
  }
  if (random_count < 1) {
    fail(ErrorKind::kInvalidArgument, "pass --calib DIR or --calib-random N");
  }
  return random_images(g.input.shape, random_count, seed);
}

Shape4 parse_size(const std::string& text, Index channels) {
  static const std::regex pattern(R"((\d+)[xX](\d+))");
  std::smatch m;
  if (!std::regex_match(text, m, pattern)) {
    fail(ErrorKind::kInvalidArgument, "--size must look like HxW, got '" + text + "'");
  }
  return {1, channels, std::stoll(m[1]), std::stoll(m[2])};
}

struct CalibFlags {
  std::string dir;
  Index random = 50;
  std::uint64_t seed = 0;
  float tau = 0.0F;
};

void add_calib_flags(CLI::App* cmd, CalibFlags& flags) {
  cmd->add_option("--calib", flags.dir, "Directory of .ppm calibration images");
  cmd->add_option("--calib-random", flags.random,
                  "Use N uniform-noise calibration inputs when --calib is absent (default 50)");
  cmd->add_option("--seed", flags.seed, "Seed for generated inputs");
  cmd->add_option("--tau", flags.tau, "Zero-channel threshold on max |activation|")
      ->check(CLI::NonNegativeNumber);
}

int cmd_inspect(const std::string& model_dir, const CalibFlags& flags,
                const std::string& out_path, std::ostream& out) {
  const Graph g = load_model_dir(model_dir);
  const auto calibration = load_calibration(g, flags.dir, flags.random, flags.seed);
  const auto masks = detect_zero_channels(g, calibration, flags.tau);
  const PrunePlan plan = propagate_masks(g, masks);

  Json doc;
  doc["report"] = "inspect";
  doc["model"] = g.name;
  doc["input"] = {g.input.shape.n, g.input.shape.c, g.input.shape.h, g.input.shape.w};
  doc["params"] = count_params(g);
  doc["params_mib"] = params_megabytes(count_params(g));
  doc["flops"] = count_flops(g, g.input.shape);
  doc["calibration_inputs"] = calibration.size();
  doc["tau"] = flags.tau;
  Json layers = Json::array();
  Index zero_total = 0;
  for (const KeepMask& m : masks) {
    const Index zeros = m.all_dead ? m.size() : m.zero_count();
    zero_total += zeros;
    layers.push_back({{"node", m.node_id}, {"channels", m.size()},
                      {"zero_channels", zeros}, {"mask", m.to_string()}});
  }
  doc["activations"] = std::move(layers);
  doc["zero_channels"] = zero_total;
  doc["prunable_zero_channels"] = zero_total - static_cast<Index>(plan.reverted.size());
  Json reverted = Json::array();
  for (const auto& r : plan.reverted) {
    reverted.push_back({{"node", r.node_id}, {"channel", r.channel}, {"reason", r.reason}});
  }
  doc["kept_zero_channels"] = std::move(reverted);
  emit(doc.dump(2) + "\n", out_path, out);
  return kExitOk;
}

int cmd_prune(const std::string& model_dir, const CalibFlags& flags,
              const std::string& out_dir, bool verify, float tolerance,
              Index holdout, std::ostream& out, std::ostream& err) {
  const Graph g = load_model_dir(model_dir);
  const auto calibration = load_calibration(g, flags.dir, flags.random, flags.seed);
  // Held-out inputs come from a separate stream so they never repeat the
  // calibration set.
  const auto held_out = random_images(g.input.shape, holdout, flags.seed ^ 0x9e3779b97f4a7c15ULL);
  PruneOptions options{flags.tau, verify, tolerance};
  const PruneOutcome outcome = prune_zero_channels(g, calibration, held_out, options);
  save_model_dir(outcome.pruned, out_dir);
  const std::string report = report_to_json(outcome.report);
  write_text(fs::path(out_dir) / "prune_report.json", report);
  out << report;
  for (const auto& w : outcome.report.warnings) err << "warning: " << w << "\n";
  if (outcome.report.verification && !outcome.report.verification->passed) {
    err << "error: verification: max deviation "
        << outcome.report.verification->max_deviation << " exceeds tolerance "
        << outcome.report.verification->tolerance << "\n";
    return kExitVerification;
  }
  return kExitOk;
}

struct StylizeFlags {
  std::string content;
  std::string style;
  std::string encoder;
  std::string decoder;
  std::string output;
  std::string transform = "s2";
  Index patch_size = 3;
  Index patch_stride = 1;
  float alpha = 1.0F;
  std::vector<std::string> taps;
};

int cmd_stylize(const StylizeFlags& f) {
  const auto mode = parse_transfer_mode(f.transform);
  if (!mode) fail(ErrorKind::kInvalidArgument, "unknown --transform '" + f.transform + "'");
  StyleJob job;
  job.content_image = read_image(f.content);
  job.style_image = read_image(f.style);
  job.encoder = std::make_shared<const Graph>(load_model_dir(f.encoder));
  job.decoder = std::make_shared<const Graph>(load_model_dir(f.decoder));
  job.taps = f.taps;
  job.cfg.mode = *mode;
  job.cfg.patch_size = f.patch_size;
  job.cfg.patch_stride = f.patch_stride;
  job.cfg.blend_alpha = f.alpha;
  write_image(stylize(job), f.output);
  return kExitOk;
}

int cmd_bench(const std::string& model_dir, const std::string& size, const BenchOptions& options,
              const std::string& out_path, std::ostream& out) {
  const Graph g = load_model_dir(model_dir);
  const Shape4 shape = parse_size(size, g.input.shape.c);
  const BenchResult r = benchmark(g, shape, options);
  emit(bench_to_json(r, g.name), out_path, out);
  return kExitOk;
}

int cmd_metrics(const std::string& a_path, const std::string& b_path,
                const std::string& features, const std::string& out_path, std::ostream& out) {
  const Tensor4 a = read_image(a_path);
  const Tensor4 b = read_image(b_path);
  Json doc;
  doc["report"] = "metrics";
  doc["metrics"] = Json::array();
  doc["metrics"].push_back({{"name", "edge-SSIM (Sobel)"},
                            {"value", edge_ssim(a, b)},
                            {"config", {{"window", 11}, {"sigma", 1.5}, {"k1", 0.01},
                                        {"k2", 0.03}, {"edges", "sobel"}}}});
  if (!features.empty()) {
    const Graph g = load_model_dir(features);
    const auto taps = resolve_taps(g, {});
    const TensorMap fa = execute(g, a, taps);
    const TensorMap fb = execute(g, b, taps);
    for (const auto& tap : taps) {
      doc["metrics"].push_back({{"name", "gram-distance"},
                                {"value", gram_distance(fa.at(tap), fb.at(tap))},
                                {"config", {{"features", g.name}, {"tap", tap},
                                            {"normalization", "1/(C*H*W)"}}}});
    }
  }
  emit(doc.dump(2) + "\n", out_path, out);
  return kExitOk;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Zero-channel pruning, feature transfer and stylization engine", "zcstyle"};
  app.footer(kExitCodeHelp);
  app.require_subcommand(1);

  std::string model;
  std::string out_path;
  CalibFlags calib;

  auto* inspect = app.add_subcommand("inspect", "Report zero channels, parameters and FLOPs");
  inspect->add_option("model", model, "Model directory")->required();
  add_calib_flags(inspect, calib);
  inspect->add_option("-o,--output", out_path, "Write the report here instead of stdout");

  std::string prune_out;
  bool verify = false;
  float tolerance = 1e-5F;
  Index holdout = 20;
  auto* prune = app.add_subcommand("prune", "Remove zero channels and write the pruned model");
  prune->add_option("model", model, "Model directory")->required();
  add_calib_flags(prune, calib);
  prune->add_option("-o,--output", prune_out, "Output model directory")->required();
  prune->add_flag("--verify", verify, "Check equivalence on held-out inputs");
  prune->add_option("--tol", tolerance, "Equivalence tolerance")->check(CLI::NonNegativeNumber);
  prune->add_option("--holdout", holdout, "Number of held-out inputs")->check(CLI::PositiveNumber);

  StylizeFlags sf;
  auto* stylize_cmd = app.add_subcommand("stylize", "Stylize a content image");
  stylize_cmd->add_option("--content", sf.content, "Content image (.ppm)")->required();
  stylize_cmd->add_option("--style", sf.style, "Style image (.ppm)")->required();
  stylize_cmd->add_option("--encoder", sf.encoder, "Encoder model directory")->required();
  stylize_cmd->add_option("--decoder", sf.decoder, "Decoder model directory")->required();
  stylize_cmd->add_option("-o,--output", sf.output, "Output image (.ppm)")->required();
  stylize_cmd->add_option("--transform", sf.transform, "s2|adain|swap|adain_swap|swap_adain")
      ->check(CLI::IsMember({"s2", "adain", "swap", "adain_swap", "swap_adain"}));
  stylize_cmd->add_option("--patch-size", sf.patch_size, "Swap patch size")
      ->check(CLI::PositiveNumber);
  stylize_cmd->add_option("--patch-stride", sf.patch_stride, "Swap patch stride")
      ->check(CLI::PositiveNumber);
  stylize_cmd->add_option("--alpha", sf.alpha, "Blend with content features")
      ->check(CLI::Range(0.0F, 1.0F));
  stylize_cmd->add_option("--taps", sf.taps, "Encoder tap ids (default: from manifest)")
      ->delimiter(',');

  std::string size;
  BenchOptions bench_options;
  int threads = 1;
  auto* bench = app.add_subcommand("bench", "Time graph execution");
  bench->add_option("model", model, "Model directory")->required();
  bench->add_option("--size", size, "Input size HxW")->required();
  bench->add_option("--iters", bench_options.iters, "Timed runs")->required()
      ->check(CLI::PositiveNumber);
  bench->add_option("--warmup", bench_options.warmup, "Untimed warm-up runs")
      ->check(CLI::NonNegativeNumber);
  bench->add_option("--threads", threads, "Engine threads (1 = sequential)")
      ->check(CLI::PositiveNumber);
  bench->add_flag("--fixed-input", bench_options.fixed_input, "Reuse one input for every run");
  bench->add_option("--seed", bench_options.seed, "Input seed");
  bench->add_option("-o,--output", out_path, "Write the report here instead of stdout");

  std::string image_a;
  std::string image_b;
  std::string features;
  auto* metrics = app.add_subcommand("metrics", "Edge-SSIM and Gram distance between images");
  metrics->add_option("--a", image_a, "First image (.ppm)")->required();
  metrics->add_option("--b", image_b, "Second image (.ppm)")->required();
  metrics->add_option("--features", features, "Model directory for Gram distances");
  metrics->add_option("-o,--output", out_path, "Write the report here instead of stdout");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: usage: " << one_line(e.what()) << "\n";
    err << app.help();
    return kExitUsage;
  }

  try {
    if (*inspect) return cmd_inspect(model, calib, out_path, out);
    if (*prune) {
      return cmd_prune(model, calib, prune_out, verify, tolerance, holdout, out, err);
    }
    if (*stylize_cmd) return cmd_stylize(sf);
    if (*bench) {
      bench_options.threads = threads;
      return cmd_bench(model, size, bench_options, out_path, out);
    }
    if (*metrics) return cmd_metrics(image_a, image_b, features, out_path, out);
  } catch (const Error& e) {
    err << "error: " << to_string(e.kind()) << ": " << one_line(e.what()) << "\n";
    return exit_code_for(e.kind());
  } catch (const std::bad_alloc&) {
    err << "error: resource: out of memory\n";
    return kExitResource;
  } catch (const std::exception& e) {
    err << "error: internal: " << one_line(e.what()) << "\n";
    return kExitInternal;
  }
  return kExitUsage;
}

}  // namespace zcstyle
