/* Copyright 2026 The saga-forge Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

// saga-forge: augment, stats, eval and harness subcommands.
//
// Exit codes: 0 clean, 2 partial failure (some images failed), 1 fatal.

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "saga/annotation.hpp"
#include "saga/codec.hpp"
#include "saga/engine.hpp"
#include "saga/eval.hpp"
#include "saga/harness.hpp"
#include "saga/pipeline.hpp"

namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace {

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  for (std::string item; std::getline(ss, item, ',');) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

// Integers "a,b,c" or a range "a-b".
std::vector<std::uint64_t> parse_seeds(const std::string& text) {
  std::vector<std::uint64_t> seeds;
  for (const auto& item : split_list(text)) {
    const auto dash = item.find('-');
    if (dash != std::string::npos && dash > 0) {
      const auto lo = std::stoull(item.substr(0, dash));
      const auto hi = std::stoull(item.substr(dash + 1));
      if (hi < lo) throw std::invalid_argument("bad seed range " + item);
      for (auto s = lo; s <= hi; ++s) seeds.push_back(s);
    } else {
      seeds.push_back(std::stoull(item));
    }
  }
  if (seeds.empty()) throw std::invalid_argument("no seeds given");
  return seeds;
}

struct ManifestOptions {
  std::string path;
  std::string format = "coco";
  std::string images;
  std::string classes;

  saga::DatasetManifest load() const {
    std::optional<std::vector<std::string>> names;
    if (!classes.empty()) names = split_list(classes);
    return saga::load_manifest(path, saga::format_from_string(format), images, names);
  }
};

// ---- augment ------------------------------------------------------------------

struct AugmentOptions {
  ManifestOptions manifest;
  std::string out;
  std::string mode = "saga";
  double prob = 1.0;
  std::uint64_t seed = 0;
  int workers = 1;
  std::string codec = "png";
  std::string categories;
  bool exclude_ignore = false;
  bool force = false;
};

int run_augment(const AugmentOptions& o) {
  saga::PipelineConfig config;
  config.input = o.manifest.path;
  config.format = saga::format_from_string(o.manifest.format);
  config.image_root = o.manifest.images;
  config.output_dir = o.out;
  config.policy.mode = saga::augment_mode_from_string(o.mode);
  config.policy.per_instance_probability = o.prob;
  config.policy.seed = o.seed;
  config.policy.include_ignore = !o.exclude_ignore;
  if (!o.categories.empty()) {
    std::set<std::int64_t> ids;
    for (const auto& c : split_list(o.categories)) ids.insert(std::stoll(c));
    config.policy.category_filter = std::move(ids);
  }
  config.workers = o.workers;
  config.codec = saga::OutputCodec::parse(o.codec);
  config.force = o.force;
  if (!o.manifest.classes.empty()) config.class_names = split_list(o.manifest.classes);

  const auto report = saga::run_pipeline(config);
  for (const auto& im : report.images) {
    if (!im.ok) std::cerr << "failed: " << im.source_file << ": " << im.error << "\n";
  }
  std::cout << "processed " << report.processed << " of " << report.total << " images, "
            << report.failed << " failed; report at " << (fs::path(o.out) / "report.json").string()
            << "\n";
  return report.exit_code();
}

// ---- eval ---------------------------------------------------------------------

int run_eval(const ManifestOptions& gt, const std::string& pred) {
  const auto manifest = gt.load();
  const auto detections = saga::parse_coco_results(read_text(pred), manifest);
  const auto result = saga::evaluate(detections, manifest, 0.5);
  ordered_json j;
  j["iou_threshold"] = 0.5;
  j["ap_interpolation"] = std::string(saga::kApInterpolation);
  ordered_json rows = ordered_json::array();
  for (const auto& c : result.per_class) {
    ordered_json r;
    r["category_id"] = c.category_id;
    r["name"] = c.name;
    r["ground_truth"] = c.ground_truth;
    r["predictions"] = c.predictions;
    r["ap"] = c.ap ? ordered_json(*c.ap) : ordered_json(nullptr);
    rows.push_back(std::move(r));
  }
  j["per_class"] = std::move(rows);
  j["map50"] = result.map;
  std::cout << j.dump(2) << "\n";
  return 0;
}

// ---- harness ------------------------------------------------------------------

struct HarnessOptions {
  std::string saga = "on";
  double alpha = 0.99;
  int burn_in = 300;
  int iters = 700;
  double threshold = 0.8;
  double bias = 0.9;
  std::string seeds = "0-4";
  double target_weight = 1.0;
  std::string out = ".";
};

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const auto n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

std::string curve_csv(const saga::harness::TrainResult& r, int burn_in) {
  std::ostringstream os;
  os.precision(10);
  os << "iteration,phase,l_src,l_tgt,total,pseudo_labels\n";
  for (std::size_t i = 0; i < r.curve.size(); ++i) {
    const bool adapting = static_cast<int>(i) >= burn_in;
    os << i << ',' << (adapting ? "adapt" : "burn_in") << ',' << r.curve[i].l_src << ','
       << r.curve[i].l_tgt << ',' << r.curve[i].total << ',';
    if (adapting) os << r.pseudo_label_counts[i - burn_in];
    os << '\n';
  }
  return os.str();
}

int run_harness(const HarnessOptions& o) {
  using saga::AugmentMode;
  if (o.saga != "on" && o.saga != "off") throw std::invalid_argument("--saga takes on or off");
  const auto seeds = parse_seeds(o.seeds);

  // The verdict needs the baselines, so "on" trains all three source modes.
  std::vector<AugmentMode> arms{AugmentMode::kIdentity};
  if (o.saga == "on") arms = {AugmentMode::kSaga, AugmentMode::kIdentity, AugmentMode::kFullGray};

  saga::harness::TrainConfig base;
  base.alpha = o.alpha;
  base.burn_in_iters = o.burn_in;
  base.total_iters = o.iters;
  base.threshold = o.threshold;
  base.color_bias_strength = o.bias;
  base.target_weight = o.target_weight;
  base.check();

  const fs::path out(o.out);
  ordered_json report;
  report["toolkit_version"] = saga::toolkit_version();
  ordered_json cfg;
  cfg["alpha"] = base.alpha;
  cfg["burn_in_iters"] = base.burn_in_iters;
  cfg["total_iters"] = base.total_iters;
  cfg["pseudo_label_threshold"] = base.threshold;
  cfg["pseudo_label_rule"] = "max teacher probability strictly above threshold";
  cfg["teacher_init"] = "copy of student at end of burn-in";
  cfg["target_weight"] = base.target_weight;
  cfg["color_bias_strength"] = base.color_bias_strength;
  cfg["seeds"] = seeds;
  cfg["hidden"] = base.hidden;
  cfg["batch_scenes"] = base.batch_scenes;
  cfg["learning_rate"] = base.learning_rate;
  cfg["momentum"] = base.momentum;
  cfg["student_noise"] = base.student_noise;
  cfg["distractor_probability"] = base.scenes.distractor_probability;
  cfg["polygon_instances"] = base.scenes.polygon_instances;
  cfg["ap_interpolation"] = std::string(saga::kApInterpolation);
  report["config"] = std::move(cfg);

  ordered_json arms_json = ordered_json::object();
  std::map<AugmentMode, double> medians;
  for (auto mode : arms) {
    const std::string name(saga::to_string(mode));
    ordered_json per_seed = ordered_json::array();
    std::vector<double> maps;
    for (auto seed : seeds) {
      auto config = base;
      config.source_mode = mode;
      config.seed = seed;
      std::cerr << "training " << name << " seed " << seed << "\n";
      ordered_json entry;
      entry["seed"] = seed;
      try {
        const auto r = saga::harness::train_adaptation(config);
        const auto csv = "curves/" + name + "_seed" + std::to_string(seed) + ".csv";
        write_text(out / csv, curve_csv(r, config.burn_in_iters));
        entry["teacher_target_map50"] = r.teacher_target_map50;
        entry["student_target_map50"] = r.student_target_map50;
        entry["burn_in_target_map50"] = r.burn_in_target_map50;
        entry["final_loss"] = r.curve.back().total;
        entry["curve_csv"] = csv;
        maps.push_back(r.teacher_target_map50);
      } catch (const saga::harness::DivergenceError& e) {
        entry["diverged"] = e.what();
        entry["state"] = e.state_dump();
        maps.push_back(0.0);
      }
      per_seed.push_back(std::move(entry));
    }
    medians[mode] = median(maps);
    ordered_json a;
    a["median_teacher_target_map50"] = medians[mode];
    a["runs"] = std::move(per_seed);
    arms_json[name] = std::move(a);
  }
  report["arms"] = std::move(arms_json);

  ordered_json verdict;
  if (o.saga == "on") {
    const double vs_vanilla = medians[AugmentMode::kSaga] - medians[AugmentMode::kIdentity];
    const double vs_full = medians[AugmentMode::kSaga] - medians[AugmentMode::kFullGray];
    verdict["saga_minus_vanilla"] = vs_vanilla;
    verdict["saga_minus_fullgray"] = vs_full;
    verdict["saga_beats_vanilla"] = vs_vanilla > 0;
    verdict["saga_beats_fullgray"] = vs_full > 0;
    verdict["pass"] = vs_vanilla > 0 && vs_full > 0;
  } else {
    verdict["pass"] = nullptr;
    verdict["note"] = "comparison needs --saga on";
  }
  report["verdict"] = verdict;
  write_text(out / "harness_report.json", report.dump(2) + "\n");
  std::cout << verdict.dump() << "\n";
  return 0;
}

void add_manifest_options(CLI::App* cmd, ManifestOptions& m, const std::string& flag) {
  cmd->add_option(flag, m.path, "Manifest: COCO json file, YOLO label dir or VOC annotation dir")
      ->required();
  cmd->add_option("--format", m.format, "coco|yolo|voc")->check(CLI::IsMember({"coco", "yolo", "voc"}));
  cmd->add_option("--images", m.images, "Image root directory");
  cmd->add_option("--classes", m.classes, "Class names for YOLO/VOC, comma separated");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"saga-forge: instance-level gray augmentation toolkit"};
  app.set_version_flag("--version", std::string(saga::toolkit_version()));
  app.require_subcommand(1);

  AugmentOptions aug;
  auto* augment = app.add_subcommand("augment", "Augment a dataset");
  add_manifest_options(augment, aug.manifest, "--input");
  augment->add_option("--out", aug.out, "Output directory")->required();
  augment->add_option("--mode", aug.mode, "saga|fullgray|identity")
      ->check(CLI::IsMember({"saga", "fullgray", "identity"}));
  augment->add_option("--prob", aug.prob, "Per-instance probability")->check(CLI::Range(0.0, 1.0));
  augment->add_option("--seed", aug.seed);
  augment->add_option("--workers", aug.workers)->check(CLI::PositiveNumber);
  augment->add_option("--codec", aug.codec, "png or jpeg[:quality]");
  augment->add_option("--categories", aug.categories, "Only these category ids, comma separated");
  augment->add_flag("--exclude-ignore", aug.exclude_ignore, "Leave ignore-flagged instances in color");
  augment->add_flag("--force", aug.force, "Write into a non-empty output directory");

  ManifestOptions st;
  auto* stats = app.add_subcommand("stats", "Dataset statistics as JSON");
  add_manifest_options(stats, st, "--input");

  ManifestOptions gt;
  std::string pred;
  auto* eval = app.add_subcommand("eval", "Per-class AP and mAP50 of COCO results");
  add_manifest_options(eval, gt, "--gt");
  eval->add_option("--pred", pred, "COCO results json")->required();

  HarnessOptions ho;
  auto* harness = app.add_subcommand("harness", "Mean-teacher adaptation experiment");
  harness->add_option("--saga", ho.saga, "on|off")->check(CLI::IsMember({"on", "off"}));
  harness->add_option("--alpha", ho.alpha)->check(CLI::Range(0.0, 1.0));
  harness->add_option("--burn-in", ho.burn_in);
  harness->add_option("--iters", ho.iters);
  harness->add_option("--threshold", ho.threshold)->check(CLI::Range(0.0, 1.0));
  harness->add_option("--bias", ho.bias)->check(CLI::Range(0.0, 1.0));
  harness->add_option("--seeds", ho.seeds, "e.g. 0-4 or 1,7,9");
  harness->add_option("--target-weight", ho.target_weight)->check(CLI::NonNegativeNumber);
  harness->add_option("--out", ho.out, "Directory for harness_report.json and curves/");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*augment) return run_augment(aug);
    if (*stats) {
      const auto manifest = st.load();
      std::cout << saga::stats(manifest).to_json(manifest).dump(2) << "\n";
      return 0;
    }
    if (*eval) return run_eval(gt, pred);
    if (*harness) return run_harness(ho);
  } catch (const saga::ParseError& e) {
    std::cerr << "parse error: " << e.what() << "\n";
  } catch (const saga::ValidationError& e) {
    std::cerr << "validation error: " << e.what() << "\n";
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
  }
  return 1;
}
