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

// Acceptance checks. Prints one line per criterion and exits non-zero when
// any of them fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "gradcheck.hpp"
#include "oracles.hpp"
#include "pipeline_fixture.hpp"
#include "saga/engine.hpp"
#include "saga/eval.hpp"
#include "saga/harness.hpp"
#include "saga/pipeline.hpp"

namespace {

using Clock = std::chrono::steady_clock;

struct Outcome {
  bool pass = false;
  std::string detail;
};

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(const char* f, double a) {
  char buf[128];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

// Luminance against the exact oracle over every RGB triple plus random ones.
Outcome luminance_fidelity() {
  const auto t0 = Clock::now();
  long long mismatches = 0;
  for (int r = 0; r < 256; ++r)
    for (int g = 0; g < 256; ++g)
      for (int b = 0; b < 256; ++b)
        mismatches += saga::luminance(r, g, b) != oracle::luminance(r, g, b);
  std::mt19937_64 rng(101);
  std::uniform_int_distribution<int> byte(0, 255);
  for (int i = 0; i < 10000; ++i) {
    const int r = byte(rng), g = byte(rng), b = byte(rng);
    mismatches += saga::luminance(r, g, b) != oracle::luminance(r, g, b);
  }
  const double dt = seconds_since(t0);
  std::ostringstream d;
  d << (256 * 256 * 256 + 10000) << " triples, " << mismatches << " mismatches, " << fmt("%.2f s", dt);
  return {mismatches == 0 && dt < 5.0, d.str()};
}

bool covered_by(const saga::Instance& inst, int x, int y) {
  return oracle::region_covers(inst.region, x, y);
}

Outcome background_preservation() {
  std::mt19937_64 rng(202);
  std::uniform_int_distribution<int> side(1, 64);
  std::uniform_int_distribution<int> count(0, 6);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::size_t checked = 0, changed = 0, grayed = 0;
  for (int f = 0; f < 200; ++f) {
    const int w = side(rng), h = side(rng);
    const auto image = oracle::random_image(rng, w, h);
    std::vector<saga::Instance> instances;
    const int n = count(rng);
    for (int k = 0; k < n; ++k) {
      saga::Instance inst;
      inst.category_id = static_cast<std::int64_t>(rng() % 3);
      inst.region = oracle::random_region(rng, w, h);
      inst.ignore = unit(rng) < 0.2;
      instances.push_back(std::move(inst));
    }
    // Force some overlap.
    if (n >= 2 && unit(rng) < 0.5) instances[1].region = instances[0].region;
    saga::AugmentationPolicy policy;
    policy.per_instance_probability = unit(rng) < 0.5 ? 1.0 : unit(rng);
    policy.include_ignore = unit(rng) < 0.5;
    if (unit(rng) < 0.3) policy.category_filter = std::set<std::int64_t>{0, 2};
    policy.seed = rng();
    const auto out = saga::apply_saga(image, instances, policy, f);
    grayed += out.report.grayed_instances.size();
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        bool inside = false;
        for (auto i : out.report.grayed_instances) inside = inside || covered_by(instances[i], x, y);
        if (inside) continue;
        ++checked;
        changed += !(image.at(x, y) == out.image.at(x, y));
      }
    }
  }
  std::ostringstream d;
  d << "200 fixtures, " << grayed << " grayed instances, " << checked << " background pixels, " << changed
    << " changed";
  return {changed == 0 && grayed > 0, d.str()};
}

Outcome near_idempotence() {
  int worst = 0;
  for (int v = 0; v < 256; ++v) worst = std::max(worst, std::abs(saga::luminance(v, v, v) - v));
  std::mt19937_64 rng(303);
  std::uniform_int_distribution<int> side(1, 64);
  int unstable = 0;
  for (int i = 0; i < 100; ++i) {
    const auto once = saga::apply_full_gray(oracle::random_image(rng, side(rng), side(rng)));
    unstable += !(saga::apply_full_gray(once) == once);
  }
  std::vector<std::uint8_t> ramp;
  for (int v = 0; v < 256; ++v) ramp.insert(ramp.end(), {std::uint8_t(v), std::uint8_t(v), std::uint8_t(v)});
  const saga::ImageBuffer gray(256, 1, ramp);
  const auto once = saga::apply_full_gray(gray);
  unstable += !(saga::apply_full_gray(once) == once);
  std::ostringstream d;
  d << "max |lum(v,v,v)-v| = " << worst << ", " << unstable << " of 101 images changed on second pass";
  return {worst <= 1 && unstable == 0, d.str()};
}

Outcome rasterizer() {
  std::mt19937_64 rng(404);
  std::uniform_int_distribution<int> side(1, 16);
  int bad = 0;
  for (int i = 0; i < 1000; ++i) {
    const int w = side(rng), h = side(rng);
    const auto region = oracle::random_region(rng, w, h);
    const auto mask = saga::rasterize(region, w, h);
    bool same = mask.width() == w && mask.height() == h;
    for (int y = 0; y < h && same; ++y)
      for (int x = 0; x < w && same; ++x) same = mask.test(x, y) == oracle::region_covers(region, x, y);
    bad += !same;
  }
  return {bad == 0, "1000 regions, " + std::to_string(bad) + " differ"};
}

Outcome round_trips() {
  std::mt19937_64 rng(505);
  int bad = 0;
  std::size_t instances = 0;
  std::string first_reason;
  for (auto format : {saga::Format::kCoco, saga::Format::kYolo, saga::Format::kVoc}) {
    for (int i = 0; i < 100; ++i) {
      const auto m = oracle::random_manifest(rng, format);
      for (const auto& im : m.images) instances += im.instances.size();
      std::string why;
      bool ok = false;
      try {
        const auto files = saga::serialize(m, format);
        const auto back = saga::parse_serialized(files, format, &m);
        ok = oracle::equivalent(m, back, format, 1e-6, &why);
      } catch (const std::exception& e) {
        why = e.what();
      }
      if (!ok) {
        ++bad;
        if (first_reason.empty()) first_reason = std::string(saga::to_string(format)) + ": " + why;
      }
    }
  }
  std::string d = "300 manifests, " + std::to_string(instances) + " instances, " + std::to_string(bad) + " failed";
  if (!first_reason.empty()) d += " (" + first_reason + ")";
  return {bad == 0, d};
}

Outcome ema_closed_form() {
  std::mt19937_64 rng(606);
  std::normal_distribution<double> normal;
  double worst = 0;
  for (double alpha : {0.0, 0.5, 0.9, 0.999, 1.0}) {
    saga::harness::AdaptationState s;
    s.alpha = alpha;
    s.student.values.resize(50);
    s.teacher.values.resize(50);
    for (auto& v : s.student.values) v = normal(rng);
    for (auto& v : s.teacher.values) v = normal(rng);
    const auto t0 = s.teacher.values;
    for (int k = 1; k <= 100; ++k) {
      s = saga::harness::ema_update(std::move(s));
      const double ak = std::pow(alpha, k);
      for (std::size_t i = 0; i < t0.size(); ++i) {
        const double expect = ak * t0[i] + (1 - ak) * s.student.values[i];
        worst = std::max(worst, std::fabs(s.teacher.values[i] - expect));
      }
    }
  }
  return {worst <= 1e-10, fmt("max deviation %.3g over k <= 100, 5 alphas", worst)};
}

Outcome gradient_check() {
  const auto probes = gradcheck::run(10, 707);
  double worst = 0;
  for (const auto& p : probes) worst = std::max(worst, p.relative_error);
  return {probes.size() == 10 && worst <= 1e-4, fmt("10 probes, max relative error %.3g", worst)};
}

// ---- mAP fixtures -------------------------------------------------------------

struct MapFixture {
  std::string name;
  saga::DatasetManifest gt;
  std::vector<saga::Detection> preds;
  std::optional<double> hand;  // hand-computed value when known
};

saga::DatasetManifest gt_of(int classes, const std::vector<std::tuple<std::int64_t, std::int64_t, saga::Box, bool>>& items,
                            int images = 1) {
  saga::DatasetManifest m;
  for (int c = 0; c < classes; ++c) m.categories.push_back({c, "c" + std::to_string(c)});
  for (int i = 0; i < images; ++i) m.images.push_back(oracle::record(i, "i" + std::to_string(i) + ".png", 100, 100));
  for (const auto& [image, cls, box, ignore] : items) {
    saga::Instance inst;
    inst.category_id = cls;
    inst.region = box;
    inst.ignore = ignore;
    m.images[image].instances.push_back(inst);
  }
  return m;
}

saga::Detection det(std::int64_t image, std::int64_t cls, saga::Box box, double score) {
  return {image, cls, box, score};
}

std::vector<MapFixture> map_fixtures() {
  using B = saga::Box;
  std::vector<MapFixture> f;
  const B a{0, 0, 10, 10}, b{20, 20, 10, 10}, c{50, 50, 20, 10}, d{70, 0, 10, 30};
  f.push_back({"single exact match", gt_of(1, {{0, 0, a, false}}), {det(0, 0, a, 0.9)}, 1.0});
  f.push_back({"iou 1/7 is a miss", gt_of(1, {{0, 0, B{0, 0, 2, 2}, false}}), {det(0, 0, B{1, 1, 2, 2}, 0.9)}, 0.0});
  f.push_back({"duplicate is a false positive after the hit",
               gt_of(1, {{0, 0, a, false}}),
               {det(0, 0, a, 0.9), det(0, 0, B{1, 0, 10, 10}, 0.8)},
               1.0});
  f.push_back({"two gt one hit caps recall", gt_of(1, {{0, 0, a, false}, {0, 0, b, false}}), {det(0, 0, a, 0.9)}, 0.5});
  f.push_back({"false positive ranked first",
               gt_of(1, {{0, 0, a, false}}),
               {det(0, 0, c, 0.95), det(0, 0, a, 0.5)},
               0.5});
  f.push_back({"fp between hits",
               gt_of(1, {{0, 0, a, false}, {0, 0, b, false}}),
               {det(0, 0, a, 0.9), det(0, 0, c, 0.8), det(0, 0, b, 0.7)},
               0.5 + 0.5 * 2.0 / 3.0});
  f.push_back({"ignored gt absorbs its prediction",
               gt_of(1, {{0, 0, a, false}, {0, 0, b, true}}),
               {det(0, 0, b, 0.95), det(0, 0, a, 0.9)},
               1.0});
  f.push_back({"class with only predictions scores zero",
               gt_of(2, {{0, 0, a, false}}),
               {det(0, 0, a, 0.9), det(0, 1, b, 0.4)},
               0.5});
  f.push_back({"class without gt or predictions is skipped",
               gt_of(3, {{0, 0, a, false}, {0, 1, b, false}}),
               {det(0, 0, a, 0.9), det(0, 1, c, 0.8)},
               0.5});
  f.push_back({"wrong image is a miss",
               gt_of(1, {{0, 0, a, false}, {1, 0, a, false}}, 2),
               {det(1, 0, a, 0.9), det(0, 0, b, 0.8)},
               0.5});
  f.push_back({"greedy takes the higher iou",
               gt_of(1, {{0, 0, B{0, 0, 10, 10}, false}, {0, 0, B{8, 0, 10, 10}, false}}),
               {det(0, 0, B{6, 0, 10, 10}, 0.9), det(0, 0, B{4, 0, 10, 10}, 0.8)},
               0.5});
  f.push_back({"greedy tie goes to the lower index",
               gt_of(1, {{0, 0, B{0, 0, 10, 10}, false}, {0, 0, B{4, 0, 10, 10}, false}}),
               {det(0, 0, B{2, 0, 10, 10}, 0.9), det(0, 0, B{4, 0, 10, 10}, 0.8)},
               1.0});
  f.push_back({"equal scores keep input order",
               gt_of(1, {{0, 0, a, false}}),
               {det(0, 0, c, 0.7), det(0, 0, a, 0.7)},
               0.5});
  f.push_back({"three classes mixed",
               gt_of(3, {{0, 0, a, false}, {0, 1, b, false}, {0, 2, c, false}, {0, 2, d, false}}),
               {det(0, 0, a, 0.9), det(0, 1, a, 0.8), det(0, 1, b, 0.6), det(0, 2, d, 0.95), det(0, 2, a, 0.5),
                det(0, 2, c, 0.3)},
               std::nullopt});
  f.push_back({"threshold edge at exactly one half",
               gt_of(1, {{0, 0, B{0, 0, 3, 1}, false}}),
               {det(0, 0, B{1, 0, 3, 1}, 0.9)},
               1.0});
  f.push_back({"just under one half", gt_of(1, {{0, 0, B{0, 0, 10, 10}, false}}), {det(0, 0, B{3.4, 0, 10, 10}, 0.9)},
               0.0});
  f.push_back({"all predictions miss", gt_of(2, {{0, 0, a, false}, {0, 1, b, false}}),
               {det(0, 0, d, 0.9), det(0, 1, c, 0.8)}, 0.0});
  f.push_back({"four gt in reverse score order",
               gt_of(1, {{0, 0, a, false}, {0, 0, b, false}, {0, 0, c, false}, {0, 0, d, false}}),
               {det(0, 0, B{60, 60, 5, 5}, 0.99), det(0, 0, d, 0.9), det(0, 0, c, 0.8), det(0, 0, b, 0.7),
                det(0, 0, B{90, 90, 5, 5}, 0.6), det(0, 0, a, 0.5)},
               std::nullopt});
  f.push_back({"ignored gt with no prediction",
               gt_of(1, {{0, 0, a, false}, {0, 0, b, true}}),
               {det(0, 0, a, 0.9)},
               1.0});
  f.push_back({"prediction overlapping ignored and real gt",
               gt_of(1, {{0, 0, B{0, 0, 10, 10}, true}, {0, 0, B{1, 0, 10, 10}, false}}),
               {det(0, 0, B{0, 0, 10, 10}, 0.9), det(0, 0, c, 0.8)},
               1.0});
  return f;
}

Outcome map_oracle() {
  int bad = 0;
  std::string first;
  const double seventh = saga::iou({0, 0, 2, 2}, {1, 1, 2, 2});
  if (std::fabs(seventh - 1.0 / 7.0) > 1e-12) {
    ++bad;
    first = "iou of the 1/7 pair is " + std::to_string(seventh);
  }
  const auto fixtures = map_fixtures();
  for (const auto& fx : fixtures) {
    const auto expect = oracle::map50(fx.preds, fx.gt);
    double got = std::nan("");
    try {
      got = saga::map50(fx.preds, fx.gt);
    } catch (const std::exception&) {
    }
    bool ok = expect && std::fabs(got - *expect) <= 1e-9;
    if (fx.hand) ok = ok && std::fabs(got - *fx.hand) <= 1e-9;
    if (!ok) {
      ++bad;
      if (first.empty()) first = fx.name + ": got " + std::to_string(got);
    }
  }
  std::string d = std::to_string(fixtures.size()) + " fixtures plus the 1/7 iou, " + std::to_string(bad) + " failed";
  if (!first.empty()) d += " (" + first + ")";
  return {bad == 0 && fixtures.size() == 20, d};
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const auto n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

Outcome saga_effect() {
  const auto t0 = Clock::now();
  std::vector<double> saga_maps, vanilla_maps, gray_maps;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    for (auto mode : {saga::AugmentMode::kSaga, saga::AugmentMode::kIdentity, saga::AugmentMode::kFullGray}) {
      saga::harness::TrainConfig c;
      c.seed = seed;
      c.color_bias_strength = 0.9;
      c.source_mode = mode;
      const double m = saga::harness::train_adaptation(c).teacher_target_map50;
      (mode == saga::AugmentMode::kSaga ? saga_maps : mode == saga::AugmentMode::kIdentity ? vanilla_maps : gray_maps)
          .push_back(m);
    }
  }
  const double s = median(saga_maps), v = median(vanilla_maps), g = median(gray_maps);
  const double dt = seconds_since(t0);
  char buf[200];
  std::snprintf(buf, sizeof buf, "median mAP50 saga %.4f, vanilla %.4f, full gray %.4f, %.1f s", s, v, g, dt);
  return {s > v && s > g && dt < 600.0, buf};
}

Outcome pipeline_determinism() {
  const auto t0 = Clock::now();
  oracle::TempDir dir("acceptance_pipeline");
  const auto ds = fixture::write_dataset(dir.path() / "in", 50, 1010);
  auto run = [&](int workers, const char* name) {
    saga::PipelineConfig c;
    c.input = ds.manifest_path;
    c.format = saga::Format::kCoco;
    c.image_root = ds.image_root;
    c.output_dir = dir.path() / name;
    c.policy.per_instance_probability = 0.6;
    c.policy.seed = 42;
    c.workers = workers;
    auto json = saga::run_pipeline(c).to_json();
    json.erase("runtime");
    auto on_disk = nlohmann::json::parse(fixture::slurp(c.output_dir / "report.json"));
    on_disk.erase("runtime");
    return std::make_pair(json, on_disk);
  };
  const auto [a, a_disk] = run(1, "w1");
  const auto [b, b_disk] = run(8, "w8");
  const bool files = fixture::same_files(dir.path() / "w1", dir.path() / "w8");
  const bool reports = a == b && a_disk == b_disk;
  const bool complete = a["images_processed"] == 50;
  const double dt = seconds_since(t0);
  std::ostringstream d;
  d << "50 images, outputs " << (files ? "identical" : "differ") << ", reports " << (reports ? "equal" : "differ")
    << ", " << fmt("%.2f s", dt);
  return {files && reports && complete && dt < 30.0, d.str()};
}

}  // namespace

int main() {
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria = {
      {"luminance matches the exact oracle", luminance_fidelity},
      {"background pixels are untouched", background_preservation},
      {"gray is stable under a second pass", near_idempotence},
      {"rasterizer matches per-pixel membership", rasterizer},
      {"parsers round-trip", round_trips},
      {"ema closed form", ema_closed_form},
      {"gradient check", gradient_check},
      {"map50 matches the oracle", map_oracle},
      {"saga beats vanilla and full gray", saga_effect},
      {"pipeline is worker-count independent", pipeline_determinism},
  };
  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failures += !o.pass;
    std::printf("criterion %zu: %s  %s: %s\n", i + 1, o.pass ? "PASS" : "FAIL", criteria[i].first, o.detail.c_str());
    std::fflush(stdout);
  }
  return failures == 0 ? 0 : 1;
}
