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

// Directional finite-difference check of the harness objective.

#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "saga/harness.hpp"

namespace gradcheck {

struct Probe {
  double analytic = 0;
  double numeric = 0;
  double relative_error = 0;
};

// Real scene cells; pseudo-labels from a random teacher at a low threshold so
// both loss terms are active.
inline saga::harness::HarnessObjective objective(std::uint64_t seed) {
  using namespace saga::harness;
  SceneConfig cfg;
  const auto src = generate_scenes(seed, 2, Domain::kSourceRgb, 0.9, cfg);
  const auto tgt = generate_scenes(seed, 2, Domain::kTargetGray, 0.9, cfg);
  HarnessObjective obj;
  obj.shape = {cfg.cell * cfg.cell * 3, 6, cfg.num_classes + 1};
  obj.source = extract_cells(src, cfg);
  obj.target = extract_cells(tgt, cfg);
  saga::Rng rng(seed + 100);
  const auto teacher = init_params(obj.shape, rng);
  obj.target.labels = pseudo_labels(predict(teacher, obj.shape, obj.target), obj.shape.outputs, 0.0);
  obj.target_weight = 0.7;
  return obj;
}

inline std::vector<Probe> run(int probes, std::uint64_t seed, double step = 1e-5) {
  auto obj = objective(seed);
  saga::Rng rng(seed);
  std::vector<Probe> out;
  for (int k = 0; k < probes; ++k) {
    auto params = saga::harness::init_params(obj.shape, rng);
    for (auto& v : params.values) v += 0.1 * rng.normal();
    std::vector<double> grad(params.values.size(), 0.0);
    obj.evaluate(params, grad);

    std::vector<double> dir(params.values.size());
    double norm = 0;
    for (auto& d : dir) {
      d = rng.normal();
      norm += d * d;
    }
    norm = std::sqrt(norm);
    for (auto& d : dir) d /= norm;

    auto shifted = params;
    for (std::size_t i = 0; i < dir.size(); ++i) shifted.values[i] = params.values[i] + step * dir[i];
    const double up = obj.evaluate(shifted).total;
    for (std::size_t i = 0; i < dir.size(); ++i) shifted.values[i] = params.values[i] - step * dir[i];
    const double down = obj.evaluate(shifted).total;

    Probe p;
    for (std::size_t i = 0; i < dir.size(); ++i) p.analytic += grad[i] * dir[i];
    p.numeric = (up - down) / (2 * step);
    p.relative_error = std::fabs(p.analytic - p.numeric) /
                       std::max({std::fabs(p.analytic), std::fabs(p.numeric), 1e-8});
    out.push_back(p);
  }
  return out;
}

}  // namespace gradcheck
