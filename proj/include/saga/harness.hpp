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

// Desk-scale mean-teacher domain adaptation.
//
// Scenes are small grids of cells; a cell holds at most one shape object.
// The detector is a two-layer perceptron applied to every cell patch that
// scores K object classes plus background, and its prediction box is the
// cell itself. Source scenes are RGB with object hue tied to the class label;
// target scenes are fully gray, so only shape separates the classes there.
//
// Training runs a source-only burn-in, copies the student into the teacher,
// then adapts: each step adds a supervised source loss and a target loss on
// teacher pseudo-labels, takes one student step and folds the student into
// the teacher with an exponential moving average.

#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "saga/annotation.hpp"
#include "saga/engine.hpp"
#include "saga/eval.hpp"
#include "saga/image.hpp"
#include "saga/random.hpp"

namespace saga::harness {

struct MlpShape {
  int inputs = 0;
  int hidden = 0;
  int outputs = 0;

  std::size_t parameter_count() const {
    return static_cast<std::size_t>(hidden) * inputs + hidden +
           static_cast<std::size_t>(outputs) * hidden + outputs;
  }
};

struct ModelParams {
  std::vector<double> values;

  bool finite() const;
};

// Scaled normal initialization, biases zero.
ModelParams init_params(const MlpShape& shape, Rng& rng);

struct AdaptationState {
  ModelParams student;
  ModelParams teacher;
  double alpha = 0.99;
  std::int64_t iteration = 0;
  std::int64_t burn_in_iters = 1;
  double pseudo_label_threshold = 0.8;
};

// teacher = alpha * teacher + (1 - alpha) * student, element-wise; the
// student is left alone and the iteration counter advances. Throws
// std::invalid_argument on a size mismatch.
AdaptationState ema_update(AdaptationState state);
void ema_update_in_place(AdaptationState& state);

struct LossBreakdown {
  double l_src = 0;
  double l_tgt = 0;
  double total = 0;  // l_src + l_tgt
};

enum class Domain { kSourceRgb, kTargetGray };

struct SceneConfig {
  int grid = 4;   // cells per side
  int cell = 8;   // pixels per cell side
  int num_classes = 3;
  double object_probability = 0.4;
  int min_object = 6;  // object box side, pixels
  int max_object = 8;
  // Chance that an empty source cell holds an unannotated, colored lookalike
  // shape, such as a painted or printed copy with no heat signature. Target
  // scenes never have them.
  double distractor_probability = 0.5;
  // Lower bound of background saturation; 0 lets some backgrounds be gray.
  double background_min_saturation = 0.0;
  // Annotate objects with their exact outline polygon instead of the box.
  bool polygon_instances = true;

  int image_size() const { return grid * cell; }
};

struct SyntheticScene {
  ImageBuffer image;
  std::vector<Instance> instances;
  Domain domain = Domain::kSourceRgb;
  std::vector<double> object_hues;  // degrees, one per instance, before any graying
};

// Source scenes: with probability `color_bias_strength` an object takes its
// class hue, otherwise a uniform random hue. Target scenes use uniform hues
// and are then converted with apply_full_gray. Scene i depends only on
// (seed, i, domain).
std::vector<SyntheticScene> generate_scenes(std::uint64_t seed, std::size_t n, Domain domain,
                                            double color_bias_strength,
                                            const SceneConfig& config = {});

// Class hue in degrees for label k of K.
double class_hue(int label, int num_classes);

// Row-major matrix of cell features plus one label per row. The label is the
// class index, `num_classes` for background, or -1 for "no target".
struct CellBatch {
  int dims = 0;
  std::vector<double> features;
  std::vector<int> labels;

  std::size_t rows() const { return labels.size(); }
  std::span<const double> row(std::size_t i) const {
    return std::span<const double>(features).subspan(i * dims, dims);
  }
};

// Cells of `scenes` in scene-major, row-major order. Pixel channels are mapped
// to [-0.5, 0.5].
CellBatch extract_cells(std::span<const SyntheticScene> scenes, const SceneConfig& config);
CellBatch extract_cells(std::span<const ImageBuffer> images,
                        std::span<const std::vector<Instance>> instances, const SceneConfig& config);

// Softmax outputs, rows() x shape.outputs.
std::vector<double> predict(const ModelParams& params, const MlpShape& shape, const CellBatch& batch);

// Summed cross entropy over rows with label >= 0. Adds d(loss)/d(params) to
// `grad` when it is non-empty.
double cross_entropy(const ModelParams& params, const MlpShape& shape, const CellBatch& batch,
                     std::span<double> grad = {});

// Rows whose highest teacher probability is strictly above `threshold` get
// that class as label; the rest get -1.
std::vector<int> pseudo_labels(std::span<const double> teacher_probs, int outputs, double threshold);

// The adaptation objective for fixed batches and fixed pseudo-labels:
//   l_src = mean cross entropy over the source rows
//   l_tgt = target_weight * (summed cross entropy over pseudo-labelled rows)
//           / (number of target rows)
struct HarnessObjective {
  MlpShape shape;
  CellBatch source;
  CellBatch target;  // labels hold the pseudo-labels
  double target_weight = 1.0;

  LossBreakdown evaluate(const ModelParams& params, std::span<double> grad = {}) const;
};

struct TrainConfig {
  AugmentMode source_mode = AugmentMode::kSaga;
  double alpha = 0.99;
  int burn_in_iters = 300;
  int total_iters = 700;
  double threshold = 0.8;
  std::uint64_t seed = 0;
  double color_bias_strength = 0.9;
  double target_weight = 1.0;

  int hidden = 24;
  int batch_scenes = 8;
  double learning_rate = 0.05;
  double momentum = 0.9;
  double student_noise = 0.05;  // std-dev of additive noise on student inputs
  std::size_t source_pool = 400;
  std::size_t target_pool = 400;
  std::size_t eval_scenes = 150;
  double divergence_factor = 1e3;
  SceneConfig scenes;

  void check() const;
};

struct TrainResult {
  double teacher_target_map50 = 0;
  double student_target_map50 = 0;
  double burn_in_target_map50 = 0;  // student at the end of burn-in
  std::vector<LossBreakdown> curve;  // one entry per iteration
  std::vector<std::size_t> pseudo_label_counts;  // one per adaptation iteration
  AdaptationState final_state;
};

// Non-finite loss or a loss above divergence_factor times the burn-in mean.
class DivergenceError : public std::runtime_error {
 public:
  DivergenceError(const std::string& what, std::string state_dump)
      : std::runtime_error(what), dump_(std::move(state_dump)) {}
  const std::string& state_dump() const { return dump_; }

 private:
  std::string dump_;
};

TrainResult train_adaptation(const TrainConfig& config);

// Teacher-style detections for `scenes`: every cell and every object class
// becomes one scored detection whose box is the cell.
DetectionSet detect(const ModelParams& params, const MlpShape& shape,
                    std::span<const SyntheticScene> scenes, const SceneConfig& config);

// Ground truth manifest for `scenes`, image ids 0..n-1.
DatasetManifest scenes_manifest(std::span<const SyntheticScene> scenes, const SceneConfig& config);

}  // namespace saga::harness
