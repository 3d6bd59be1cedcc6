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

// IoU matching, per-class average precision and mAP at IoU 0.5.
//
// Matching is greedy: predictions are visited by descending score (ties keep
// input order) and each takes the unmatched ground truth of its class with
// the highest IoU (ties go to the lowest index) if that IoU reaches the
// threshold. Ground truth flagged `ignore` never matches; a prediction that
// only overlaps ignored ground truth is dropped instead of counted as a false
// positive. AP integrates the monotone precision envelope over every recall
// step (all-points interpolation).

#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "saga/annotation.hpp"

namespace saga {

inline constexpr std::string_view kApInterpolation = "all-points";

struct Detection {
  std::int64_t image_id = 0;
  std::int64_t category_id = 0;
  Box box;
  double score = 0;
};

using DetectionSet = std::vector<Detection>;

// COCO results array: [{image_id, category_id, bbox, score}, ...]. Every
// image and category must exist in `ground_truth`.
DetectionSet parse_coco_results(std::string_view json_text, const DatasetManifest& ground_truth);

double iou(const Box& a, const Box& b);

struct PRPoint {
  double precision = 0;
  double recall = 0;
};

struct PRCurve {
  std::vector<PRPoint> points;  // one per counted prediction, in rank order
  double ap = 0;
};

// Empty when the class has neither ground truth nor counted predictions.
std::optional<PRCurve> precision_recall(std::span<const Detection> predictions,
                                        const DatasetManifest& ground_truth,
                                        std::int64_t class_id, double iou_threshold = 0.5);

std::optional<double> average_precision(std::span<const Detection> predictions,
                                        const DatasetManifest& ground_truth,
                                        std::int64_t class_id, double iou_threshold = 0.5);

struct ClassAp {
  std::int64_t category_id = 0;
  std::string name;
  std::size_t ground_truth = 0;  // non-ignored
  std::size_t predictions = 0;
  std::optional<double> ap;
};

struct MapResult {
  std::vector<ClassAp> per_class;
  double map = 0;
};

// Throws std::domain_error when no class has a defined AP.
MapResult evaluate(std::span<const Detection> predictions, const DatasetManifest& ground_truth,
                   double iou_threshold = 0.5);

double map50(std::span<const Detection> predictions, const DatasetManifest& ground_truth);

}  // namespace saga
