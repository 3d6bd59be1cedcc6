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
#include "saga/eval.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>
#include <unordered_map>

#include <json.hpp>

namespace saga {

DetectionSet parse_coco_results(std::string_view json_text, const DatasetManifest& ground_truth) {
  using json = nlohmann::json;
  json doc;
  try {
    doc = json::parse(json_text.begin(), json_text.end());
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("malformed results json: ") + e.what(), e.byte);
  }
  if (!doc.is_array()) throw ParseError("results document must be an array", 0);

  DetectionSet out;
  try {
    for (const auto& r : doc) {
      Detection d;
      d.image_id = r.at("image_id").get<std::int64_t>();
      d.category_id = r.at("category_id").get<std::int64_t>();
      const auto bbox = r.at("bbox").get<std::vector<double>>();
      if (bbox.size() != 4) throw ParseError("bbox must have 4 numbers");
      d.box = {bbox[0], bbox[1], bbox[2], bbox[3]};
      d.score = r.at("score").get<double>();
      if (!ground_truth.find_image(d.image_id)) {
        throw ValidationError("prediction references unknown image id " + std::to_string(d.image_id));
      }
      if (!ground_truth.find_category(d.category_id)) {
        throw ValidationError("prediction references unknown category id " +
                              std::to_string(d.category_id));
      }
      if (!(d.score >= 0.0 && d.score <= 1.0)) throw ValidationError("score outside [0, 1]");
      if (!(d.box.w > 0) || !(d.box.h > 0)) throw ValidationError("prediction box with non-positive size");
      out.push_back(d);
    }
  } catch (const json::exception& e) {
    throw ParseError(std::string("bad results field: ") + e.what());
  }
  return out;
}

double iou(const Box& a, const Box& b) {
  const double ix = std::max(0.0, std::min(a.x + a.w, b.x + b.w) - std::max(a.x, b.x));
  const double iy = std::max(0.0, std::min(a.y + a.h, b.y + b.h) - std::max(a.y, b.y));
  const double inter = ix * iy;
  const double uni = a.area() + b.area() - inter;
  return uni > 0 ? inter / uni : 0.0;
}

namespace {

struct GtEntry {
  Box box;
  bool ignore = false;
  bool matched = false;
};

}  // namespace

std::optional<PRCurve> precision_recall(std::span<const Detection> predictions,
                                        const DatasetManifest& ground_truth,
                                        std::int64_t class_id, double iou_threshold) {
  std::unordered_map<std::int64_t, std::vector<GtEntry>> gt_by_image;
  std::size_t num_gt = 0;
  for (const auto& image : ground_truth.images) {
    auto& entries = gt_by_image[image.id];
    for (const auto& inst : image.instances) {
      if (inst.category_id != class_id) continue;
      entries.push_back({bounding_box(inst.region), inst.ignore, false});
      if (!inst.ignore) ++num_gt;
    }
  }

  std::vector<std::size_t> order;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    if (predictions[i].category_id == class_id) order.push_back(i);
  }
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return predictions[a].score > predictions[b].score;
  });

  PRCurve curve;
  std::size_t tp = 0;
  std::size_t fp = 0;
  for (auto idx : order) {
    const auto& pred = predictions[idx];
    auto it = gt_by_image.find(pred.image_id);
    GtEntry* best = nullptr;
    double best_iou = -1;
    bool hits_ignored = false;
    if (it != gt_by_image.end()) {
      for (auto& gt : it->second) {
        const double overlap = iou(pred.box, gt.box);
        if (gt.ignore) {
          hits_ignored = hits_ignored || overlap >= iou_threshold;
          continue;
        }
        if (gt.matched || overlap < iou_threshold) continue;
        if (overlap > best_iou) {
          best_iou = overlap;
          best = &gt;
        }
      }
    }
    if (best) {
      best->matched = true;
      ++tp;
    } else if (hits_ignored) {
      continue;
    } else {
      ++fp;
    }
    const double recall = num_gt ? static_cast<double>(tp) / num_gt : 0.0;
    curve.points.push_back({static_cast<double>(tp) / (tp + fp), recall});
  }

  if (num_gt == 0 && curve.points.empty()) return std::nullopt;
  if (num_gt == 0) {
    curve.ap = 0;
    return curve;
  }

  // Precision envelope from the right, then sum over recall increments.
  std::vector<double> envelope(curve.points.size());
  double running = 0;
  for (std::size_t k = curve.points.size(); k-- > 0;) {
    running = std::max(running, curve.points[k].precision);
    envelope[k] = running;
  }
  double ap = 0;
  double prev_recall = 0;
  for (std::size_t k = 0; k < curve.points.size(); ++k) {
    ap += (curve.points[k].recall - prev_recall) * envelope[k];
    prev_recall = curve.points[k].recall;
  }
  curve.ap = ap;
  return curve;
}

std::optional<double> average_precision(std::span<const Detection> predictions,
                                        const DatasetManifest& ground_truth,
                                        std::int64_t class_id, double iou_threshold) {
  auto curve = precision_recall(predictions, ground_truth, class_id, iou_threshold);
  if (!curve) return std::nullopt;
  return curve->ap;
}

MapResult evaluate(std::span<const Detection> predictions, const DatasetManifest& ground_truth,
                   double iou_threshold) {
  MapResult result;
  double sum = 0;
  std::size_t defined = 0;
  for (const auto& cat : ground_truth.categories) {
    ClassAp entry;
    entry.category_id = cat.id;
    entry.name = cat.name;
    for (const auto& image : ground_truth.images)
      for (const auto& inst : image.instances)
        if (inst.category_id == cat.id && !inst.ignore) ++entry.ground_truth;
    entry.predictions = static_cast<std::size_t>(std::count_if(
        predictions.begin(), predictions.end(),
        [&](const Detection& d) { return d.category_id == cat.id; }));
    entry.ap = average_precision(predictions, ground_truth, cat.id, iou_threshold);
    if (entry.ap) {
      sum += *entry.ap;
      ++defined;
    }
    result.per_class.push_back(std::move(entry));
  }
  if (defined == 0) throw std::domain_error("mAP undefined: no class has ground truth or predictions");
  result.map = sum / static_cast<double>(defined);
  return result;
}

double map50(std::span<const Detection> predictions, const DatasetManifest& ground_truth) {
  return evaluate(predictions, ground_truth, 0.5).map;
}

}  // namespace saga
