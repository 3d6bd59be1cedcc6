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

// Batch augmentation of a whole dataset on a pool of worker threads.
//
// Output layout under the output directory:
//   images/<name>.png|jpg   augmented images
//   annotations.json        (COCO) or classes.txt + labels/ (YOLO) or
//                           classes.txt + Annotations/ (VOC)
//   report.json             run report
//
// Output bytes and report contents depend only on the manifest, the images
// and the policy, never on worker count or completion order. The "runtime"
// section of the report (worker count, output directory, wall time) is the
// only part that varies between otherwise equal runs.

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "saga/annotation.hpp"
#include "saga/codec.hpp"
#include "saga/engine.hpp"

namespace saga {

// The output directory already has content and --force was not given.
class OutputCollision : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct PipelineConfig {
  std::filesystem::path input;
  Format format = Format::kCoco;
  std::filesystem::path image_root;
  std::filesystem::path output_dir;
  AugmentationPolicy policy;
  int workers = 1;
  OutputCodec codec;
  bool force = false;
  std::optional<std::vector<std::string>> class_names;

  void check() const;
};

struct ImageOutcome {
  std::int64_t image_id = 0;
  std::string source_file;
  std::string output_file;  // relative to the output directory
  bool ok = false;
  std::string error;
  std::vector<std::size_t> grayed_instances;
  std::size_t grayed_pixels = 0;
  std::string digest;  // FNV-1a 64 of the written bytes, hex
};

struct RunReport {
  std::size_t total = 0;
  std::size_t processed = 0;
  std::size_t failed = 0;
  std::map<std::int64_t, std::size_t> grayed_per_category;
  std::vector<ImageOutcome> images;  // ordered by image id
  nlohmann::ordered_json config;
  int workers = 1;
  std::string output_dir;
  double wall_seconds = 0;

  // 0 when every image was written, 2 when some failed.
  int exit_code() const { return failed == 0 ? 0 : 2; }
  nlohmann::ordered_json to_json() const;
};

const char* toolkit_version();

std::string fnv1a_hex(std::span<const std::uint8_t> bytes);

// Loads the manifest named by `config` and augments it.
RunReport run_pipeline(const PipelineConfig& config);

// Same, with the manifest already in memory.
RunReport run_pipeline(const DatasetManifest& manifest, const PipelineConfig& config);

struct AreaBucket {
  double lower = 0;  // inclusive
  double upper = 0;  // exclusive
  std::size_t count = 0;
};

struct DatasetStats {
  std::size_t images = 0;
  std::size_t instances = 0;
  std::map<std::int64_t, std::size_t> per_category;
  std::map<std::string, std::size_t> images_per_split;
  std::map<std::string, std::size_t> instances_per_split;
  std::vector<AreaBucket> area_histogram;  // ascending, empty buckets omitted

  nlohmann::ordered_json to_json(const DatasetManifest& manifest) const;
};

// Area buckets are [2^k, 2^(k+1)) of bounding-box pixel area; areas below one
// pixel go to [0, 1).
DatasetStats stats(const DatasetManifest& manifest);

}  // namespace saga
