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
#include "saga/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <thread>

#include "saga/eval.hpp"

namespace saga {

namespace fs = std::filesystem;

#ifndef SAGA_FORGE_VERSION
#define SAGA_FORGE_VERSION "0.0.0"
#endif

const char* toolkit_version() { return SAGA_FORGE_VERSION; }

void PipelineConfig::check() const {
  if (workers < 1) throw std::invalid_argument("worker count must be at least 1");
  if (codec.codec == ImageCodec::kJpeg && (codec.jpeg_quality < 1 || codec.jpeg_quality > 100)) {
    throw std::invalid_argument("JPEG quality must be in [1, 100]");
  }
  policy.check();
}

std::string fnv1a_hex(std::span<const std::uint8_t> bytes) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (auto b : bytes) {
    h ^= b;
    h *= 0x100000001b3ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

namespace {

// Written under a temporary name and renamed, so a reader never sees a
// partial file.
void write_atomically(const fs::path& path, std::span<const std::uint8_t> bytes) {
  fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".part";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw std::runtime_error("short write to " + tmp.string());
  }
  fs::rename(tmp, path);
}

void write_atomically(const fs::path& path, std::string_view text) {
  write_atomically(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

std::string output_name(const ImageRecord& image, const OutputCodec& codec) {
  fs::path rel(image.file.empty() ? "image_" + std::to_string(image.id) : image.file);
  rel.replace_extension(codec.extension());
  return (fs::path("images") / rel.relative_path()).generic_string();
}

nlohmann::ordered_json config_echo(const PipelineConfig& config) {
  nlohmann::ordered_json j;
  j["input"] = config.input.generic_string();
  j["format"] = std::string(to_string(config.format));
  j["images"] = config.image_root.generic_string();
  j["mode"] = std::string(to_string(config.policy.mode));
  j["per_instance_probability"] = config.policy.per_instance_probability;
  j["seed"] = config.policy.seed;
  if (config.policy.category_filter) {
    j["categories"] = std::vector<std::int64_t>(config.policy.category_filter->begin(),
                                                config.policy.category_filter->end());
  } else {
    j["categories"] = nullptr;
  }
  j["include_ignore"] = config.policy.include_ignore;
  j["codec"] = config.codec.to_string();
  j["ap_interpolation"] = std::string(kApInterpolation);
  return j;
}

bool has_content(const fs::path& dir) {
  return fs::exists(dir) && (!fs::is_directory(dir) || !fs::is_empty(dir));
}

}  // namespace

nlohmann::ordered_json RunReport::to_json() const {
  nlohmann::ordered_json j;
  j["toolkit_version"] = toolkit_version();
  j["config"] = config;
  j["images_total"] = total;
  j["images_processed"] = processed;
  j["images_failed"] = failed;
  nlohmann::ordered_json per_cat = nlohmann::ordered_json::object();
  for (const auto& [cat, n] : grayed_per_category) per_cat[std::to_string(cat)] = n;
  j["instances_grayed_per_category"] = std::move(per_cat);
  nlohmann::ordered_json list = nlohmann::ordered_json::array();
  for (const auto& im : images) {
    nlohmann::ordered_json e;
    e["image_id"] = im.image_id;
    e["source"] = im.source_file;
    e["status"] = im.ok ? "ok" : "failed";
    if (im.ok) {
      e["output"] = im.output_file;
      e["grayed_instances"] = im.grayed_instances;
      e["grayed_pixels"] = im.grayed_pixels;
      e["digest"] = im.digest;
    } else {
      e["error"] = im.error;
    }
    list.push_back(std::move(e));
  }
  j["images"] = std::move(list);
  j["runtime"] = {{"workers", workers}, {"output_dir", output_dir}, {"wall_time_s", wall_seconds}};
  return j;
}

RunReport run_pipeline(const PipelineConfig& config) {
  config.check();
  const auto manifest = load_manifest(config.input, config.format, config.image_root, config.class_names);
  return run_pipeline(manifest, config);
}

RunReport run_pipeline(const DatasetManifest& manifest, const PipelineConfig& config) {
  config.check();
  if (has_content(config.output_dir) && !config.force) {
    throw OutputCollision("output directory " + config.output_dir.string() +
                          " is not empty; pass --force to overwrite");
  }
  const auto started = std::chrono::steady_clock::now();

  // Serialize the rewritten manifest before any image is touched, so a format
  // limitation aborts the run with nothing written.
  const std::size_t n = manifest.images.size();
  {
    DatasetManifest probe = manifest;
    for (auto& image : probe.images) image.file = output_name(image, config.codec);
    (void)serialize(probe, config.format);
  }

  std::vector<ImageOutcome> outcomes(n);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next.fetch_add(1); i < n; i = next.fetch_add(1)) {
      const auto& image = manifest.images[i];
      auto& out = outcomes[i];
      out.image_id = image.id;
      out.source_file = image.file;
      try {
        const auto pixels = read_image(config.image_root / image.file);
        if (pixels.width() != image.width || pixels.height() != image.height) {
          throw CodecError("decoded size " + std::to_string(pixels.width()) + "x" +
                           std::to_string(pixels.height()) + " does not match manifest " +
                           std::to_string(image.width) + "x" + std::to_string(image.height));
        }
        auto result = apply_saga(pixels, image.instances, config.policy, image.id);
        const auto bytes = encode_image(result.image, config.codec);
        out.output_file = output_name(image, config.codec);
        write_atomically(config.output_dir / out.output_file, std::span<const std::uint8_t>(bytes));
        out.grayed_instances = std::move(result.report.grayed_instances);
        out.grayed_pixels = result.report.grayed_pixels;
        out.digest = fnv1a_hex(bytes);
        out.ok = true;
      } catch (const std::exception& e) {
        out.ok = false;
        out.error = e.what();
      }
    }
  };

  fs::create_directories(config.output_dir);
  const int threads = std::min<int>(config.workers, static_cast<int>(std::max<std::size_t>(n, 1)));
  std::vector<std::thread> pool;
  for (int t = 1; t < threads; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();

  std::vector<std::size_t> by_id(n);
  for (std::size_t i = 0; i < n; ++i) by_id[i] = i;
  std::stable_sort(by_id.begin(), by_id.end(), [&](std::size_t a, std::size_t b) {
    return manifest.images[a].id < manifest.images[b].id;
  });

  RunReport report;
  report.total = n;
  report.config = config_echo(config);
  report.workers = config.workers;
  report.output_dir = config.output_dir.generic_string();
  for (const auto& cat : manifest.categories) report.grayed_per_category[cat.id] = 0;

  DatasetManifest rewritten;
  rewritten.categories = manifest.categories;
  rewritten.provenance = config.format;
  for (auto i : by_id) {
    auto& outcome = outcomes[i];
    if (outcome.ok) {
      ++report.processed;
      const auto& image = manifest.images[i];
      for (auto k : outcome.grayed_instances) ++report.grayed_per_category[image.instances[k].category_id];
    } else {
      ++report.failed;
    }
    report.images.push_back(std::move(outcome));
  }
  for (const auto& im : report.images) {
    if (!im.ok) continue;
    auto record = *manifest.find_image(im.image_id);
    record.file = im.output_file;
    rewritten.images.push_back(std::move(record));
  }
  for (const auto& file : serialize(rewritten, config.format)) {
    write_atomically(config.output_dir / file.path, file.contents);
  }

  report.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  write_atomically(config.output_dir / "report.json", report.to_json().dump(2) + "\n");
  return report;
}

DatasetStats stats(const DatasetManifest& manifest) {
  DatasetStats s;
  for (const auto& cat : manifest.categories) s.per_category[cat.id] = 0;
  std::map<int, std::size_t> buckets;  // exponent k of [2^k, 2^(k+1)); INT_MIN for [0, 1)
  for (const auto& image : manifest.images) {
    ++s.images;
    const std::string split(to_string(image.split));
    ++s.images_per_split[split];
    for (const auto& inst : image.instances) {
      ++s.instances;
      ++s.per_category[inst.category_id];
      ++s.instances_per_split[split];
      const double area = bounding_box(inst.region).area();
      ++buckets[area < 1.0 ? -1 : std::ilogb(area)];
    }
  }
  for (const auto& [k, count] : buckets) {
    if (k < 0) {
      s.area_histogram.push_back({0.0, 1.0, count});
    } else {
      s.area_histogram.push_back({std::ldexp(1.0, k), std::ldexp(1.0, k + 1), count});
    }
  }
  return s;
}

nlohmann::ordered_json DatasetStats::to_json(const DatasetManifest& manifest) const {
  nlohmann::ordered_json j;
  j["images"] = images;
  j["instances"] = instances;
  nlohmann::ordered_json cats = nlohmann::ordered_json::array();
  for (const auto& [id, count] : per_category) {
    const auto* cat = manifest.find_category(id);
    cats.push_back({{"id", id}, {"name", cat ? cat->name : ""}, {"instances", count}});
  }
  j["per_category"] = std::move(cats);
  j["images_per_split"] = images_per_split;
  j["instances_per_split"] = instances_per_split;
  nlohmann::ordered_json hist = nlohmann::ordered_json::array();
  for (const auto& b : area_histogram) {
    hist.push_back({{"lower", b.lower}, {"upper", b.upper}, {"count", b.count}});
  }
  j["box_area_histogram"] = std::move(hist);
  return j;
}

}  // namespace saga
