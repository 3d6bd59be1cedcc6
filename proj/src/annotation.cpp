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
#include "saga/annotation.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>
#include <unordered_set>

namespace saga {

ParseError::ParseError(const std::string& what, std::optional<std::size_t> offset,
                       std::string file, std::optional<std::size_t> line)
    : std::runtime_error(what), offset_(offset), file_(std::move(file)), line_(line) {}

Box bounding_box(const Region& region) {
  if (const auto* box = std::get_if<Box>(&region)) return *box;
  const auto& poly = std::get<Polygon>(region);
  double x0 = std::numeric_limits<double>::infinity();
  double y0 = x0;
  double x1 = -x0;
  double y1 = -x0;
  for (const auto& ring : poly.rings) {
    for (const auto& p : ring) {
      x0 = std::min(x0, p.x);
      y0 = std::min(y0, p.y);
      x1 = std::max(x1, p.x);
      y1 = std::max(y1, p.y);
    }
  }
  if (x0 > x1) return {};
  return {x0, y0, x1 - x0, y1 - y0};
}

std::string_view to_string(Split split) {
  switch (split) {
    case Split::kTrain: return "train";
    case Split::kVal: return "val";
    case Split::kTest: return "test";
  }
  return "train";
}

Split split_from_string(std::string_view text) {
  if (text == "train") return Split::kTrain;
  if (text == "val") return Split::kVal;
  if (text == "test") return Split::kTest;
  throw ParseError("unknown split '" + std::string(text) + "'");
}

std::string_view to_string(Format format) {
  switch (format) {
    case Format::kCoco: return "coco";
    case Format::kYolo: return "yolo";
    case Format::kVoc: return "voc";
  }
  return "coco";
}

Format format_from_string(std::string_view text) {
  if (text == "coco") return Format::kCoco;
  if (text == "yolo") return Format::kYolo;
  if (text == "voc") return Format::kVoc;
  throw std::invalid_argument("unknown format '" + std::string(text) + "'");
}

const Category* DatasetManifest::find_category(std::int64_t id) const {
  auto it = std::find_if(categories.begin(), categories.end(),
                         [id](const Category& c) { return c.id == id; });
  return it == categories.end() ? nullptr : &*it;
}

const ImageRecord* DatasetManifest::find_image(std::int64_t id) const {
  auto it = std::find_if(images.begin(), images.end(),
                         [id](const ImageRecord& r) { return r.id == id; });
  return it == images.end() ? nullptr : &*it;
}

namespace {

void validate_region(const Region& region, std::int64_t image_id) {
  if (const auto* box = std::get_if<Box>(&region)) {
    if (!(box->w > 0) || !(box->h > 0)) {
      throw ValidationError("image " + std::to_string(image_id) +
                            ": box with non-positive size");
    }
    if (!std::isfinite(box->x) || !std::isfinite(box->y) || !std::isfinite(box->w) ||
        !std::isfinite(box->h)) {
      throw ValidationError("image " + std::to_string(image_id) + ": non-finite box");
    }
    return;
  }
  const auto& poly = std::get<Polygon>(region);
  if (poly.rings.empty()) {
    throw ValidationError("image " + std::to_string(image_id) + ": polygon without rings");
  }
  for (const auto& ring : poly.rings) {
    if (ring.size() < 3) {
      throw ValidationError("image " + std::to_string(image_id) +
                            ": polygon ring with fewer than 3 vertices");
    }
    for (const auto& p : ring) {
      if (!std::isfinite(p.x) || !std::isfinite(p.y)) {
        throw ValidationError("image " + std::to_string(image_id) + ": non-finite vertex");
      }
    }
  }
}

}  // namespace

void validate(const DatasetManifest& manifest) {
  std::unordered_set<std::int64_t> category_ids;
  for (const auto& c : manifest.categories) {
    if (c.id < 0) throw ValidationError("negative category id " + std::to_string(c.id));
    if (c.name.empty()) throw ValidationError("category " + std::to_string(c.id) + " has no name");
    if (!category_ids.insert(c.id).second) {
      throw ValidationError("duplicate category id " + std::to_string(c.id));
    }
  }
  std::unordered_set<std::int64_t> image_ids;
  for (const auto& image : manifest.images) {
    if (!image_ids.insert(image.id).second) {
      throw ValidationError("duplicate image id " + std::to_string(image.id));
    }
    if (image.width < 1 || image.height < 1) {
      throw ValidationError("image " + std::to_string(image.id) + " has empty size");
    }
    for (const auto& inst : image.instances) {
      if (!category_ids.count(inst.category_id)) {
        throw ValidationError("image " + std::to_string(image.id) +
                              " references unknown category id " +
                              std::to_string(inst.category_id));
      }
      if (inst.score && !(*inst.score >= 0.0 && *inst.score <= 1.0)) {
        throw ValidationError("image " + std::to_string(image.id) + ": score outside [0,1]");
      }
      validate_region(inst.region, image.id);
    }
  }
}

std::string file_stem(std::string_view file) {
  return std::filesystem::path(std::string(file)).stem().string();
}

namespace {

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<std::string> read_class_names(const std::filesystem::path& dir) {
  for (const auto& candidate : {dir / "classes.txt", dir.parent_path() / "classes.txt"}) {
    if (!std::filesystem::exists(candidate)) continue;
    std::istringstream in(read_file(candidate));
    std::vector<std::string> names;
    std::string line;
    while (std::getline(in, line)) {
      while (!line.empty() && (line.back() == '\r' || line.back() == ' ')) line.pop_back();
      if (!line.empty()) names.push_back(line);
    }
    return names;
  }
  throw std::runtime_error("no classes.txt found for " + dir.string());
}

}  // namespace

DatasetManifest load_manifest(const std::filesystem::path& path, Format format,
                              const std::filesystem::path& image_root,
                              std::optional<std::vector<std::string>> class_names) {
  switch (format) {
    case Format::kCoco:
      return parse_coco(read_file(path));
    case Format::kYolo: {
      auto names = class_names ? *class_names : read_class_names(path);
      return parse_yolo(path, image_root, names);
    }
    case Format::kVoc: {
      auto names = class_names ? *class_names : read_class_names(path);
      return parse_voc(path, names);
    }
  }
  throw std::invalid_argument("unknown format");
}

std::string serialize_coco(const DatasetManifest& manifest);
std::vector<SerializedFile> serialize_yolo(const DatasetManifest& manifest);
std::vector<SerializedFile> serialize_voc(const DatasetManifest& manifest);

std::vector<SerializedFile> serialize(const DatasetManifest& manifest, Format format) {
  validate(manifest);
  switch (format) {
    case Format::kCoco: return {{"annotations.json", serialize_coco(manifest)}};
    case Format::kYolo: return serialize_yolo(manifest);
    case Format::kVoc: return serialize_voc(manifest);
  }
  throw std::invalid_argument("unknown format");
}

DatasetManifest parse_serialized(std::span<const SerializedFile> files, Format format,
                                 const DatasetManifest* sizes_from) {
  auto find = [&](std::string_view p) -> const SerializedFile* {
    for (const auto& f : files)
      if (f.path == p) return &f;
    return nullptr;
  };
  auto class_names = [&] {
    std::vector<std::string> names;
    const auto* f = find("classes.txt");
    if (!f) throw ParseError("missing classes.txt");
    std::istringstream in(f->contents);
    std::string line;
    while (std::getline(in, line))
      if (!line.empty()) names.push_back(line);
    return names;
  };

  switch (format) {
    case Format::kCoco: {
      const auto* f = find("annotations.json");
      if (!f) throw ParseError("missing annotations.json");
      return parse_coco(f->contents);
    }
    case Format::kYolo: {
      if (!sizes_from) throw std::invalid_argument("YOLO needs image sizes");
      std::vector<YoloLabelFile> labels;
      for (const auto& image : sizes_from->images) {
        const std::string path = "labels/" + file_stem(image.file) + ".txt";
        const auto* f = find(path);
        if (!f) throw ParseError("missing " + path);
        labels.push_back({path, image.file, image.width, image.height, f->contents});
      }
      auto names = class_names();
      auto manifest = parse_yolo(labels, names);
      for (std::size_t i = 0; i < manifest.images.size(); ++i) {
        manifest.images[i].id = sizes_from->images[i].id;
        manifest.images[i].split = sizes_from->images[i].split;
        manifest.images[i].tags = sizes_from->images[i].tags;
      }
      return manifest;
    }
    case Format::kVoc: {
      DatasetManifest manifest;
      manifest.provenance = Format::kVoc;
      auto names = class_names();
      for (std::size_t i = 0; i < names.size(); ++i)
        manifest.categories.push_back({static_cast<std::int64_t>(i), names[i]});
      std::int64_t next_id = 0;
      for (const auto& f : files) {
        if (!f.path.starts_with("Annotations/")) continue;
        auto record = parse_voc(f.contents, manifest.categories);
        record.id = sizes_from && next_id < static_cast<std::int64_t>(sizes_from->images.size())
                        ? sizes_from->images[next_id].id
                        : next_id;
        ++next_id;
        manifest.images.push_back(std::move(record));
      }
      return manifest;
    }
  }
  throw std::invalid_argument("unknown format");
}

}  // namespace saga
