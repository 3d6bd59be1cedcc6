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
#include <algorithm>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "saga/annotation.hpp"
#include "saga/codec.hpp"

namespace saga {

namespace fs = std::filesystem;

namespace {

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t' || line[i] == '\r')) ++i;
    std::size_t j = i;
    while (j < line.size() && line[j] != ' ' && line[j] != '\t' && line[j] != '\r') ++j;
    if (j > i) fields.push_back(line.substr(i, j - i));
    i = j;
  }
  return fields;
}

double to_double(std::string_view field, const std::string& file, std::size_t line) {
  double value = 0;
  auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), value);
  if (ec != std::errc{} || ptr != field.data() + field.size()) {
    throw ParseError(file + ":" + std::to_string(line) + ": not a number '" +
                         std::string(field) + "'",
                     {}, file, line);
  }
  return value;
}

std::string fmt_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

DatasetManifest parse_yolo(std::span<const YoloLabelFile> files,
                           std::span<const std::string> class_names) {
  DatasetManifest manifest;
  manifest.provenance = Format::kYolo;
  for (std::size_t i = 0; i < class_names.size(); ++i) {
    manifest.categories.push_back({static_cast<std::int64_t>(i), class_names[i]});
  }

  std::int64_t next_id = 0;
  for (const auto& file : files) {
    ImageRecord record;
    record.id = next_id++;
    record.file = file.image_file;
    record.width = file.width;
    record.height = file.height;

    std::size_t line_no = 0;
    std::string_view text = file.text;
    while (!text.empty()) {
      ++line_no;
      const auto nl = text.find('\n');
      const auto line = text.substr(0, nl);
      text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);

      const auto fields = split_fields(line);
      if (fields.empty()) continue;
      if (fields.size() != 5) {
        throw ParseError(file.name + ":" + std::to_string(line_no) + ": expected 5 fields, got " +
                             std::to_string(fields.size()),
                         {}, file.name, line_no);
      }
      std::int64_t cls = -1;
      auto [ptr, ec] = std::from_chars(fields[0].data(), fields[0].data() + fields[0].size(), cls);
      if (ec != std::errc{} || ptr != fields[0].data() + fields[0].size()) {
        throw ParseError(file.name + ":" + std::to_string(line_no) + ": bad class index", {},
                         file.name, line_no);
      }
      if (cls < 0 || cls >= static_cast<std::int64_t>(class_names.size())) {
        throw ValidationError(file.name + ":" + std::to_string(line_no) + ": class index " +
                              std::to_string(cls) + " out of range");
      }
      const double cx = to_double(fields[1], file.name, line_no);
      const double cy = to_double(fields[2], file.name, line_no);
      const double w = to_double(fields[3], file.name, line_no);
      const double h = to_double(fields[4], file.name, line_no);

      Instance inst;
      inst.category_id = cls;
      inst.region = Box{(cx - w / 2) * record.width, (cy - h / 2) * record.height,
                        w * record.width, h * record.height};
      record.instances.push_back(std::move(inst));
    }
    manifest.images.push_back(std::move(record));
  }
  validate(manifest);
  return manifest;
}

DatasetManifest parse_yolo(const fs::path& label_dir, const fs::path& image_dir,
                           std::span<const std::string> class_names) {
  std::vector<fs::path> label_paths;
  for (const auto& entry : fs::directory_iterator(label_dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".txt" &&
        entry.path().filename() != "classes.txt") {
      label_paths.push_back(entry.path());
    }
  }
  std::sort(label_paths.begin(), label_paths.end());

  std::set<fs::path> images;
  if (fs::exists(image_dir)) {
    for (const auto& entry : fs::directory_iterator(image_dir))
      if (entry.is_regular_file()) images.insert(entry.path());
  }

  std::vector<YoloLabelFile> files;
  for (const auto& path : label_paths) {
    const auto stem = path.stem().string();
    fs::path image_path;
    for (const auto* ext : {".png", ".jpg", ".jpeg", ".PNG", ".JPG", ".JPEG"}) {
      auto candidate = image_dir / (stem + ext);
      if (images.count(candidate)) {
        image_path = candidate;
        break;
      }
    }
    if (image_path.empty()) throw ParseError("no image found for label file " + path.string());
    const auto size = probe_image_size(image_path);
    if (!size) throw ParseError("cannot read image size of " + image_path.string());

    std::ifstream in(path, std::ios::binary);
    std::ostringstream text;
    text << in.rdbuf();
    files.push_back({path.filename().string(), image_path.filename().string(), size->first,
                     size->second, text.str()});
  }
  return parse_yolo(files, class_names);
}

std::vector<SerializedFile> serialize_yolo(const DatasetManifest& manifest) {
  std::vector<SerializedFile> out;
  std::string classes;
  for (std::size_t i = 0; i < manifest.categories.size(); ++i) {
    if (manifest.categories[i].id != static_cast<std::int64_t>(i)) {
      throw UnsupportedFeature("YOLO needs category ids 0..n-1 in order");
    }
    classes += manifest.categories[i].name + "\n";
  }
  out.push_back({"classes.txt", classes});

  std::set<std::string> stems;
  for (const auto& image : manifest.images) {
    const auto stem = file_stem(image.file);
    if (!stems.insert(stem).second) throw UnsupportedFeature("duplicate file stem '" + stem + "'");
    std::string text;
    for (const auto& inst : image.instances) {
      const auto* box = std::get_if<Box>(&inst.region);
      if (!box) throw UnsupportedFeature("YOLO labels carry boxes only, got a polygon");
      const double W = image.width;
      const double H = image.height;
      text += std::to_string(inst.category_id) + " " + fmt_double((box->x + box->w / 2) / W) +
              " " + fmt_double((box->y + box->h / 2) / H) + " " + fmt_double(box->w / W) + " " +
              fmt_double(box->h / H) + "\n";
    }
    out.push_back({"labels/" + stem + ".txt", std::move(text)});
  }
  return out;
}

}  // namespace saga
