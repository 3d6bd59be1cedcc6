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
#include <unordered_map>

#include <json.hpp>

#include "saga/annotation.hpp"

namespace saga {

using json = nlohmann::json;

namespace {

const json& require_array(const json& doc, const char* key) {
  auto it = doc.find(key);
  if (it == doc.end() || !it->is_array()) {
    throw ParseError(std::string("COCO document has no '") + key + "' array");
  }
  return *it;
}

Region region_from_annotation(const json& ann) {
  auto seg = ann.find("segmentation");
  if (seg != ann.end() && seg->is_array() && !seg->empty()) {
    Polygon poly;
    for (const auto& flat : *seg) {
      const auto coords = flat.get<std::vector<double>>();
      if (coords.size() % 2 != 0) throw ParseError("odd coordinate count in segmentation");
      std::vector<Point> ring;
      for (std::size_t i = 0; i + 1 < coords.size(); i += 2) ring.push_back({coords[i], coords[i + 1]});
      poly.rings.push_back(std::move(ring));
    }
    return poly;
  }
  // RLE masks (object-valued segmentation) fall back to the bbox.
  const auto bbox = ann.at("bbox").get<std::vector<double>>();
  if (bbox.size() != 4) throw ParseError("bbox must have 4 numbers");
  return Box{bbox[0], bbox[1], bbox[2], bbox[3]};
}

}  // namespace

DatasetManifest parse_coco(std::string_view json_text) {
  json doc;
  try {
    doc = json::parse(json_text.begin(), json_text.end());
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("malformed COCO json: ") + e.what(), e.byte);
  }
  if (!doc.is_object()) throw ParseError("COCO document is not an object", 0);

  DatasetManifest manifest;
  manifest.provenance = Format::kCoco;
  try {
    for (const auto& c : require_array(doc, "categories")) {
      manifest.categories.push_back({c.at("id").get<std::int64_t>(), c.at("name").get<std::string>()});
    }

    std::unordered_map<std::int64_t, std::size_t> image_index;
    for (const auto& im : require_array(doc, "images")) {
      ImageRecord record;
      record.id = im.at("id").get<std::int64_t>();
      record.file = im.value("file_name", std::string{});
      record.width = im.at("width").get<int>();
      record.height = im.at("height").get<int>();
      if (auto s = im.find("split"); s != im.end()) record.split = split_from_string(s->get<std::string>());
      if (auto t = im.find("tags"); t != im.end()) {
        for (const auto& tag : *t) record.tags.insert(tag.get<std::string>());
      }
      if (!image_index.emplace(record.id, manifest.images.size()).second) {
        throw ValidationError("duplicate image id " + std::to_string(record.id));
      }
      manifest.images.push_back(std::move(record));
    }

    for (const auto& ann : require_array(doc, "annotations")) {
      const auto image_id = ann.at("image_id").get<std::int64_t>();
      const auto category_id = ann.at("category_id").get<std::int64_t>();
      auto it = image_index.find(image_id);
      if (it == image_index.end()) {
        throw ValidationError("annotation references unknown image id " + std::to_string(image_id));
      }
      if (!manifest.find_category(category_id)) {
        throw ValidationError("annotation references unknown category id " +
                              std::to_string(category_id));
      }
      Instance inst;
      inst.category_id = category_id;
      inst.region = region_from_annotation(ann);
      if (auto s = ann.find("score"); s != ann.end()) inst.score = s->get<double>();
      inst.ignore = ann.value("ignore", 0) != 0 || ann.value("iscrowd", 0) != 0;
      manifest.images[it->second].instances.push_back(std::move(inst));
    }
  } catch (const json::exception& e) {
    throw ParseError(std::string("bad COCO field: ") + e.what());
  }

  validate(manifest);
  return manifest;
}

std::string serialize_coco(const DatasetManifest& manifest) {
  using ojson = nlohmann::ordered_json;
  ojson doc;
  doc["images"] = ojson::array();
  doc["annotations"] = ojson::array();
  doc["categories"] = ojson::array();

  std::int64_t next_ann = 1;
  for (const auto& image : manifest.images) {
    ojson im;
    im["id"] = image.id;
    im["file_name"] = image.file;
    im["width"] = image.width;
    im["height"] = image.height;
    im["split"] = std::string(to_string(image.split));
    if (!image.tags.empty()) im["tags"] = image.tags;
    doc["images"].push_back(std::move(im));

    for (const auto& inst : image.instances) {
      const Box box = bounding_box(inst.region);
      ojson ann;
      ann["id"] = next_ann++;
      ann["image_id"] = image.id;
      ann["category_id"] = inst.category_id;
      ann["bbox"] = {box.x, box.y, box.w, box.h};
      ann["area"] = box.area();
      ann["iscrowd"] = 0;
      if (inst.ignore) ann["ignore"] = 1;
      if (const auto* poly = std::get_if<Polygon>(&inst.region)) {
        ojson rings = ojson::array();
        for (const auto& ring : poly->rings) {
          ojson flat = ojson::array();
          for (const auto& p : ring) {
            flat.push_back(p.x);
            flat.push_back(p.y);
          }
          rings.push_back(std::move(flat));
        }
        ann["segmentation"] = std::move(rings);
      }
      if (inst.score) ann["score"] = *inst.score;
      doc["annotations"].push_back(std::move(ann));
    }
  }
  for (const auto& c : manifest.categories) {
    doc["categories"].push_back({{"id", c.id}, {"name", c.name}});
  }
  return doc.dump(2) + "\n";
}

}  // namespace saga
