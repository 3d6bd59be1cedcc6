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
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include <boost/property_tree/ptree.hpp>
#include <boost/property_tree/xml_parser.hpp>

#include "saga/annotation.hpp"

namespace saga {

namespace fs = std::filesystem;
namespace pt = boost::property_tree;

namespace {

double coord(const pt::ptree& bndbox, const char* key) {
  auto value = bndbox.get_optional<double>(key);
  if (!value) throw ParseError(std::string("VOC bndbox has no numeric <") + key + ">");
  return *value;
}

std::string fmt_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string xml_escape(std::string_view s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

}  // namespace

// VOC boxes are 1-based and inclusive on both ends.
ImageRecord parse_voc(std::string_view xml_text, std::span<const Category> categories) {
  pt::ptree tree;
  try {
    std::istringstream in{std::string(xml_text)};
    pt::read_xml(in, tree);
  } catch (const pt::xml_parser_error& e) {
    throw ParseError(std::string("malformed VOC xml: ") + e.what(), {}, e.filename(), e.line());
  }
  auto root = tree.get_child_optional("annotation");
  if (!root) throw ParseError("VOC document has no <annotation> root");
  auto size = root->get_child_optional("size");
  if (!size) throw ParseError("VOC annotation has no <size>");

  ImageRecord record;
  record.file = root->get<std::string>("filename", "");
  auto width = size->get_optional<int>("width");
  auto height = size->get_optional<int>("height");
  if (!width || !height) throw ParseError("VOC <size> lacks width/height");
  record.width = *width;
  record.height = *height;
  if (record.width < 1 || record.height < 1) throw ValidationError("VOC image has empty size");

  for (const auto& [key, obj] : *root) {
    if (key != "object") continue;
    const auto name = obj.get<std::string>("name", "");
    auto cat = std::find_if(categories.begin(), categories.end(),
                            [&](const Category& c) { return c.name == name; });
    if (cat == categories.end()) throw ValidationError("VOC object has unknown class '" + name + "'");
    auto bndbox = obj.get_child_optional("bndbox");
    if (!bndbox) throw ParseError("VOC object '" + name + "' has no <bndbox>");
    const double xmin = coord(*bndbox, "xmin");
    const double ymin = coord(*bndbox, "ymin");
    const double xmax = coord(*bndbox, "xmax");
    const double ymax = coord(*bndbox, "ymax");
    if (xmax < xmin || ymax < ymin) {
      throw ValidationError("VOC object '" + name + "' has max < min");
    }
    Instance inst;
    inst.category_id = cat->id;
    inst.region = Box{xmin - 1, ymin - 1, xmax - xmin + 1, ymax - ymin + 1};
    inst.ignore = obj.get<int>("difficult", 0) != 0;
    record.instances.push_back(std::move(inst));
  }
  return record;
}

DatasetManifest parse_voc(const fs::path& annotation_dir, std::span<const std::string> class_names) {
  DatasetManifest manifest;
  manifest.provenance = Format::kVoc;
  for (std::size_t i = 0; i < class_names.size(); ++i) {
    manifest.categories.push_back({static_cast<std::int64_t>(i), class_names[i]});
  }
  std::vector<fs::path> paths;
  for (const auto& entry : fs::directory_iterator(annotation_dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".xml") paths.push_back(entry.path());
  }
  std::sort(paths.begin(), paths.end());

  std::int64_t next_id = 0;
  for (const auto& path : paths) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream text;
    text << in.rdbuf();
    auto record = parse_voc(text.str(), manifest.categories);
    record.id = next_id++;
    if (record.file.empty()) record.file = path.stem().string() + ".jpg";
    manifest.images.push_back(std::move(record));
  }
  validate(manifest);
  return manifest;
}

std::vector<SerializedFile> serialize_voc(const DatasetManifest& manifest) {
  std::vector<SerializedFile> out;
  std::string classes;
  for (std::size_t i = 0; i < manifest.categories.size(); ++i) {
    if (manifest.categories[i].id != static_cast<std::int64_t>(i)) {
      throw UnsupportedFeature("VOC export needs category ids 0..n-1 in order");
    }
    classes += manifest.categories[i].name + "\n";
  }
  out.push_back({"classes.txt", classes});

  std::set<std::string> stems;
  for (const auto& image : manifest.images) {
    const auto stem = file_stem(image.file);
    if (!stems.insert(stem).second) throw UnsupportedFeature("duplicate file stem '" + stem + "'");
    std::ostringstream xml;
    xml << "<annotation>\n"
        << "  <filename>" << xml_escape(image.file) << "</filename>\n"
        << "  <size>\n"
        << "    <width>" << image.width << "</width>\n"
        << "    <height>" << image.height << "</height>\n"
        << "    <depth>3</depth>\n"
        << "  </size>\n";
    for (const auto& inst : image.instances) {
      const auto* box = std::get_if<Box>(&inst.region);
      if (!box) throw UnsupportedFeature("VOC export carries boxes only, got a polygon");
      if (box->w < 1 || box->h < 1) {
        throw UnsupportedFeature("VOC inclusive boxes cannot be narrower than one pixel");
      }
      const auto* cat = manifest.find_category(inst.category_id);
      xml << "  <object>\n"
          << "    <name>" << xml_escape(cat ? cat->name : "") << "</name>\n"
          << "    <difficult>" << (inst.ignore ? 1 : 0) << "</difficult>\n"
          << "    <bndbox>\n"
          << "      <xmin>" << fmt_double(box->x + 1) << "</xmin>\n"
          << "      <ymin>" << fmt_double(box->y + 1) << "</ymin>\n"
          << "      <xmax>" << fmt_double(box->x + box->w) << "</xmax>\n"
          << "      <ymax>" << fmt_double(box->y + box->h) << "</ymax>\n"
          << "    </bndbox>\n"
          << "  </object>\n";
    }
    xml << "</annotation>\n";
    out.push_back({"Annotations/" + stem + ".xml", xml.str()});
  }
  return out;
}

}  // namespace saga
