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

// Detection dataset model and the COCO / YOLO / VOC interchange formats.
//
// Coordinates are kept exactly as read. Nothing is clipped here; clipping to
// the image happens at rasterization or evaluation time.

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <set>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace saga {

// Malformed input. `offset` is a byte offset for JSON, `line` a 1-based line
// for text formats; either may be absent.
class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& what, std::optional<std::size_t> offset = {},
             std::string file = {}, std::optional<std::size_t> line = {});

  std::optional<std::size_t> offset() const { return offset_; }
  const std::string& file() const { return file_; }
  std::optional<std::size_t> line() const { return line_; }

 private:
  std::optional<std::size_t> offset_;
  std::string file_;
  std::optional<std::size_t> line_;
};

// Well-formed input that breaks a dataset invariant (dangling id, bad box).
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Requested a feature the target format cannot carry.
class UnsupportedFeature : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Category {
  std::int64_t id = 0;
  std::string name;

  bool operator==(const Category&) const = default;
};

// Axis-aligned box, top-left corner plus size, in pixels.
struct Box {
  double x = 0, y = 0, w = 0, h = 0;

  double area() const { return w * h; }
  bool operator==(const Box&) const = default;
};

struct Point {
  double x = 0, y = 0;
  bool operator==(const Point&) const = default;
};

// One or more rings filled with the even-odd rule. Self-intersection is
// allowed. Each ring has at least three vertices.
struct Polygon {
  std::vector<std::vector<Point>> rings;
  bool operator==(const Polygon&) const = default;
};

using Region = std::variant<Box, Polygon>;

// Tight bounding box of a region. For a Box this is the box itself.
Box bounding_box(const Region& region);

struct Instance {
  std::int64_t category_id = 0;
  Region region;
  std::optional<double> score;  // predictions only
  bool ignore = false;          // "ignore" / VOC difficult / COCO iscrowd
};

enum class Split { kTrain, kVal, kTest };

std::string_view to_string(Split split);
Split split_from_string(std::string_view text);

struct ImageRecord {
  std::int64_t id = 0;
  std::string file;
  int width = 0;
  int height = 0;
  std::vector<Instance> instances;
  Split split = Split::kTrain;
  std::set<std::string> tags;
};

enum class Format { kCoco, kYolo, kVoc };

std::string_view to_string(Format format);
Format format_from_string(std::string_view text);

struct DatasetManifest {
  std::vector<Category> categories;
  std::vector<ImageRecord> images;
  Format provenance = Format::kCoco;

  const Category* find_category(std::int64_t id) const;
  const ImageRecord* find_image(std::int64_t id) const;
};

// Checks every manifest invariant and throws ValidationError naming the
// first offending id.
void validate(const DatasetManifest& manifest);

// ---- COCO ---------------------------------------------------------------

DatasetManifest parse_coco(std::string_view json_text);

// ---- YOLO ---------------------------------------------------------------

// One label file with the pixel size of its image already known.
struct YoloLabelFile {
  std::string name;        // label file name, used in error messages
  std::string image_file;  // image path recorded in the ImageRecord
  int width = 0;
  int height = 0;
  std::string text;
};

DatasetManifest parse_yolo(std::span<const YoloLabelFile> files,
                           std::span<const std::string> class_names);

// Reads every `.txt` in `label_dir`, pairs it with the image of the same stem
// in `image_dir` and takes the image size from the file header. Image ids are
// assigned 0..n-1 in label file name order.
DatasetManifest parse_yolo(const std::filesystem::path& label_dir,
                           const std::filesystem::path& image_dir,
                           std::span<const std::string> class_names);

// ---- VOC ----------------------------------------------------------------

// Object names are resolved against `categories`; an unknown name is a
// ValidationError.
ImageRecord parse_voc(std::string_view xml_text,
                      std::span<const Category> categories);

// Reads every `.xml` in `annotation_dir`. Categories are 0..n-1 over
// `class_names`; image ids follow file name order.
DatasetManifest parse_voc(const std::filesystem::path& annotation_dir,
                          std::span<const std::string> class_names);

// ---- serialization --------------------------------------------------------

// One output document. `path` is relative to the dataset root.
struct SerializedFile {
  std::string path;
  std::string contents;
};

// COCO: `annotations.json`. YOLO: `classes.txt` plus `labels/<stem>.txt`.
// VOC: `classes.txt` plus `Annotations/<stem>.xml`.
std::vector<SerializedFile> serialize(const DatasetManifest& manifest,
                                      Format format);

// Re-reads serialized documents without touching the filesystem. YOLO takes
// the image sizes and ids from `sizes_from`, since the label files do not
// carry them.
DatasetManifest parse_serialized(std::span<const SerializedFile> files,
                                 Format format,
                                 const DatasetManifest* sizes_from = nullptr);

// Loads a manifest from disk. `path` is the COCO json file, the YOLO label
// directory or the VOC annotation directory. YOLO and VOC read class names
// from `classes.txt` next to (or inside) `path` unless `class_names` is set.
DatasetManifest load_manifest(const std::filesystem::path& path, Format format,
                              const std::filesystem::path& image_root,
                              std::optional<std::vector<std::string>> class_names = {});

std::string file_stem(std::string_view file);

}  // namespace saga
