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

// Instance-level gray augmentation.
//
// Annotated object regions are converted to luminance gray while every pixel
// outside them keeps its original color. The output is a hybrid RGB/gray
// image. Overlapping instances are merged into one union mask before any
// pixel is touched, so the result never depends on instance order.

#pragma once

#include <cstdint>
#include <optional>
#include <set>
#include <span>
#include <string_view>
#include <vector>

#include "saga/annotation.hpp"
#include "saga/image.hpp"

namespace saga {

// Channel weights, used exactly as published. They sum to 0.9999, so a gray
// pixel (v,v,v) can come back as v-1 on some levels; see luminance().
struct LuminanceWeights {
  static constexpr double kRed = 0.2989;
  static constexpr double kGreen = 0.5870;
  static constexpr double kBlue = 0.1140;
  // Same weights scaled to integers over kScale, for exact arithmetic.
  static constexpr std::int64_t kRedFixed = 2989;
  static constexpr std::int64_t kGreenFixed = 5870;
  static constexpr std::int64_t kBlueFixed = 1140;
  static constexpr std::int64_t kScale = 10000;
};

// round_half_to_even(0.2989 r + 0.5870 g + 0.1140 b), computed exactly in
// integers. Always within [0, 255].
std::uint8_t luminance(std::uint8_t r, std::uint8_t g, std::uint8_t b);

// One bit per pixel over a width x height canvas.
class RegionMask {
 public:
  RegionMask(int width, int height);

  int width() const { return width_; }
  int height() const { return height_; }

  bool test(int x, int y) const {
    const auto i = index(x, y);
    return (words_[i >> 6] >> (i & 63)) & 1u;
  }
  void set(int x, int y) {
    const auto i = index(x, y);
    words_[i >> 6] |= std::uint64_t{1} << (i & 63);
  }
  // Sets [x0, x1) on row y. Bounds must already be clipped.
  void set_span(int y, int x0, int x1);

  std::size_t count() const;
  bool empty() const { return count() == 0; }

  RegionMask& operator|=(const RegionMask& other);
  bool operator==(const RegionMask&) const = default;

 private:
  std::size_t index(int x, int y) const {
    return static_cast<std::size_t>(y) * width_ + x;
  }

  int width_;
  int height_;
  std::vector<std::uint64_t> words_;
};

// Box: pixel (px, py) is covered when x <= px < x + w and y <= py < y + h.
// Polygon: even-odd rule sampled at pixel centers (px + 0.5, py + 0.5).
// Anything outside the canvas is clipped; a region fully outside yields an
// empty mask.
RegionMask rasterize(const Region& region, int width, int height);

enum class AugmentMode { kSaga, kFullGray, kIdentity };

std::string_view to_string(AugmentMode mode);
AugmentMode augment_mode_from_string(std::string_view text);

struct AugmentationPolicy {
  AugmentMode mode = AugmentMode::kSaga;
  double per_instance_probability = 1.0;
  std::optional<std::set<std::int64_t>> category_filter;
  bool include_ignore = true;
  std::uint64_t seed = 0;

  // Throws std::invalid_argument when the probability is outside [0, 1].
  void check() const;
};

struct AppliedReport {
  std::vector<std::size_t> grayed_instances;  // indices into the input list
  std::size_t grayed_pixels = 0;
};

struct AugmentResult {
  ImageBuffer image;
  AppliedReport report;
};

// Uniform draw in [0, 1) that depends only on (seed, image_id, index).
double instance_draw(std::uint64_t seed, std::int64_t image_id, std::size_t index);

// Which instances the policy selects for graying, in input order.
std::vector<std::size_t> select_instances(std::span<const Instance> instances,
                                          const AugmentationPolicy& policy,
                                          std::int64_t image_id);

// Union of the selected instance masks. A Polygon region is used when the
// instance has one, otherwise its Box.
RegionMask union_mask(std::span<const Instance> instances, std::span<const std::size_t> selected,
                      int width, int height);

// Grays every pixel under `mask` using the original values; pixels outside
// are copied unchanged.
ImageBuffer gray_under_mask(const ImageBuffer& image, const RegionMask& mask);

AugmentResult apply_saga(const ImageBuffer& image, std::span<const Instance> instances,
                         const AugmentationPolicy& policy, std::int64_t image_id = 0);

ImageBuffer apply_full_gray(const ImageBuffer& image);

}  // namespace saga
