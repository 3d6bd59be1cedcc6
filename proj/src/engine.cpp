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
#include "saga/engine.hpp"

#include <algorithm>
#include <bit>
#include <cmath>

#include "saga/random.hpp"

namespace saga {

std::uint8_t luminance(std::uint8_t r, std::uint8_t g, std::uint8_t b) {
  using W = LuminanceWeights;
  const std::int64_t n = W::kRedFixed * r + W::kGreenFixed * g + W::kBlueFixed * b;
  std::int64_t q = n / W::kScale;
  const std::int64_t rem = n % W::kScale;
  if (rem * 2 > W::kScale || (rem * 2 == W::kScale && (q & 1))) ++q;
  return static_cast<std::uint8_t>(std::clamp<std::int64_t>(q, 0, 255));
}

RegionMask::RegionMask(int width, int height)
    : width_(width), height_(height),
      words_((static_cast<std::size_t>(width) * height + 63) / 64, 0) {}

void RegionMask::set_span(int y, int x0, int x1) {
  for (int x = x0; x < x1; ++x) set(x, y);
}

std::size_t RegionMask::count() const {
  std::size_t n = 0;
  for (auto w : words_) n += static_cast<std::size_t>(std::popcount(w));
  return n;
}

RegionMask& RegionMask::operator|=(const RegionMask& other) {
  if (other.width_ != width_ || other.height_ != height_) {
    throw std::invalid_argument("mask size mismatch");
  }
  for (std::size_t i = 0; i < words_.size(); ++i) words_[i] |= other.words_[i];
  return *this;
}

namespace {

// Smallest integer >= v, clamped to [lo, hi]. Clamping first keeps huge
// coordinates away from the int conversion.
int ceil_clamped(double v, int lo, int hi) {
  v = std::clamp(v, static_cast<double>(lo) - 1.0, static_cast<double>(hi) + 1.0);
  return std::clamp(static_cast<int>(std::ceil(v)), lo, hi);
}

void rasterize_box(const Box& box, RegionMask& mask) {
  const int x0 = ceil_clamped(box.x, 0, mask.width());
  const int x1 = ceil_clamped(box.x + box.w, 0, mask.width());
  const int y0 = ceil_clamped(box.y, 0, mask.height());
  const int y1 = ceil_clamped(box.y + box.h, 0, mask.height());
  for (int y = y0; y < y1; ++y) mask.set_span(y, x0, x1);
}

// Scanline even-odd fill. A pixel is inside when an odd number of edge
// crossings lie strictly to the right of its center, which is the classic
// point-in-polygon crossing test evaluated one row at a time.
void rasterize_polygon(const Polygon& poly, RegionMask& mask) {
  std::vector<double> xs;
  for (int py = 0; py < mask.height(); ++py) {
    const double yc = py + 0.5;
    xs.clear();
    for (const auto& ring : poly.rings) {
      const std::size_t n = ring.size();
      for (std::size_t i = 0, j = n - 1; i < n; j = i++) {
        const Point& a = ring[i];
        const Point& b = ring[j];
        if ((a.y > yc) != (b.y > yc)) xs.push_back((b.x - a.x) * (yc - a.y) / (b.y - a.y) + a.x);
      }
    }
    std::sort(xs.begin(), xs.end());
    for (std::size_t k = 0; k + 1 < xs.size(); k += 2) {
      // Centers c with xs[k] <= c < xs[k+1].
      int x0 = ceil_clamped(xs[k] - 0.5, 0, mask.width());
      while (x0 > 0 && (x0 - 1) + 0.5 >= xs[k]) --x0;
      while (x0 < mask.width() && x0 + 0.5 < xs[k]) ++x0;
      int x1 = ceil_clamped(xs[k + 1] - 0.5, 0, mask.width());
      while (x1 > 0 && (x1 - 1) + 0.5 >= xs[k + 1]) --x1;
      while (x1 < mask.width() && x1 + 0.5 < xs[k + 1]) ++x1;
      if (x0 < x1) mask.set_span(py, x0, x1);
    }
  }
}

}  // namespace

RegionMask rasterize(const Region& region, int width, int height) {
  RegionMask mask(width, height);
  if (const auto* box = std::get_if<Box>(&region)) {
    rasterize_box(*box, mask);
  } else {
    rasterize_polygon(std::get<Polygon>(region), mask);
  }
  return mask;
}

std::string_view to_string(AugmentMode mode) {
  switch (mode) {
    case AugmentMode::kSaga: return "saga";
    case AugmentMode::kFullGray: return "fullgray";
    case AugmentMode::kIdentity: return "identity";
  }
  return "saga";
}

AugmentMode augment_mode_from_string(std::string_view text) {
  if (text == "saga") return AugmentMode::kSaga;
  if (text == "fullgray") return AugmentMode::kFullGray;
  if (text == "identity") return AugmentMode::kIdentity;
  throw std::invalid_argument("unknown mode '" + std::string(text) + "'");
}

void AugmentationPolicy::check() const {
  if (!(per_instance_probability >= 0.0 && per_instance_probability <= 1.0)) {
    throw std::invalid_argument("per-instance probability must be in [0, 1]");
  }
}

double instance_draw(std::uint64_t seed, std::int64_t image_id, std::size_t index) {
  return unit_double(counter_hash(seed, static_cast<std::uint64_t>(image_id), index));
}

std::vector<std::size_t> select_instances(std::span<const Instance> instances,
                                          const AugmentationPolicy& policy,
                                          std::int64_t image_id) {
  std::vector<std::size_t> selected;
  for (std::size_t i = 0; i < instances.size(); ++i) {
    const auto& inst = instances[i];
    if (policy.category_filter && !policy.category_filter->count(inst.category_id)) continue;
    if (inst.ignore && !policy.include_ignore) continue;
    if (!(instance_draw(policy.seed, image_id, i) < policy.per_instance_probability)) continue;
    selected.push_back(i);
  }
  return selected;
}

RegionMask union_mask(std::span<const Instance> instances, std::span<const std::size_t> selected,
                      int width, int height) {
  RegionMask mask(width, height);
  for (auto i : selected) mask |= rasterize(instances[i].region, width, height);
  return mask;
}

ImageBuffer gray_under_mask(const ImageBuffer& image, const RegionMask& mask) {
  ImageBuffer out = image;
  for (int y = 0; y < image.height(); ++y) {
    for (int x = 0; x < image.width(); ++x) {
      if (!mask.test(x, y)) continue;
      const Rgb c = image.at(x, y);
      const auto v = luminance(c.r, c.g, c.b);
      out.set(x, y, {v, v, v});
    }
  }
  return out;
}

ImageBuffer apply_full_gray(const ImageBuffer& image) {
  ImageBuffer out = image;
  auto px = out.bytes();
  for (std::size_t i = 0; i < px.size(); i += 3) {
    const auto v = luminance(px[i], px[i + 1], px[i + 2]);
    px[i] = px[i + 1] = px[i + 2] = v;
  }
  return out;
}

AugmentResult apply_saga(const ImageBuffer& image, std::span<const Instance> instances,
                         const AugmentationPolicy& policy, std::int64_t image_id) {
  policy.check();
  switch (policy.mode) {
    case AugmentMode::kIdentity:
      return {image, {}};
    case AugmentMode::kFullGray: {
      AppliedReport report;
      for (std::size_t i = 0; i < instances.size(); ++i) report.grayed_instances.push_back(i);
      report.grayed_pixels = image.pixel_count();
      return {apply_full_gray(image), std::move(report)};
    }
    case AugmentMode::kSaga:
      break;
  }
  AppliedReport report;
  report.grayed_instances = select_instances(instances, policy, image_id);
  if (report.grayed_instances.empty()) return {image, std::move(report)};
  const auto mask = union_mask(instances, report.grayed_instances, image.width(), image.height());
  report.grayed_pixels = mask.count();
  return {gray_under_mask(image, mask), std::move(report)};
}

}  // namespace saga
