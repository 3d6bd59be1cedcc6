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

// Reference implementations and fixture generators shared by the unit tests
// and the acceptance binary. Oracles are deliberately naive and do not call
// into the code they check.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <unistd.h>

#include "saga/annotation.hpp"
#include "saga/eval.hpp"
#include "saga/image.hpp"

namespace oracle {

// Nearest integer to (2989 r + 5870 g + 1140 b) / 10000, ties to even. The
// candidates come from a floating estimate; the choice is made exactly.
inline int luminance(int r, int g, int b) {
  const long long n = 2989LL * r + 5870LL * g + 1140LL * b;
  const double estimate = 0.2989 * r + 0.5870 * g + 0.1140 * b;
  const long long base = static_cast<long long>(std::floor(estimate));
  long long best = base - 1;
  long long best_dist = -1;
  for (long long c = base - 1; c <= base + 2; ++c) {
    const long long dist = std::llabs(c * 10000 - n);
    const bool better = best_dist < 0 || dist < best_dist || (dist == best_dist && c % 2 == 0);
    if (better) {
      best = c;
      best_dist = dist;
    }
  }
  return static_cast<int>(std::clamp<long long>(best, 0, 255));
}

// ---- membership ---------------------------------------------------------------

inline bool box_covers(const saga::Box& b, int px, int py) {
  return b.x <= px && px < b.x + b.w && b.y <= py && py < b.y + b.h;
}

// Crossing-number test at the pixel center, all rings together.
inline bool polygon_covers(const saga::Polygon& poly, int px, int py) {
  const double xc = px + 0.5;
  const double yc = py + 0.5;
  bool inside = false;
  for (const auto& ring : poly.rings) {
    const std::size_t n = ring.size();
    for (std::size_t i = 0, j = n - 1; i < n; j = i++) {
      const auto& a = ring[j];
      const auto& b = ring[i];
      if ((a.y > yc) != (b.y > yc) && xc < (b.x - a.x) * (yc - a.y) / (b.y - a.y) + a.x) inside = !inside;
    }
  }
  return inside;
}

inline bool region_covers(const saga::Region& region, int px, int py) {
  if (const auto* b = std::get_if<saga::Box>(&region)) return box_covers(*b, px, py);
  return polygon_covers(std::get<saga::Polygon>(region), px, py);
}

// ---- detection metrics --------------------------------------------------------

inline double iou(const saga::Box& a, const saga::Box& b) {
  const double x0 = std::max(a.x, b.x), x1 = std::min(a.x + a.w, b.x + b.w);
  const double y0 = std::max(a.y, b.y), y1 = std::min(a.y + a.h, b.y + b.h);
  const double inter = (x1 > x0 && y1 > y0) ? (x1 - x0) * (y1 - y0) : 0.0;
  return inter / (a.w * a.h + b.w * b.h - inter);
}

// Greedy matching over a precomputed IoU table, then AP as the recall-step
// sum of the best precision at or after each true positive.
inline std::optional<double> average_precision(const std::vector<saga::Detection>& preds,
                                               const saga::DatasetManifest& gt, std::int64_t cls,
                                               double thr = 0.5) {
  struct G {
    std::int64_t image;
    saga::Box box;
    bool ignore;
  };
  std::vector<G> gts;
  for (const auto& im : gt.images)
    for (const auto& inst : im.instances)
      if (inst.category_id == cls) gts.push_back({im.id, saga::bounding_box(inst.region), inst.ignore});
  const auto positives = std::count_if(gts.begin(), gts.end(), [](const G& g) { return !g.ignore; });

  std::vector<std::size_t> order;
  for (std::size_t i = 0; i < preds.size(); ++i)
    if (preds[i].category_id == cls) order.push_back(i);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return preds[a].score > preds[b].score; });

  std::vector<std::vector<double>> table(order.size(), std::vector<double>(gts.size(), 0.0));
  for (std::size_t p = 0; p < order.size(); ++p)
    for (std::size_t g = 0; g < gts.size(); ++g)
      if (gts[g].image == preds[order[p]].image_id) table[p][g] = oracle::iou(preds[order[p]].box, gts[g].box);

  std::vector<bool> used(gts.size(), false);
  std::vector<int> outcome;  // 1 tp, 0 fp
  for (std::size_t p = 0; p < order.size(); ++p) {
    int pick = -1;
    bool ignored_hit = false;
    for (std::size_t g = 0; g < gts.size(); ++g) {
      if (table[p][g] < thr) continue;
      if (gts[g].ignore) {
        ignored_hit = true;
      } else if (!used[g] && (pick < 0 || table[p][g] > table[p][pick])) {
        pick = static_cast<int>(g);
      }
    }
    if (pick >= 0) {
      used[pick] = true;
      outcome.push_back(1);
    } else if (!ignored_hit) {
      outcome.push_back(0);
    }
  }
  if (positives == 0) return outcome.empty() ? std::nullopt : std::optional<double>(0.0);

  std::vector<double> precision;
  int tp = 0;
  for (std::size_t k = 0; k < outcome.size(); ++k) {
    tp += outcome[k];
    precision.push_back(static_cast<double>(tp) / (k + 1));
  }
  double ap = 0;
  for (std::size_t k = 0; k < outcome.size(); ++k) {
    if (!outcome[k]) continue;
    ap += *std::max_element(precision.begin() + k, precision.end()) / positives;
  }
  return ap;
}

inline std::optional<double> map50(const std::vector<saga::Detection>& preds,
                                   const saga::DatasetManifest& gt) {
  double sum = 0;
  int n = 0;
  for (const auto& c : gt.categories) {
    if (auto ap = average_precision(preds, gt, c.id)) {
      sum += *ap;
      ++n;
    }
  }
  if (n == 0) return std::nullopt;
  return sum / n;
}

// ---- fixtures -----------------------------------------------------------------

inline saga::ImageRecord record(std::int64_t id, std::string file, int w, int h) {
  saga::ImageRecord r;
  r.id = id;
  r.file = std::move(file);
  r.width = w;
  r.height = h;
  return r;
}

inline saga::ImageBuffer random_image(std::mt19937_64& rng, int w, int h) {
  std::vector<std::uint8_t> px(static_cast<std::size_t>(w) * h * 3);
  std::uniform_int_distribution<int> byte(0, 255);
  for (auto& p : px) p = static_cast<std::uint8_t>(byte(rng));
  return saga::ImageBuffer(w, h, std::move(px));
}

// Boxes and polygons that may spill over the canvas; polygons may
// self-intersect and sometimes have a second ring.
inline saga::Region random_region(std::mt19937_64& rng, int w, int h, bool allow_polygon = true) {
  std::uniform_real_distribution<double> ux(-0.5 * w, 1.5 * w);
  std::uniform_real_distribution<double> uy(-0.5 * h, 1.5 * h);
  std::uniform_real_distribution<double> side(0.25, 1.0 * std::max(w, h));
  std::bernoulli_distribution coin(0.5);
  if (!allow_polygon || coin(rng)) {
    // Snap half the boxes to whole pixels, where edge handling matters most.
    saga::Box b{ux(rng), uy(rng), side(rng), side(rng)};
    if (coin(rng)) b = {std::round(b.x), std::round(b.y), std::ceil(b.w), std::ceil(b.h)};
    return b;
  }
  saga::Polygon poly;
  const int rings = coin(rng) && coin(rng) ? 2 : 1;
  std::uniform_int_distribution<int> verts(3, 8);
  for (int r = 0; r < rings; ++r) {
    std::vector<saga::Point> ring;
    const int n = verts(rng);
    const bool snap = coin(rng);
    for (int i = 0; i < n; ++i) {
      saga::Point p{ux(rng), uy(rng)};
      if (snap) p = {std::round(p.x), std::round(p.y)};
      ring.push_back(p);
    }
    poly.rings.push_back(std::move(ring));
  }
  return poly;
}

// Valid manifest expressible in `format`.
inline saga::DatasetManifest random_manifest(std::mt19937_64& rng, saga::Format format) {
  using saga::Format;
  std::uniform_int_distribution<int> small(0, 4);
  std::uniform_int_distribution<int> dim(8, 640);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::bernoulli_distribution coin(0.5);

  saga::DatasetManifest m;
  m.provenance = format;
  const int ncat = 1 + small(rng);
  std::int64_t cat_id = format == Format::kCoco ? small(rng) : 0;
  for (int c = 0; c < ncat; ++c) {
    m.categories.push_back({cat_id, "class_" + std::to_string(c) + (coin(rng) ? " & <x>" : "")});
    cat_id += format == Format::kCoco ? 1 + small(rng) : 1;
  }
  const int nimg = small(rng) + (coin(rng) ? 0 : 3);
  std::int64_t image_id = 1 + small(rng);
  for (int i = 0; i < nimg; ++i) {
    saga::ImageRecord r;
    r.id = image_id;
    image_id += 1 + small(rng);
    r.file = "img_" + std::to_string(i) + (coin(rng) ? ".png" : ".jpg");
    r.width = dim(rng);
    r.height = dim(rng);
    if (format != Format::kVoc) {
      r.split = static_cast<saga::Split>(small(rng) % 3);
      if (coin(rng)) r.tags = {coin(rng) ? "day" : "night"};
    }
    const int ninst = small(rng) + small(rng);
    for (int k = 0; k < ninst; ++k) {
      saga::Instance inst;
      inst.category_id = m.categories[rng() % m.categories.size()].id;
      const double min_side = format == Format::kVoc ? 1.0 : 1e-3;
      saga::Box b{(unit(rng) - 0.1) * r.width, (unit(rng) - 0.1) * r.height,
                  min_side + unit(rng) * r.width * 0.5, min_side + unit(rng) * r.height * 0.5};
      inst.region = b;
      if (format == Format::kCoco && coin(rng)) inst.region = random_region(rng, r.width, r.height);
      if (format != Format::kYolo) inst.ignore = coin(rng) && coin(rng);
      r.instances.push_back(std::move(inst));
    }
    m.images.push_back(std::move(r));
  }
  return m;
}

// Semantic equality under `format`: images matched by id, instances compared
// as multisets with coordinate tolerance.
inline bool equivalent(const saga::DatasetManifest& a, const saga::DatasetManifest& b, saga::Format format,
                       double tol, std::string* why = nullptr) {
  auto fail = [&](const std::string& msg) {
    if (why) *why = msg;
    return false;
  };
  if (a.categories.size() != b.categories.size()) return fail("category count");
  for (std::size_t i = 0; i < a.categories.size(); ++i) {
    if (a.categories[i].id != b.categories[i].id || a.categories[i].name != b.categories[i].name)
      return fail("category " + std::to_string(i));
  }
  if (a.images.size() != b.images.size()) return fail("image count");
  auto flat = [](const saga::Region& r) {
    std::vector<double> v;
    if (const auto* box = std::get_if<saga::Box>(&r)) {
      v = {0, box->x, box->y, box->w, box->h};
    } else {
      v.push_back(1);
      for (const auto& ring : std::get<saga::Polygon>(r).rings) {
        v.push_back(static_cast<double>(ring.size()));
        for (const auto& p : ring) {
          v.push_back(p.x);
          v.push_back(p.y);
        }
      }
    }
    return v;
  };
  for (const auto& ia : a.images) {
    const auto* ib = b.find_image(ia.id);
    if (!ib) return fail("missing image " + std::to_string(ia.id));
    if (ia.file != ib->file || ia.width != ib->width || ia.height != ib->height)
      return fail("image fields " + std::to_string(ia.id));
    if (format != saga::Format::kVoc && (ia.split != ib->split || ia.tags != ib->tags))
      return fail("split/tags " + std::to_string(ia.id));
    if (ia.instances.size() != ib->instances.size()) return fail("instance count " + std::to_string(ia.id));
    std::vector<bool> taken(ib->instances.size(), false);
    for (const auto& x : ia.instances) {
      const auto fx = flat(x.region);
      bool found = false;
      for (std::size_t k = 0; k < ib->instances.size() && !found; ++k) {
        const auto& y = ib->instances[k];
        if (taken[k] || y.category_id != x.category_id || y.ignore != x.ignore) continue;
        const auto fy = flat(y.region);
        if (fx.size() != fy.size()) continue;
        bool close = true;
        for (std::size_t d = 0; d < fx.size() && close; ++d) close = std::fabs(fx[d] - fy[d]) <= tol;
        if (close) taken[k] = found = true;
      }
      if (!found) return fail("unmatched instance in image " + std::to_string(ia.id));
    }
  }
  return true;
}

// Scratch directory removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static int counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("sagaforge_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

}  // namespace oracle
