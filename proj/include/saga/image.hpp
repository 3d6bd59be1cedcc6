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
#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

namespace saga {

struct Rgb {
  std::uint8_t r = 0, g = 0, b = 0;
  bool operator==(const Rgb&) const = default;
};

// Owned 8-bit RGB raster, row-major, channels interleaved.
class ImageBuffer {
 public:
  ImageBuffer() = default;
  ImageBuffer(int width, int height, Rgb fill = {})
      : width_(width), height_(height) {
    if (width < 1 || height < 1) throw std::invalid_argument("image size must be positive");
    data_.resize(static_cast<std::size_t>(width) * height * 3);
    for (std::size_t i = 0; i < data_.size(); i += 3) {
      data_[i] = fill.r;
      data_[i + 1] = fill.g;
      data_[i + 2] = fill.b;
    }
  }
  ImageBuffer(int width, int height, std::vector<std::uint8_t> rgb)
      : width_(width), height_(height), data_(std::move(rgb)) {
    if (width < 1 || height < 1) throw std::invalid_argument("image size must be positive");
    if (data_.size() != static_cast<std::size_t>(width) * height * 3) {
      throw std::invalid_argument("pixel buffer does not match width*height*3");
    }
  }

  int width() const { return width_; }
  int height() const { return height_; }
  std::size_t pixel_count() const { return static_cast<std::size_t>(width_) * height_; }

  Rgb at(int x, int y) const {
    const auto* p = &data_[offset(x, y)];
    return {p[0], p[1], p[2]};
  }
  void set(int x, int y, Rgb c) {
    auto* p = &data_[offset(x, y)];
    p[0] = c.r;
    p[1] = c.g;
    p[2] = c.b;
  }

  std::span<const std::uint8_t> bytes() const { return data_; }
  std::span<std::uint8_t> bytes() { return data_; }

  bool operator==(const ImageBuffer&) const = default;

 private:
  std::size_t offset(int x, int y) const {
    return (static_cast<std::size_t>(y) * width_ + x) * 3;
  }

  int width_ = 0;
  int height_ = 0;
  std::vector<std::uint8_t> data_;
};

}  // namespace saga
