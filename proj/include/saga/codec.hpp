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
#include <filesystem>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "saga/image.hpp"

namespace saga {

class CodecError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class ImageCodec { kPng, kJpeg };

struct OutputCodec {
  ImageCodec codec = ImageCodec::kPng;
  int jpeg_quality = 95;

  const char* extension() const { return codec == ImageCodec::kPng ? ".png" : ".jpg"; }
  std::string to_string() const;
  // "png", "jpeg" or "jpeg:<q>" with q in [1, 100].
  static OutputCodec parse(std::string_view text);
};

// PNG or JPEG, detected from the leading bytes. Gray, palette, alpha and
// 16-bit inputs are converted to 8-bit RGB.
ImageBuffer decode_image(std::span<const std::uint8_t> bytes);
ImageBuffer read_image(const std::filesystem::path& path);

std::vector<std::uint8_t> encode_png(const ImageBuffer& image);
std::vector<std::uint8_t> encode_jpeg(const ImageBuffer& image, int quality);
std::vector<std::uint8_t> encode_image(const ImageBuffer& image, const OutputCodec& codec);

// Width and height from the file header, without decoding pixels.
std::optional<std::pair<int, int>> probe_image_size(const std::filesystem::path& path);

}  // namespace saga
