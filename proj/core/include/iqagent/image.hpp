/*
 * Copyright 2026 The iqagent Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace iqagent {

// Decoded raster, row-major interleaved channels, sample values on the 0..255 scale.
struct Image {
  int width = 0;
  int height = 0;
  int channels = 0;
  std::vector<float> pixels;

  Image() = default;
  Image(int w, int h, int c, float fill = 0.0f)
      : width(w), height(h), channels(c),
        pixels(static_cast<size_t>(w) * h * c, fill) {}

  bool empty() const { return width < 1 || height < 1 || channels < 1; }
  float& at(int x, int y, int c = 0) {
    return pixels[(static_cast<size_t>(y) * width + x) * channels + c];
  }
  float at(int x, int y, int c = 0) const {
    return pixels[(static_cast<size_t>(y) * width + x) * channels + c];
  }
};

// Rec.601 luma for 3/4-channel input; single-channel input is copied.
Image to_gray(const Image& image);

// Bilinear resample to the given size (pixel-center aligned).
Image resize_bilinear(const Image& image, int width, int height);

// Immutable handle pairing a decoded raster with the bytes it came from. The
// encoded bytes are what gets attached to model requests and digested.
class ImageHandle {
 public:
  ImageHandle() = default;

  static ImageHandle from_file(const std::filesystem::path& path);
  static ImageHandle from_bytes(std::string bytes, std::string path = {});
  // Encodes the raster as 8-bit PNG; the raster itself is kept unquantized.
  static ImageHandle from_raster(Image image, std::string path = {});

  bool valid() const { return raster_ && !raster_->empty(); }
  const Image& raster() const { return *raster_; }
  const std::string& encoded() const { return encoded_; }
  const std::string& format() const { return format_; }
  const std::string& path() const { return path_; }
  // SHA-256 (hex) of the encoded bytes.
  const std::string& digest() const { return digest_; }

 private:
  std::shared_ptr<const Image> raster_;
  std::string encoded_;
  std::string format_;
  std::string path_;
  std::string digest_;
};

Image decode_image(std::string_view bytes, std::string* format_out = nullptr);
std::string encode_png(const Image& image);
std::string encode_pnm(const Image& image);
void write_image(const Image& image, const std::filesystem::path& path);

}  // namespace iqagent
