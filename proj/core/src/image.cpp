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

#include "iqagent/image.hpp"

#include <png.h>
#include <stdio.h>  // jpeglib.h needs FILE
#include <jpeglib.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <csetjmp>
#include <cstring>
#include <sstream>

#include "iqagent/error.hpp"
#include "iqagent/util.hpp"

namespace iqagent {

Image to_gray(const Image& image) {
  if (image.channels == 1) return image;
  Image out(image.width, image.height, 1);
  for (int y = 0; y < image.height; ++y) {
    for (int x = 0; x < image.width; ++x) {
      if (image.channels >= 3) {
        out.at(x, y) = static_cast<float>(0.299 * image.at(x, y, 0) + 0.587 * image.at(x, y, 1) +
                                          0.114 * image.at(x, y, 2));
      } else {
        out.at(x, y) = image.at(x, y, 0);  // gray + alpha
      }
    }
  }
  return out;
}

Image resize_bilinear(const Image& image, int width, int height) {
  if (width < 1 || height < 1) throw Error(Errc::kDimensionMismatch, "invalid target size");
  if (width == image.width && height == image.height) return image;
  Image out(width, height, image.channels);
  const double sx = static_cast<double>(image.width) / width;
  const double sy = static_cast<double>(image.height) / height;
  for (int y = 0; y < height; ++y) {
    const double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, image.height - 1.0);
    const int y0 = static_cast<int>(fy);
    const int y1 = std::min(y0 + 1, image.height - 1);
    const double wy = fy - y0;
    for (int x = 0; x < width; ++x) {
      const double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, image.width - 1.0);
      const int x0 = static_cast<int>(fx);
      const int x1 = std::min(x0 + 1, image.width - 1);
      const double wx = fx - x0;
      for (int c = 0; c < image.channels; ++c) {
        const double top = image.at(x0, y0, c) * (1 - wx) + image.at(x1, y0, c) * wx;
        const double bot = image.at(x0, y1, c) * (1 - wx) + image.at(x1, y1, c) * wx;
        out.at(x, y, c) = static_cast<float>(top * (1 - wy) + bot * wy);
      }
    }
  }
  return out;
}

namespace {

Image decode_png(std::string_view bytes) {
  png_image img;
  std::memset(&img, 0, sizeof(img));
  img.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_memory(&img, bytes.data(), bytes.size())) {
    throw Error(Errc::kImageDecode, std::string("png: ") + img.message);
  }
  const bool color = (img.format & PNG_FORMAT_FLAG_COLOR) != 0;
  img.format = color ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  std::vector<unsigned char> buf(PNG_IMAGE_SIZE(img));
  if (!png_image_finish_read(&img, nullptr, buf.data(), 0, nullptr)) {
    png_image_free(&img);
    throw Error(Errc::kImageDecode, std::string("png: ") + img.message);
  }
  Image out(static_cast<int>(img.width), static_cast<int>(img.height), color ? 3 : 1);
  std::transform(buf.begin(), buf.end(), out.pixels.begin(),
                 [](unsigned char v) { return static_cast<float>(v); });
  return out;
}

struct JpegErrorManager {
  jpeg_error_mgr base;
  std::jmp_buf jump;
  char message[JMSG_LENGTH_MAX];
};

void jpeg_error_exit(j_common_ptr cinfo) {
  auto* mgr = reinterpret_cast<JpegErrorManager*>(cinfo->err);
  (*cinfo->err->format_message)(cinfo, mgr->message);
  std::longjmp(mgr->jump, 1);
}

Image decode_jpeg(std::string_view bytes) {
  jpeg_decompress_struct cinfo;
  JpegErrorManager err;
  cinfo.err = jpeg_std_error(&err.base);
  err.base.error_exit = jpeg_error_exit;
  std::vector<unsigned char> buf;
  int width = 0, height = 0, channels = 0;
  if (setjmp(err.jump)) {
    jpeg_destroy_decompress(&cinfo);
    throw Error(Errc::kImageDecode, std::string("jpeg: ") + err.message);
  }
  jpeg_create_decompress(&cinfo);
  jpeg_mem_src(&cinfo, reinterpret_cast<const unsigned char*>(bytes.data()),
               static_cast<unsigned long>(bytes.size()));
  jpeg_read_header(&cinfo, TRUE);
  cinfo.out_color_space = cinfo.num_components == 1 ? JCS_GRAYSCALE : JCS_RGB;
  jpeg_start_decompress(&cinfo);
  width = static_cast<int>(cinfo.output_width);
  height = static_cast<int>(cinfo.output_height);
  channels = cinfo.output_components;
  buf.resize(static_cast<size_t>(width) * height * channels);
  while (cinfo.output_scanline < cinfo.output_height) {
    unsigned char* row = buf.data() + static_cast<size_t>(cinfo.output_scanline) * width * channels;
    jpeg_read_scanlines(&cinfo, &row, 1);
  }
  jpeg_finish_decompress(&cinfo);
  jpeg_destroy_decompress(&cinfo);
  Image out(width, height, channels);
  std::transform(buf.begin(), buf.end(), out.pixels.begin(),
                 [](unsigned char v) { return static_cast<float>(v); });
  return out;
}

// Netpbm P2/P3/P5/P6 with maxval <= 255.
Image decode_pnm(std::string_view bytes) {
  size_t pos = 2;
  auto next_token = [&]() -> long {
    for (;;) {
      while (pos < bytes.size() && std::isspace(static_cast<unsigned char>(bytes[pos]))) ++pos;
      if (pos < bytes.size() && bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
        continue;
      }
      break;
    }
    long v = 0;
    bool any = false;
    while (pos < bytes.size() && std::isdigit(static_cast<unsigned char>(bytes[pos]))) {
      v = v * 10 + (bytes[pos] - '0');
      ++pos;
      any = true;
      if (v > 1'000'000) throw Error(Errc::kImageDecode, "pnm: header value too large");
    }
    if (!any) throw Error(Errc::kImageDecode, "pnm: malformed header");
    return v;
  };
  const char kind = bytes[1];
  const int channels = (kind == '3' || kind == '6') ? 3 : 1;
  const long w = next_token();
  const long h = next_token();
  const long maxval = next_token();
  if (w < 1 || h < 1 || maxval < 1 || maxval > 255) {
    throw Error(Errc::kImageDecode, "pnm: unsupported dimensions or maxval");
  }
  Image out(static_cast<int>(w), static_cast<int>(h), channels);
  const double scale = 255.0 / static_cast<double>(maxval);
  const size_t n = out.pixels.size();
  if (kind == '5' || kind == '6') {
    ++pos;  // single whitespace after maxval
    if (bytes.size() < pos + n) throw Error(Errc::kImageDecode, "pnm: truncated data");
    for (size_t i = 0; i < n; ++i) {
      out.pixels[i] = static_cast<float>(static_cast<unsigned char>(bytes[pos + i]) * scale);
    }
  } else {
    for (size_t i = 0; i < n; ++i) out.pixels[i] = static_cast<float>(next_token() * scale);
  }
  return out;
}

}  // namespace

Image decode_image(std::string_view bytes, std::string* format_out) {
  auto set = [&](const char* f) {
    if (format_out) *format_out = f;
  };
  if (bytes.size() >= 8 && std::memcmp(bytes.data(), "\x89PNG\r\n\x1a\n", 8) == 0) {
    set("png");
    return decode_png(bytes);
  }
  if (bytes.size() >= 3 && static_cast<unsigned char>(bytes[0]) == 0xFF &&
      static_cast<unsigned char>(bytes[1]) == 0xD8) {
    set("jpeg");
    return decode_jpeg(bytes);
  }
  if (bytes.size() >= 3 && bytes[0] == 'P' && std::strchr("2356", bytes[1]) != nullptr) {
    set("pnm");
    return decode_pnm(bytes);
  }
  throw Error(Errc::kImageDecode, "unrecognised image format");
}

std::string encode_png(const Image& image) {
  if (image.empty()) throw Error(Errc::kImageDecode, "cannot encode an empty image");
  const int channels = image.channels >= 3 ? 3 : 1;
  std::vector<unsigned char> buf(static_cast<size_t>(image.width) * image.height * channels);
  for (int y = 0; y < image.height; ++y) {
    for (int x = 0; x < image.width; ++x) {
      for (int c = 0; c < channels; ++c) {
        const float v = std::clamp(std::round(image.at(x, y, c)), 0.0f, 255.0f);
        buf[(static_cast<size_t>(y) * image.width + x) * channels + c] =
            static_cast<unsigned char>(v);
      }
    }
  }
  png_image img;
  std::memset(&img, 0, sizeof(img));
  img.version = PNG_IMAGE_VERSION;
  img.width = static_cast<png_uint_32>(image.width);
  img.height = static_cast<png_uint_32>(image.height);
  img.format = channels == 3 ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  png_alloc_size_t size = 0;
  if (!png_image_write_to_memory(&img, nullptr, &size, 0, buf.data(), 0, nullptr)) {
    throw Error(Errc::kImageDecode, std::string("png encode: ") + img.message);
  }
  std::string out(size, '\0');
  if (!png_image_write_to_memory(&img, out.data(), &size, 0, buf.data(), 0, nullptr)) {
    throw Error(Errc::kImageDecode, std::string("png encode: ") + img.message);
  }
  out.resize(size);
  return out;
}

std::string encode_pnm(const Image& image) {
  const int channels = image.channels >= 3 ? 3 : 1;
  std::ostringstream ss;
  ss << (channels == 3 ? "P6" : "P5") << '\n' << image.width << ' ' << image.height << "\n255\n";
  std::string out = ss.str();
  for (int y = 0; y < image.height; ++y) {
    for (int x = 0; x < image.width; ++x) {
      for (int c = 0; c < channels; ++c) {
        out.push_back(static_cast<char>(
            static_cast<unsigned char>(std::clamp(std::round(image.at(x, y, c)), 0.0f, 255.0f))));
      }
    }
  }
  return out;
}

void write_image(const Image& image, const std::filesystem::path& path) {
  const auto ext = path.extension().string();
  const std::string bytes = (ext == ".pgm" || ext == ".ppm") ? encode_pnm(image) : encode_png(image);
  write_file_atomic(path.string(), bytes);
}

ImageHandle ImageHandle::from_file(const std::filesystem::path& path) {
  std::string bytes;
  try {
    bytes = read_file(path.string());
  } catch (const Error&) {
    throw Error(Errc::kIo, "cannot read image " + path.string());
  }
  return from_bytes(std::move(bytes), path.string());
}

ImageHandle ImageHandle::from_bytes(std::string bytes, std::string path) {
  ImageHandle h;
  std::string format;
  auto raster = std::make_shared<Image>(decode_image(bytes, &format));
  if (raster->empty()) throw Error(Errc::kImageDecode, "decoded image is empty");
  h.raster_ = std::move(raster);
  h.digest_ = sha256_hex(bytes);
  h.encoded_ = std::move(bytes);
  h.format_ = std::move(format);
  h.path_ = std::move(path);
  return h;
}

ImageHandle ImageHandle::from_raster(Image image, std::string path) {
  if (image.empty()) throw Error(Errc::kImageDecode, "raster is empty");
  ImageHandle h;
  h.encoded_ = encode_png(image);
  h.digest_ = sha256_hex(h.encoded_);
  h.format_ = "png";
  h.path_ = std::move(path);
  h.raster_ = std::make_shared<Image>(std::move(image));
  return h;
}

}  // namespace iqagent
