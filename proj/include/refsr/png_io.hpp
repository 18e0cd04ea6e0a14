#pragma once

#include <png.h>

#include <cstring>
#include <filesystem>
#include <string>

#include "refsr/errors.hpp"
#include "refsr/imaging.hpp"
#include "refsr/tensor.hpp"

namespace refsr {

/// Reads an 8-bit RGB PNG. Grayscale, alpha and 16-bit files are rejected.
inline ImageU8 load_image(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) {
    throw DataError("load_image: missing file " + path.string());
  }
  png_image png;
  std::memset(&png, 0, sizeof(png));
  png.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&png, path.string().c_str())) {
    throw DataError("load_image: " + path.string() + ": " + png.message);
  }
  const auto fmt = png.format;
  if (!(fmt & PNG_FORMAT_FLAG_COLOR) || (fmt & PNG_FORMAT_FLAG_ALPHA)) {
    png_image_free(&png);
    throw DataError("load_image: " + path.string() + ": unsupported channel count");
  }
  if (fmt & PNG_FORMAT_FLAG_LINEAR) {
    png_image_free(&png);
    throw DataError("load_image: " + path.string() + ": unsupported bit depth");
  }
  png.format = PNG_FORMAT_RGB;
  ImageU8 img(static_cast<int>(png.height), static_cast<int>(png.width));
  if (!png_image_finish_read(&png, nullptr, img.data(), 0, nullptr)) {
    throw DataError("load_image: " + path.string() + ": " + png.message);
  }
  return img;
}

inline void save_image(const ImageU8& img, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  png_image png;
  std::memset(&png, 0, sizeof(png));
  png.version = PNG_IMAGE_VERSION;
  png.width = static_cast<png_uint_32>(img.width());
  png.height = static_cast<png_uint_32>(img.height());
  png.format = PNG_FORMAT_RGB;
  if (!png_image_write_to_file(&png, path.string().c_str(), 0, img.data(), 0, nullptr)) {
    throw DataError("save_image: " + path.string() + ": " + png.message);
  }
}

inline ImageTensor load_image_tensor(const std::filesystem::path& path) {
  return dequantize(load_image(path));
}

inline void save_image(const ImageTensor& img, const std::filesystem::path& path) {
  save_image(quantize(img), path);
}

}  // namespace refsr
