#include <png.h>

#include <cmath>
#include <cstdio>
#include <memory>
#include <stdexcept>

#include "rhm/render/image_io.hpp"

namespace rhm::render {

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

}  // namespace

void save_png(const std::string& path, std::span<const float> image, int height,
              int width) {
  if ((int64_t)image.size() != (int64_t)3 * height * width) {
    throw std::invalid_argument("save_png: image size does not match 3*H*W");
  }
  FilePtr fp(std::fopen(path.c_str(), "wb"));
  if (!fp) throw std::runtime_error("save_png: cannot open " + path);
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, &info);
    throw std::runtime_error("save_png: libpng init failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw std::runtime_error("save_png: libpng error writing " + path);
  }
  png_init_io(png, fp.get());
  png_set_IHDR(png, info, (png_uint_32)width, (png_uint_32)height, 8,
               PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);

  std::vector<png_byte> row((size_t)width * 3);
  const size_t plane = (size_t)height * width;
  for (int i = 0; i < height; ++i) {
    for (int j = 0; j < width; ++j) {
      for (int ch = 0; ch < 3; ++ch) {
        const float v = image[(size_t)ch * plane + (size_t)i * width + j];
        const float b = std::round((v + 1.0f) * 127.5f);
        row[(size_t)3 * j + ch] = (png_byte)std::clamp(b, 0.0f, 255.0f);
      }
    }
    png_write_row(png, row.data());
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

Image load_png(const std::string& path) {
  FilePtr fp(std::fopen(path.c_str(), "rb"));
  if (!fp) throw std::runtime_error("load_png: cannot open " + path);
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw std::runtime_error("load_png: libpng init failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw std::runtime_error("load_png: libpng error reading " + path);
  }
  png_init_io(png, fp.get());
  png_read_info(png, info);

  // normalize any input to 8-bit RGB
  png_set_strip_16(png);
  png_set_palette_to_rgb(png);
  png_set_expand_gray_1_2_4_to_8(png);
  if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
  png_set_strip_alpha(png);
  if (png_get_color_type(png, info) == PNG_COLOR_TYPE_GRAY ||
      png_get_color_type(png, info) == PNG_COLOR_TYPE_GRAY_ALPHA) {
    png_set_gray_to_rgb(png);
  }
  png_read_update_info(png, info);

  Image img;
  img.height = (int)png_get_image_height(png, info);
  img.width = (int)png_get_image_width(png, info);
  img.data.resize((size_t)3 * img.height * img.width);
  std::vector<png_byte> row(png_get_rowbytes(png, info));
  const size_t plane = (size_t)img.height * img.width;
  for (int i = 0; i < img.height; ++i) {
    png_read_row(png, row.data(), nullptr);
    for (int j = 0; j < img.width; ++j) {
      for (int ch = 0; ch < 3; ++ch) {
        img.data[(size_t)ch * plane + (size_t)i * img.width + j] =
            (float)row[(size_t)3 * j + ch] / 127.5f - 1.0f;
      }
    }
  }
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return img;
}

}  // namespace rhm::render
