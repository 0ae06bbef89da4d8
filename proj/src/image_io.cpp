#include "gripstab/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <csetjmp>
#include <cstdio>
#include <memory>
#include <string>
#include <vector>

namespace gripstab {

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

void png_error_handler(png_structp png, png_const_charp msg) {
  if (auto* sink = static_cast<std::string*>(png_get_error_ptr(png))) *sink = msg;
  png_longjmp(png, 1);
}
void png_warning_handler(png_structp, png_const_charp) {}

// The setjmp frames below hold no objects with destructors.
bool encode(png_structp png, png_infop info, std::FILE* fp, const Raster& image, unsigned char* row) {
  if (setjmp(png_jmpbuf(png))) return false;
  const std::size_t stride = static_cast<std::size_t>(image.width) * 3;
  png_init_io(png, fp);
  png_set_IHDR(png, info, image.width, image.height, 8, PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (int r = 0; r < image.height; ++r) {
    for (std::size_t i = 0; i < stride; ++i) {
      const float v = std::clamp(image.data[static_cast<std::size_t>(r) * stride + i], 0.0f, 1.0f);
      row[i] = static_cast<unsigned char>(std::lround(v * 255.0f));
    }
    png_write_row(png, row);
  }
  png_write_end(png, nullptr);
  return true;
}

// 0 on libpng error, 1 for 8-bit RGB, 2 for any other format.
int decode_header(png_structp png, png_infop info, std::FILE* fp, png_uint_32* w, png_uint_32* h) {
  if (setjmp(png_jmpbuf(png))) return 0;
  png_init_io(png, fp);
  png_set_sig_bytes(png, 8);
  png_read_info(png, info);
  *w = png_get_image_width(png, info);
  *h = png_get_image_height(png, info);
  return png_get_color_type(png, info) == PNG_COLOR_TYPE_RGB && png_get_bit_depth(png, info) == 8 ? 1 : 2;
}

bool decode_rows(png_structp png, png_infop info, float* out, unsigned char* row, png_uint_32 w, png_uint_32 h) {
  if (setjmp(png_jmpbuf(png))) return false;
  const std::size_t stride = static_cast<std::size_t>(w) * 3;
  for (png_uint_32 r = 0; r < h; ++r) {
    png_read_row(png, row, nullptr);
    for (std::size_t i = 0; i < stride; ++i) out[r * stride + i] = static_cast<float>(row[i]) / 255.0f;
  }
  png_read_end(png, info);
  return true;
}

}  // namespace

void write_png(const std::filesystem::path& path, const Raster& image) {
  if (image.width <= 0 || image.height <= 0) throw IoError("write_png: empty raster");
  FilePtr fp(std::fopen(path.c_str(), "wb"));
  if (!fp) throw IoError("cannot open '" + path.string() + "' for writing");

  std::string err;
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, &err, png_error_handler, png_warning_handler);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, &info);
    throw IoError("png: allocation failed");
  }
  std::vector<unsigned char> row(static_cast<std::size_t>(image.width) * 3);
  const bool ok = encode(png, info, fp.get(), image, row.data());
  png_destroy_write_struct(&png, &info);
  if (!ok) throw IoError("png write '" + path.string() + "': " + err);
  if (std::fflush(fp.get()) != 0) throw IoError("write to '" + path.string() + "' failed");
}

Raster read_png(const std::filesystem::path& path) {
  FilePtr fp(std::fopen(path.c_str(), "rb"));
  if (!fp) throw IoError("cannot open '" + path.string() + "'");
  unsigned char sig[8];
  if (std::fread(sig, 1, 8, fp.get()) != 8 || png_sig_cmp(sig, 0, 8) != 0) {
    throw IoError("'" + path.string() + "' is not a PNG file");
  }
  std::string err;
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, &err, png_error_handler, png_warning_handler);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IoError("png: allocation failed");
  }
  png_uint_32 w = 0, h = 0;
  int kind = decode_header(png, info, fp.get(), &w, &h);
  Raster out;
  if (kind == 1) {
    out = Raster(static_cast<int>(w), static_cast<int>(h));
    std::vector<unsigned char> row(static_cast<std::size_t>(w) * 3);
    if (!decode_rows(png, info, out.data.data(), row.data(), w, h)) kind = 0;
  }
  png_destroy_read_struct(&png, &info, nullptr);
  if (kind == 0) throw IoError("png read '" + path.string() + "': " + err);
  if (kind == 2) throw IoError("'" + path.string() + "' is not an 8-bit RGB PNG");
  return out;
}

}  // namespace gripstab
