#include "useg/png_io.hpp"

#include <png.h>

#include <algorithm>
#include <csetjmp>
#include <cstdio>
#include <memory>
#include <stdexcept>

namespace useg {
namespace {

struct FileCloser {
  void operator()(std::FILE* f) const { std::fclose(f); }
};
using File = std::unique_ptr<std::FILE, FileCloser>;

File open_file(const std::filesystem::path& path, const char* mode) {
  File f(std::fopen(path.c_str(), mode));
  if (!f) throw ImageIoError("cannot open " + path.string());
  return f;
}

// libpng reports errors by longjmp; the message is kept for the exception thrown afterwards.
void png_fail(png_structp png, png_const_charp message) {
  if (auto* text = static_cast<std::string*>(png_get_error_ptr(png))) *text = message;
  png_longjmp(png, 1);
}
void png_warn(png_structp, png_const_charp) {}

}  // namespace

Image load_png(const std::filesystem::path& path, bool require_8bit_gray) {
  File file = open_file(path, "rb");
  png_byte signature[8];
  if (std::fread(signature, 1, 8, file.get()) != 8 || png_sig_cmp(signature, 0, 8) != 0) {
    throw ImageIoError(path.string() + ": not a PNG file");
  }
  std::string error;
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, &error, png_fail, png_warn);
  if (!png) throw ImageIoError("png_create_read_struct failed");
  png_infop info = png_create_info_struct(png);
  struct Guard {
    png_structp* png;
    png_infop* info;
    ~Guard() { png_destroy_read_struct(png, info, nullptr); }
  } guard{&png, &info};
  if (!info) throw ImageIoError("png_create_info_struct failed");

  Image image;
  std::vector<png_bytep> rows;
  if (setjmp(png_jmpbuf(png))) throw ImageIoError(path.string() + ": " + error);
  png_init_io(png, file.get());
  png_set_sig_bytes(png, 8);
  png_read_info(png, info);
  const auto width = png_get_image_width(png, info);
  const auto height = png_get_image_height(png, info);
  const int bit_depth = png_get_bit_depth(png, info);
  const int color_type = png_get_color_type(png, info);

  if (require_8bit_gray && (bit_depth != 8 || color_type != PNG_COLOR_TYPE_GRAY)) {
    png_error(png, "mask must be an 8-bit single-channel PNG");
  }
  if (bit_depth == 16) png_set_strip_16(png);
  if (color_type == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color_type == PNG_COLOR_TYPE_GRAY && bit_depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (color_type & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
  png_read_update_info(png, info);

  const int channels = png_get_channels(png, info);
  image = Image(static_cast<Index>(height), static_cast<Index>(width), channels);
  const std::size_t stride = static_cast<std::size_t>(width) * static_cast<std::size_t>(channels);
  if (png_get_rowbytes(png, info) != stride) png_error(png, "unsupported layout");
  rows.resize(height);
  for (png_uint_32 y = 0; y < height; ++y) rows[y] = image.pixels.data() + y * stride;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  return image;
}

void save_png(const std::filesystem::path& path, const Image& image) {
  if (image.empty() || (image.channels != 1 && image.channels != 3)) {
    throw ImageIoError("save_png: only non-empty 1- or 3-channel images are supported");
  }
  File file = open_file(path, "wb");
  std::string error;
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, &error, png_fail, png_warn);
  if (!png) throw ImageIoError("png_create_write_struct failed");
  png_infop info = png_create_info_struct(png);
  struct Guard {
    png_structp* png;
    png_infop* info;
    ~Guard() { png_destroy_write_struct(png, info); }
  } guard{&png, &info};
  if (!info) throw ImageIoError("png_create_info_struct failed");

  if (setjmp(png_jmpbuf(png))) throw ImageIoError(path.string() + ": " + error);
  png_init_io(png, file.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(image.width),
               static_cast<png_uint_32>(image.height), 8,
               image.channels == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  const std::size_t stride = static_cast<std::size_t>(image.width * image.channels);
  for (Index y = 0; y < image.height; ++y) {
    png_write_row(png, const_cast<png_bytep>(image.pixels.data() + static_cast<std::size_t>(y) * stride));
  }
  png_write_end(png, nullptr);
}

void save_sample(const LabeledSample& sample, const std::filesystem::path& image_path,
                 const std::filesystem::path& mask_path) {
  save_png(image_path, sample.image);
  save_png(mask_path, sample.mask_image());
}

LabeledSample load_sample(const std::filesystem::path& image_path,
                          const std::filesystem::path& mask_path) {
  Image image = load_png(image_path);
  if (image.channels == 1) {
    Image rgb(image.height, image.width, 3);
    for (std::size_t i = 0; i < image.pixels.size(); ++i) {
      std::fill_n(rgb.pixels.begin() + static_cast<std::ptrdiff_t>(3 * i), 3, image.pixels[i]);
    }
    image = std::move(rgb);
  }
  return sample_from_mask(std::move(image), load_png(mask_path, true));
}

}  // namespace useg
