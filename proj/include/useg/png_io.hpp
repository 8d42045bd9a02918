#pragma once

#include "useg/image.hpp"

#include <filesystem>
#include <stdexcept>

namespace useg {

class ImageIoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Reads an 8-bit PNG (gray or RGB; alpha stripped, 16-bit narrowed). With
/// `require_8bit_gray`, anything other than an 8-bit single-channel file is rejected.
Image load_png(const std::filesystem::path& path, bool require_8bit_gray = false);
void save_png(const std::filesystem::path& path, const Image& image);

/// Image as RGB PNG, mask as 8-bit class-index PNG with 255 for invalid pixels.
void save_sample(const LabeledSample& sample, const std::filesystem::path& image_path,
                 const std::filesystem::path& mask_path);
LabeledSample load_sample(const std::filesystem::path& image_path,
                          const std::filesystem::path& mask_path);

}  // namespace useg
