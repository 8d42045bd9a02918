#pragma once

#include "useg/image.hpp"

namespace useg {

struct ClaheConfig {
  /// Histogram bins are clipped at clip_limit times the mean bin height.
  double clip_limit = 2.0;
  int tiles_x = 8;
  int tiles_y = 8;
};

/// Contrast-limited adaptive histogram equalization. Gray images are equalized directly;
/// RGB images are equalized on luminance (BT.601 YCbCr) with chroma preserved.
/// Image sizes that the tile grid does not divide are reflect-padded internally.
Image clahe(const Image& image, const ClaheConfig& config = {});

}  // namespace useg
