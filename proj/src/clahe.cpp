#include "useg/clahe.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <stdexcept>
#include <vector>

namespace useg {
namespace {

using Lut = std::array<std::uint8_t, 256>;

std::uint8_t saturate(double v) {
  return static_cast<std::uint8_t>(std::clamp(std::nearbyint(v), 0.0, 255.0));
}

Index reflect101(Index i, Index n) {
  if (n == 1) return 0;
  while (i < 0 || i >= n) i = i < 0 ? -i : 2 * (n - 1) - i;
  return i;
}

Lut tile_lut(const std::vector<std::uint8_t>& plane, Index stride, Index y0, Index x0, Index tile_h,
             Index tile_w, double clip_limit) {
  std::array<std::int64_t, 256> hist{};
  for (Index y = y0; y < y0 + tile_h; ++y) {
    for (Index x = x0; x < x0 + tile_w; ++x) ++hist[plane[static_cast<std::size_t>(y * stride + x)]];
  }
  Lut lut;
  // A tile with a single gray level carries no contrast to redistribute.
  if (std::count_if(hist.begin(), hist.end(), [](std::int64_t h) { return h != 0; }) == 1) {
    for (int i = 0; i < 256; ++i) lut[static_cast<std::size_t>(i)] = static_cast<std::uint8_t>(i);
    return lut;
  }
  const Index area = tile_h * tile_w;
  const auto limit = std::max<std::int64_t>(static_cast<std::int64_t>(clip_limit * area / 256.0), 1);
  std::int64_t clipped = 0;
  for (auto& h : hist) {
    if (h > limit) {
      clipped += h - limit;
      h = limit;
    }
  }
  const std::int64_t batch = clipped / 256;
  std::int64_t residual = clipped - batch * 256;
  for (auto& h : hist) h += batch;
  if (residual > 0) {
    const std::int64_t step = std::max<std::int64_t>(256 / residual, 1);
    for (std::int64_t i = 0; i < 256 && residual > 0; i += step, --residual) ++hist[static_cast<std::size_t>(i)];
  }
  const double scale = 255.0 / static_cast<double>(area);
  std::int64_t sum = 0;
  for (std::size_t i = 0; i < 256; ++i) {
    sum += hist[i];
    lut[i] = saturate(static_cast<double>(sum) * scale);
  }
  return lut;
}

std::vector<std::uint8_t> equalize_plane(const std::vector<std::uint8_t>& plane, Index height,
                                         Index width, const ClaheConfig& config) {
  const Index tiles_x = config.tiles_x, tiles_y = config.tiles_y;
  const Index tile_w = (width + tiles_x - 1) / tiles_x;
  const Index tile_h = (height + tiles_y - 1) / tiles_y;
  const Index padded_w = tile_w * tiles_x, padded_h = tile_h * tiles_y;

  std::vector<std::uint8_t> padded(static_cast<std::size_t>(padded_w * padded_h));
  for (Index y = 0; y < padded_h; ++y) {
    for (Index x = 0; x < padded_w; ++x) {
      padded[static_cast<std::size_t>(y * padded_w + x)] =
          plane[static_cast<std::size_t>(reflect101(y, height) * width + reflect101(x, width))];
    }
  }
  std::vector<Lut> luts(static_cast<std::size_t>(tiles_x * tiles_y));
  for (Index ty = 0; ty < tiles_y; ++ty) {
    for (Index tx = 0; tx < tiles_x; ++tx) {
      luts[static_cast<std::size_t>(ty * tiles_x + tx)] =
          tile_lut(padded, padded_w, ty * tile_h, tx * tile_w, tile_h, tile_w, config.clip_limit);
    }
  }

  std::vector<std::uint8_t> out(plane.size());
  for (Index y = 0; y < height; ++y) {
    const double fy = (static_cast<double>(y) + 0.5) / static_cast<double>(tile_h) - 0.5;
    const Index y1 = static_cast<Index>(std::floor(fy));
    const double ya = fy - static_cast<double>(y1);
    const Index ty1 = std::max<Index>(y1, 0), ty2 = std::min<Index>(y1 + 1, tiles_y - 1);
    for (Index x = 0; x < width; ++x) {
      const double fx = (static_cast<double>(x) + 0.5) / static_cast<double>(tile_w) - 0.5;
      const Index x1 = static_cast<Index>(std::floor(fx));
      const double xa = fx - static_cast<double>(x1);
      const Index tx1 = std::max<Index>(x1, 0), tx2 = std::min<Index>(x1 + 1, tiles_x - 1);
      const auto v = plane[static_cast<std::size_t>(y * width + x)];
      auto lut = [&](Index ty, Index tx) {
        return static_cast<double>(luts[static_cast<std::size_t>(ty * tiles_x + tx)][v]);
      };
      const double top = lut(ty1, tx1) * (1 - xa) + lut(ty1, tx2) * xa;
      const double bottom = lut(ty2, tx1) * (1 - xa) + lut(ty2, tx2) * xa;
      out[static_cast<std::size_t>(y * width + x)] = saturate(top * (1 - ya) + bottom * ya);
    }
  }
  return out;
}

}  // namespace

Image clahe(const Image& image, const ClaheConfig& config) {
  if (image.empty()) throw std::invalid_argument("clahe: empty image");
  if (!(config.clip_limit > 0)) throw std::invalid_argument("clahe: clip_limit must be positive");
  if (config.tiles_x < 1 || config.tiles_y < 1) throw std::invalid_argument("clahe: tile grid must be positive");
  if (config.tiles_x > image.width || config.tiles_y > image.height) {
    throw std::invalid_argument("clahe: more tiles than pixels");
  }
  if (image.channels == 1) {
    Image out = image;
    out.pixels = equalize_plane(image.pixels, image.height, image.width, config);
    return out;
  }
  if (image.channels != 3) throw std::invalid_argument("clahe: expected 1 or 3 channels");

  const auto n = static_cast<std::size_t>(image.height * image.width);
  std::vector<double> luma(n), cb(n), cr(n);
  std::vector<std::uint8_t> luma8(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double r = image.pixels[3 * i], g = image.pixels[3 * i + 1], b = image.pixels[3 * i + 2];
    luma[i] = 0.299 * r + 0.587 * g + 0.114 * b;
    cb[i] = -0.168736 * r - 0.331264 * g + 0.5 * b;
    cr[i] = 0.5 * r - 0.418688 * g - 0.081312 * b;
    luma8[i] = saturate(luma[i]);
  }
  const auto equalized = equalize_plane(luma8, image.height, image.width, config);
  Image out = image;
  for (std::size_t i = 0; i < n; ++i) {
    const double y = equalized[i];
    out.pixels[3 * i] = saturate(y + 1.402 * cr[i]);
    out.pixels[3 * i + 1] = saturate(y - 0.344136 * cb[i] - 0.714136 * cr[i]);
    out.pixels[3 * i + 2] = saturate(y + 1.772 * cb[i]);
  }
  return out;
}

}  // namespace useg
