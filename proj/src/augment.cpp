#include "useg/augment.hpp"

#include "useg/seeding.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace useg {
namespace {

void check_probability(double p, const char* name) {
  if (!(p >= 0 && p <= 1)) throw std::invalid_argument(std::string("AugmentConfig: ") + name + " must be in [0,1]");
}

std::uint8_t saturate(double v) {
  return static_cast<std::uint8_t>(std::clamp(std::nearbyint(v), 0.0, 255.0));
}

}  // namespace

void AugmentConfig::validate() const {
  check_probability(rotation_probability, "rotation_probability");
  check_probability(crop_probability, "crop_probability");
  check_probability(gamma_probability, "gamma_probability");
  check_probability(brightness_probability, "brightness_probability");
  check_probability(color_probability, "color_probability");
  if (rotation_probability > 0 && !(rotation_min_degrees <= rotation_max_degrees)) {
    throw std::invalid_argument("AugmentConfig: empty rotation range");
  }
  if (crop_probability > 0 && crop_pixels < 1) throw std::invalid_argument("AugmentConfig: crop_pixels must be >= 1");
  if (gamma_probability > 0 && !(gamma_min > 0 && gamma_min <= gamma_max)) {
    throw std::invalid_argument("AugmentConfig: gamma range must be positive and ordered");
  }
  if (brightness_probability > 0 && !(brightness_levels > 0)) {
    throw std::invalid_argument("AugmentConfig: brightness_levels must be positive");
  }
  if (color_probability > 0 && !(color_shift_levels > 0)) {
    throw std::invalid_argument("AugmentConfig: color_shift_levels must be positive");
  }
}

AugmentConfig AugmentConfig::disabled() {
  AugmentConfig c;
  c.rotation_probability = c.crop_probability = c.gamma_probability = 0.0;
  c.brightness_probability = c.color_probability = 0.0;
  return c;
}

std::optional<std::pair<double, double>> AugmentPlan::source_of(Index y, Index x) const {
  double sy = static_cast<double>(y), sx = static_cast<double>(x);
  if (crop) {
    const Index cy = y - pad_top, cx = x - pad_left;
    if (cy < 0 || cy >= crop_height || cx < 0 || cx >= crop_width) return std::nullopt;
    sy = static_cast<double>(cy + crop_top);
    sx = static_cast<double>(cx + crop_left);
  }
  if (rotation_degrees) {
    const double theta = *rotation_degrees * std::numbers::pi / 180.0;
    const double c = std::cos(theta), s = std::sin(theta);
    const double cy = 0.5 * static_cast<double>(height - 1), cx = 0.5 * static_cast<double>(width - 1);
    const double dy = sy - cy, dx = sx - cx;
    // Output is the source rotated by theta; invert by rotating back.
    sx = cx + c * dx + s * dy;
    sy = cy - s * dx + c * dy;
  }
  if (sy < -0.5 || sy >= static_cast<double>(height) - 0.5 || sx < -0.5 ||
      sx >= static_cast<double>(width) - 0.5) {
    return std::nullopt;
  }
  return std::pair{sy, sx};
}

AugmentPlan draw_augment_plan(const AugmentConfig& config, std::uint64_t draw, Index height,
                              Index width) {
  config.validate();
  if (config.crop_probability > 0 && config.crop_pixels >= std::min(height, width)) {
    throw std::invalid_argument("augment: crop of " + std::to_string(config.crop_pixels) +
                                " pixels is larger than the " + std::to_string(height) + "x" +
                                std::to_string(width) + " image");
  }
  auto rng = make_rng({config.seed, 0x617567ULL, draw});
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto uniform = [&](double lo, double hi) { return lo + (hi - lo) * unit(rng); };
  auto integer = [&](Index lo, Index hi) {
    return std::uniform_int_distribution<Index>(lo, hi)(rng);
  };

  AugmentPlan plan;
  plan.height = height;
  plan.width = width;
  // Every branch consumes the same draws so that toggling one op leaves the others unchanged.
  const bool rotate = unit(rng) < config.rotation_probability;
  const double angle = uniform(config.rotation_min_degrees, config.rotation_max_degrees);
  if (rotate) plan.rotation_degrees = angle;

  const bool crop = unit(rng) < config.crop_probability;
  const Index max_crop = std::max<Index>(config.crop_pixels, 0);
  const Index trim_y = integer(0, max_crop), trim_x = integer(0, max_crop);
  const Index top = integer(0, trim_y), left = integer(0, trim_x);
  const Index pad_top = integer(0, trim_y), pad_left = integer(0, trim_x);
  if (crop) {
    plan.crop = true;
    plan.crop_height = height - trim_y;
    plan.crop_width = width - trim_x;
    plan.crop_top = top;
    plan.crop_left = left;
    plan.pad_top = pad_top;
    plan.pad_left = pad_left;
  }

  const bool gamma = unit(rng) < config.gamma_probability;
  const double gamma_value = uniform(config.gamma_min, config.gamma_max);
  if (gamma) plan.gamma = gamma_value;

  const bool bright = unit(rng) < config.brightness_probability;
  const double delta = uniform(-config.brightness_levels, config.brightness_levels);
  if (bright) plan.brightness = delta;

  const bool color = unit(rng) < config.color_probability;
  std::array<double, 3> shift{};
  for (double& s : shift) s = uniform(-config.color_shift_levels, config.color_shift_levels);
  if (color) plan.color_shift = shift;
  return plan;
}

LabeledSample apply_augment_plan(const LabeledSample& sample, const AugmentPlan& plan) {
  sample.check();
  const Index h = sample.height(), w = sample.width();
  if (plan.height != h || plan.width != w) throw ShapeError("augment: plan drawn for a different size");

  LabeledSample out = sample;
  if (plan.rotation_degrees || plan.crop) {
    std::fill(out.image.pixels.begin(), out.image.pixels.end(), 0);
    for (Index y = 0; y < h; ++y) {
      for (Index x = 0; x < w; ++x) {
        const auto at = static_cast<std::size_t>(y * w + x);
        const auto src = plan.source_of(y, x);
        if (!src) {
          out.labels[at] = 0;
          out.valid[at] = 0;
          continue;
        }
        const auto [sy, sx] = *src;
        const Index ny = std::clamp<Index>(std::lround(sy), 0, h - 1);
        const Index nx = std::clamp<Index>(std::lround(sx), 0, w - 1);
        const auto from = static_cast<std::size_t>(ny * w + nx);
        out.labels[at] = sample.labels[from];
        out.valid[at] = sample.valid[from];

        const double fy = std::clamp(sy, 0.0, static_cast<double>(h - 1));
        const double fx = std::clamp(sx, 0.0, static_cast<double>(w - 1));
        const Index y0 = static_cast<Index>(std::floor(fy)), x0 = static_cast<Index>(std::floor(fx));
        const Index y1 = std::min(y0 + 1, h - 1), x1 = std::min(x0 + 1, w - 1);
        const double ay = fy - static_cast<double>(y0), ax = fx - static_cast<double>(x0);
        for (Index c = 0; c < 3; ++c) {
          const double top = sample.image.at(y0, x0, c) * (1 - ax) + sample.image.at(y0, x1, c) * ax;
          const double bottom = sample.image.at(y1, x0, c) * (1 - ax) + sample.image.at(y1, x1, c) * ax;
          out.image.at(y, x, c) = saturate(top * (1 - ay) + bottom * ay);
        }
      }
    }
  }

  if (plan.gamma || plan.brightness || plan.color_shift) {
    for (Index y = 0; y < h; ++y) {
      for (Index x = 0; x < w; ++x) {
        for (Index c = 0; c < 3; ++c) {
          double v = out.image.at(y, x, c);
          if (plan.gamma) v = 255.0 * std::pow(v / 255.0, *plan.gamma);
          if (plan.brightness) v += *plan.brightness;
          if (plan.color_shift) v += (*plan.color_shift)[static_cast<std::size_t>(c)];
          out.image.at(y, x, c) = saturate(v);
        }
      }
    }
  }
  return out;
}

LabeledSample augment(const LabeledSample& sample, const AugmentConfig& config, std::uint64_t draw) {
  return apply_augment_plan(sample, draw_augment_plan(config, draw, sample.height(), sample.width()));
}

}  // namespace useg
