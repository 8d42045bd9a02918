#include "useg/synth.hpp"

#include "useg/seeding.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <stdexcept>

namespace useg {
namespace {

using Rng = std::mt19937_64;

double uniform(Rng& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

/// Smooth noise in roughly [-1, 1]: bilinear interpolation of a coarse random grid.
std::vector<double> value_noise(Rng& rng, Index height, Index width, Index cells) {
  const Index gh = cells + 1, gw = cells + 1;
  std::vector<double> grid(static_cast<std::size_t>(gh * gw));
  for (double& g : grid) g = uniform(rng, -1.0, 1.0);
  std::vector<double> field(static_cast<std::size_t>(height * width));
  for (Index y = 0; y < height; ++y) {
    const double fy = static_cast<double>(y) / static_cast<double>(height) * static_cast<double>(cells);
    const Index y0 = static_cast<Index>(fy);
    const double ay = fy - static_cast<double>(y0);
    for (Index x = 0; x < width; ++x) {
      const double fx = static_cast<double>(x) / static_cast<double>(width) * static_cast<double>(cells);
      const Index x0 = static_cast<Index>(fx);
      const double ax = fx - static_cast<double>(x0);
      auto g = [&](Index yy, Index xx) { return grid[static_cast<std::size_t>(yy * gw + xx)]; };
      const double top = g(y0, x0) * (1 - ax) + g(y0, x0 + 1) * ax;
      const double bottom = g(y0 + 1, x0) * (1 - ax) + g(y0 + 1, x0 + 1) * ax;
      field[static_cast<std::size_t>(y * width + x)] = top * (1 - ay) + bottom * ay;
    }
  }
  return field;
}

struct Canvas {
  Index height, width;
  std::vector<std::uint8_t> labels;
  std::vector<std::uint8_t> valid;
  /// Per-pixel color before noise and illumination.
  std::vector<std::array<double, 3>> color;
};

/// Marks the `count` pixels farthest from a jittered ellipse center invalid, like a lens cover
/// cropping the corners of the frame.
void paint_occlusion(Canvas& canvas, Index count, Rng& rng) {
  if (count <= 0) return;
  const double cy = 0.5 * static_cast<double>(canvas.height) * uniform(rng, 0.85, 1.15);
  const double cx = 0.5 * static_cast<double>(canvas.width) * uniform(rng, 0.85, 1.15);
  const double ry = 0.5 * static_cast<double>(canvas.height) * uniform(rng, 0.9, 1.2);
  const double rx = 0.5 * static_cast<double>(canvas.width) * uniform(rng, 0.9, 1.2);
  std::vector<std::pair<double, Index>> order;
  order.reserve(canvas.labels.size());
  for (Index y = 0; y < canvas.height; ++y) {
    for (Index x = 0; x < canvas.width; ++x) {
      const double dy = (static_cast<double>(y) + 0.5 - cy) / ry;
      const double dx = (static_cast<double>(x) + 0.5 - cx) / rx;
      order.emplace_back(dy * dy + dx * dx, y * canvas.width + x);
    }
  }
  std::stable_sort(order.begin(), order.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
  for (Index i = 0; i < count; ++i) canvas.valid[static_cast<std::size_t>(order[static_cast<std::size_t>(i)].second)] = 0;
}

/// Paints blobs of `label` onto valid background pixels until `target` pixels are covered.
void paint_class(Canvas& canvas, std::uint8_t label, const BlobStyle& style, Index target,
                 int blob_count, Rng& rng) {
  if (target <= 0 || blob_count <= 0) return;
  const double extent = static_cast<double>(std::min(canvas.height, canvas.width));
  Index painted = 0;
  int placed = 0;
  for (int attempt = 0; attempt < 400 && painted < target; ++attempt) {
    std::vector<Index> free_pixels;
    for (std::size_t i = 0; i < canvas.labels.size(); ++i) {
      if (canvas.valid[i] && canvas.labels[i] == 0) free_pixels.push_back(static_cast<Index>(i));
    }
    if (free_pixels.empty()) break;
    const Index seed_pixel = free_pixels[std::uniform_int_distribution<std::size_t>(0, free_pixels.size() - 1)(rng)];
    const double cy = static_cast<double>(seed_pixel / canvas.width) + 0.5;
    const double cx = static_cast<double>(seed_pixel % canvas.width) + 0.5;

    const int remaining_blobs = std::max(blob_count - placed, 1);
    const double want = static_cast<double>(target - painted) / remaining_blobs;
    const double aspect = uniform(rng, 0.45, 1.0);
    double scale = std::sqrt(want / (std::numbers::pi * aspect));
    scale = std::clamp(scale, style.min_radius * extent, style.max_radius * extent);
    const double angle = uniform(rng, 0.0, std::numbers::pi);
    const double phase1 = uniform(rng, 0.0, 2 * std::numbers::pi);
    const double phase2 = uniform(rng, 0.0, 2 * std::numbers::pi);
    const double ca = std::cos(angle), sa = std::sin(angle);

    std::vector<std::pair<double, Index>> candidates;
    const Index reach = static_cast<Index>(std::ceil(scale * (1.0 + style.irregularity * 1.6))) + 1;
    for (Index y = std::max<Index>(0, static_cast<Index>(cy) - reach);
         y < std::min(canvas.height, static_cast<Index>(cy) + reach + 1); ++y) {
      for (Index x = std::max<Index>(0, static_cast<Index>(cx) - reach);
           x < std::min(canvas.width, static_cast<Index>(cx) + reach + 1); ++x) {
        const auto at = static_cast<std::size_t>(y * canvas.width + x);
        if (!canvas.valid[at] || canvas.labels[at] != 0) continue;
        const double dy = static_cast<double>(y) + 0.5 - cy, dx = static_cast<double>(x) + 0.5 - cx;
        const double u = (ca * dx + sa * dy) / scale;
        const double v = (-sa * dx + ca * dy) / (scale * aspect);
        const double theta = std::atan2(v, u);
        const double boundary = 1.0 + style.irregularity * (std::sin(3 * theta + phase1) +
                                                            0.6 * std::sin(5 * theta + phase2));
        const double r = std::sqrt(u * u + v * v) / std::max(boundary, 0.2);
        if (r <= 1.0) candidates.emplace_back(r, static_cast<Index>(at));
      }
    }
    if (candidates.empty()) continue;
    // Keep the innermost pixels when the blob would overshoot the target.
    const Index allowed = target - painted;
    if (static_cast<Index>(candidates.size()) > allowed) {
      std::stable_sort(candidates.begin(), candidates.end());
      candidates.resize(static_cast<std::size_t>(allowed));
    }
    std::array<double, 3> tint;
    for (std::size_t c = 0; c < 3; ++c) tint[c] = style.color[c] + uniform(rng, -style.color_jitter, style.color_jitter);
    for (const auto& [r, at] : candidates) {
      canvas.labels[static_cast<std::size_t>(at)] = label;
      canvas.color[static_cast<std::size_t>(at)] = tint;
    }
    painted += static_cast<Index>(candidates.size());
    ++placed;
  }
}

}  // namespace

std::vector<BlobStyle> SynthConfig::default_blob_styles() {
  return {
      // coating
      {0, 0, 0.0, 0.0, {118, 124, 128}, 6.0, 14.0, 0.0},
      // wet_coating
      {1, 3, 0.10, 0.30, {72, 84, 96}, 10.0, 12.0, 0.3},
      // corroded
      {2, 5, 0.05, 0.18, {150, 84, 50}, 22.0, 14.0, 0.35},
      // rivet
      {3, 8, 0.025, 0.05, {192, 186, 170}, 8.0, 4.0, 0.0},
      // water
      {1, 2, 0.08, 0.25, {46, 82, 70}, 10.0, 10.0, 0.3},
      // others
      {1, 3, 0.05, 0.15, {104, 98, 62}, 14.0, 12.0, 0.3},
  };
}

void SynthConfig::validate() const {
  taxonomy.validate();
  if (height < 8 || width < 8) throw std::invalid_argument("SynthConfig: image must be at least 8x8");
  if (static_cast<Index>(target_fractions.size()) != num_classes() ||
      static_cast<Index>(blobs.size()) != num_classes()) {
    throw std::invalid_argument("SynthConfig: target_fractions and blobs need one entry per class");
  }
  double total = noisy_corroded_fraction;
  for (double f : target_fractions) {
    if (!(f >= 0)) throw std::invalid_argument("SynthConfig: fractions must be non-negative");
    total += f;
  }
  if (!(noisy_corroded_fraction >= 0)) throw std::invalid_argument("SynthConfig: noisy fraction must be non-negative");
  if (total > 1.0 + 1e-9) throw std::invalid_argument("SynthConfig: infeasible fractions (sum > 1)");
  for (const auto& b : blobs) {
    if (b.min_count < 0 || b.max_count < b.min_count) throw std::invalid_argument("SynthConfig: bad blob count range");
    if (!(b.min_radius >= 0 && b.min_radius <= b.max_radius)) throw std::invalid_argument("SynthConfig: bad blob radius range");
  }
  if (!(noise_level >= 0) || !(dust_streak_rate >= 0)) throw std::invalid_argument("SynthConfig: negative noise settings");
  if (!(min_gain > 0 && min_gain <= max_gain)) throw std::invalid_argument("SynthConfig: bad gain range");
}

LabeledSample generate_scene(const SynthConfig& config) {
  config.validate();
  const Index h = config.height, w = config.width, n = h * w;
  const auto pixels = static_cast<std::size_t>(n);
  Rng rng = make_rng({config.seed, 0x7363656eULL});

  Canvas canvas{h, w, std::vector<std::uint8_t>(pixels, 0), std::vector<std::uint8_t>(pixels, 1),
                std::vector<std::array<double, 3>>(pixels, config.blobs[0].color)};

  auto count_of = [&](double fraction) { return static_cast<Index>(std::llround(fraction * static_cast<double>(n))); };
  const double assigned = std::accumulate(config.target_fractions.begin(), config.target_fractions.end(),
                                          config.noisy_corroded_fraction);
  paint_occlusion(canvas, std::max<Index>(0, n - count_of(assigned)), rng);

  // Large classes first so small ones still find free background.
  std::vector<std::size_t> order(config.target_fractions.size() - 1);
  std::iota(order.begin(), order.end(), 1);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return config.target_fractions[a] > config.target_fractions[b];
  });
  const int corroded = config.noisy_corroded_fraction > 0 ? config.taxonomy.index_of("corroded") : -1;
  for (std::size_t c : order) {
    const BlobStyle& style = config.blobs[c];
    const int blobs = std::uniform_int_distribution<int>(style.min_count, std::max(style.min_count, style.max_count))(rng);
    paint_class(canvas, static_cast<std::uint8_t>(c), style, count_of(config.target_fractions[c]),
                style.max_count == 0 ? 0 : blobs, rng);
    if (static_cast<int>(c) == corroded && config.noisy_corroded_fraction > 0) {
      BlobStyle faded = style;
      for (std::size_t k = 0; k < 3; ++k) faded.color[k] = 0.5 * (style.color[k] + config.blobs[0].color[k]);
      paint_class(canvas, kNoisyCorrodedLabel, faded, count_of(config.noisy_corroded_fraction),
                  std::max(style.max_count, 1), rng);
    }
  }

  // Texture, illumination and speckle.
  const auto texture = value_noise(rng, h, w, 6);
  const auto fine = value_noise(rng, h, w, 16);
  const double gain = uniform(rng, config.min_gain, config.max_gain);
  const double gy = uniform(rng, -0.25, 0.25), gx = uniform(rng, -0.25, 0.25);
  std::normal_distribution<double> speckle(0.0, config.noise_level);
  Image image(h, w, 3);
  for (Index y = 0; y < h; ++y) {
    for (Index x = 0; x < w; ++x) {
      const auto at = static_cast<std::size_t>(y * w + x);
      const double ny = static_cast<double>(y) / static_cast<double>(h) - 0.5;
      const double nx = static_cast<double>(x) / static_cast<double>(w) - 0.5;
      const double light = gain * (1.0 + gy * ny + gx * nx);
      std::array<double, 3> rgb;
      if (!canvas.valid[at]) {
        rgb = {18, 18, 20};
      } else {
        const std::uint8_t label = canvas.labels[at];
        const BlobStyle& style = label == kNoisyCorrodedLabel ? config.blobs[static_cast<std::size_t>(corroded)]
                                                              : config.blobs[label];
        const double tex = style.texture * (0.7 * texture[at] + 0.6 * fine[at]);
        for (std::size_t c = 0; c < 3; ++c) rgb[c] = (canvas.color[at][c] + tex) * light;
      }
      for (std::size_t c = 0; c < 3; ++c) {
        image.at(y, x, static_cast<Index>(c)) =
            static_cast<std::uint8_t>(std::clamp(std::nearbyint(rgb[c] + speckle(rng)), 0.0, 255.0));
      }
    }
  }

  // Dust streaks: bright, rust-tinted streaks that leave the labels untouched.
  const int streaks = std::poisson_distribution<int>(config.dust_streak_rate)(rng);
  for (int s = 0; s < streaks; ++s) {
    const double y0 = uniform(rng, 0, static_cast<double>(h)), x0 = uniform(rng, 0, static_cast<double>(w));
    const double angle = uniform(rng, 0, std::numbers::pi);
    const double length = uniform(rng, 0.3, 0.9) * static_cast<double>(std::max(h, w));
    const double half_width = uniform(rng, 0.5, 1.5);
    const double alpha = uniform(rng, 0.35, 0.7);
    const std::array<double, 3> dust{uniform(rng, 190, 235), uniform(rng, 140, 180), uniform(rng, 110, 150)};
    const double dy = std::sin(angle), dx = std::cos(angle);
    for (Index y = 0; y < h; ++y) {
      for (Index x = 0; x < w; ++x) {
        const double py = static_cast<double>(y) - y0, px = static_cast<double>(x) - x0;
        const double along = px * dx + py * dy;
        const double across = std::abs(-px * dy + py * dx);
        if (std::abs(along) > 0.5 * length || across > half_width) continue;
        if (!canvas.valid[static_cast<std::size_t>(y * w + x)]) continue;
        const double fade = alpha * (1.0 - across / (half_width + 1.0));
        for (Index c = 0; c < 3; ++c) {
          const double v = image.at(y, x, c);
          image.at(y, x, c) = static_cast<std::uint8_t>(
              std::clamp(std::nearbyint(v + fade * (dust[static_cast<std::size_t>(c)] - v)), 0.0, 255.0));
        }
      }
    }
  }

  LabeledSample sample{std::move(image), std::move(canvas.labels), std::move(canvas.valid)};
  for (std::size_t i = 0; i < pixels; ++i) {
    if (!sample.valid[i]) sample.labels[i] = 0;
  }
  resolve_noisy_labels(sample, config.taxonomy);
  return sample;
}

}  // namespace useg
