#pragma once

#include "useg/image.hpp"
#include "useg/unet.hpp"

#include <random>

namespace useg::testing {

// Two-class depth-1 net that labels a pixel 1 exactly when its red channel is bright.
// Signal path: enc0 identity taps -> skip -> dec0 identity taps -> head threshold at 0.5.
inline UNet<double> threshold_model() {
  UNetConfig config;
  config.num_classes = 2;
  config.base_features = 1;
  config.depth = 1;
  UNet<double> model(config, 0);
  for (auto& [name, p] : model.params()) p.values().setZero();
  for (auto& [name, p] : model.params())
    if (name.ends_with(".gamma")) p.values().setOnes();
  auto& P = model.params();
  P.at("enc0.conv1.kernel")(0, 0, 1, 1) = 1.0;
  P.at("enc0.conv2.kernel")(0, 0, 1, 1) = 1.0;
  P.at("dec0.conv1.kernel")(0, 1, 1, 1) = 1.0;  // concat order is [up, skip]
  P.at("dec0.conv2.kernel")(0, 0, 1, 1) = 1.0;
  P.at("head.kernel")(1, 0, 0, 0) = 10.0;
  P.at("head.bias")[1] = -5.0;
  for (auto& [name, s] : model.batch_norm_states()) s.num_batches = 1;
  return model;
}

// Random two-class sample whose image encodes its labels (red = 255 on class 1) with some
// invalid pixels; threshold_model() predicts it perfectly.
inline LabeledSample encoded_sample(Index h, Index w, std::uint64_t seed, double invalid_rate = 0.1) {
  std::mt19937_64 rng(seed);
  std::bernoulli_distribution target(0.3), invalid(invalid_rate);
  LabeledSample s;
  s.image = Image(h, w, 3, 40);
  s.labels.assign(static_cast<std::size_t>(h * w), 0);
  s.valid.assign(static_cast<std::size_t>(h * w), 1);
  for (Index y = 0; y < h; ++y)
    for (Index x = 0; x < w; ++x) {
      const auto i = static_cast<std::size_t>(y * w + x);
      if (target(rng)) {
        s.labels[i] = 1;
        s.image.at(y, x, 0) = 255;
      }
      if (invalid(rng)) s.valid[i] = 0;
    }
  return s;
}

}  // namespace useg::testing
