#include "useg/layers.hpp"
#include "useg/loss.hpp"

#include <doctest.h>

#include <cmath>
#include <random>

using namespace useg;
using T = Tensor<double>;

namespace {

// Logits for one pixel whose softmax is `probs`.
T logits_for(const std::vector<double>& probs) {
  T t({1, static_cast<Index>(probs.size()), 1, 1});
  for (std::size_t c = 0; c < probs.size(); ++c) t[static_cast<Index>(c)] = std::log(probs[c]);
  return t;
}

PixelTargets one_pixel(int label) {
  PixelTargets t(1, 1, 1);
  t.labels[0] = label;
  t.valid[0] = 1;
  return t;
}

PixelTargets random_targets(std::mt19937_64& rng, Index n, Index h, Index w, Index classes, double valid_rate) {
  PixelTargets t(n, h, w);
  std::bernoulli_distribution keep(valid_rate);
  for (std::size_t i = 0; i < t.labels.size(); ++i) {
    t.labels[i] = static_cast<std::int32_t>(std::uniform_int_distribution<Index>(0, classes - 1)(rng));
    t.valid[i] = keep(rng);
  }
  t.valid[0] = 1;
  return t;
}

// Independent per-pixel oracle: -w (1-p)^g log p on the clamped true-class probability.
double oracle_loss(const T& logits, const PixelTargets& t, const std::vector<double>& w, double gamma) {
  const T p = softmax_channels(logits);
  const Index plane = logits.dim(2) * logits.dim(3);
  double sum = 0;
  Index count = 0;
  for (Index n = 0; n < logits.dim(0); ++n)
    for (Index i = 0; i < plane; ++i) {
      const auto at = static_cast<std::size_t>(n * plane + i);
      if (!t.valid[at]) continue;
      const int label = t.labels[at];
      const double q = std::clamp(p(n, label, i / logits.dim(3), i % logits.dim(3)), 1e-7, 1 - 1e-7);
      sum += -w[static_cast<std::size_t>(label)] * std::pow(1 - q, gamma) * std::log(q);
      ++count;
    }
  return sum / static_cast<double>(count);
}

}  // namespace

TEST_CASE("worked single-pixel values") {
  const T uniform = logits_for({0.5, 0.5});
  SUBCASE("SCE at a uniform prediction is ln 2") {
    CHECK(compute_loss(uniform, one_pixel(0), LossConfig{LossKind::sce}).loss == doctest::Approx(0.693147).epsilon(1e-6));
  }
  SUBCASE("focal gamma 2 at p = 0.5 is ln2 / 4") {
    const double loss = compute_loss(uniform, one_pixel(0), LossConfig{LossKind::focal, 2.0}).loss;
    CHECK(loss == doctest::Approx(0.25 * std::log(2.0)).epsilon(1e-14));
    CHECK(loss == doctest::Approx(0.173287).epsilon(1e-6));
  }
  SUBCASE("weighted SCE with weights [1, 10] on class 1 is 10 ln 2") {
    const double loss = compute_loss(uniform, one_pixel(1), LossConfig{LossKind::weighted_sce, 0.0, {1, 10}}).loss;
    CHECK(loss == doctest::Approx(6.93147).epsilon(1e-6));
  }
  SUBCASE("weighted focal gamma 1, w = 10, p = 0.9") {
    const double loss =
        compute_loss(logits_for({0.9, 0.1}), one_pixel(0), LossConfig{LossKind::weighted_focal, 1.0, {10, 1}}).loss;
    CHECK(loss == doctest::Approx(10 * 0.1 * -std::log(0.9)).epsilon(1e-12));
    CHECK(loss == doctest::Approx(0.105361).epsilon(1e-5));
  }
}

TEST_CASE("compute_loss agrees with the per-pixel oracle") {
  std::mt19937_64 rng(31);
  for (int trial = 0; trial < 30; ++trial) {
    const Index classes = 2 + trial % 5;
    const T logits = T::random_normal({2, classes, 5, 4}, rng, 3.0);
    const PixelTargets t = random_targets(rng, 2, 5, 4, classes, 0.8);
    std::vector<double> w(static_cast<std::size_t>(classes));
    for (double& v : w) v = std::uniform_real_distribution<double>(0.5, 10)(rng);
    const std::vector<double> ones(w.size(), 1.0);
    for (double gamma : {0.5, 1.0, 2.0}) {
      CHECK(compute_loss(logits, t, LossConfig{LossKind::sce}).loss == doctest::Approx(oracle_loss(logits, t, ones, 0)).epsilon(1e-12));
      CHECK(compute_loss(logits, t, LossConfig{LossKind::weighted_sce, 0, w}).loss == doctest::Approx(oracle_loss(logits, t, w, 0)).epsilon(1e-12));
      CHECK(compute_loss(logits, t, LossConfig{LossKind::focal, gamma}).loss == doctest::Approx(oracle_loss(logits, t, ones, gamma)).epsilon(1e-12));
      CHECK(compute_loss(logits, t, LossConfig{LossKind::weighted_focal, gamma, w}).loss == doctest::Approx(oracle_loss(logits, t, w, gamma)).epsilon(1e-12));
    }
  }
}

TEST_CASE("equivalences between loss kinds") {
  std::mt19937_64 rng(41);
  const T logits = T::random_normal({1, 6, 25, 40}, rng, 3.0);  // 1000 pixels
  const PixelTargets t = random_targets(rng, 1, 25, 40, 6, 1.0);
  const std::vector<double> w{1, 1, 10, 5, 1, 1}, ones(6, 1.0);

  const auto sce = compute_loss(logits, t, LossConfig{LossKind::sce});
  const auto focal0 = compute_loss(logits, t, LossConfig{LossKind::focal, 0.0});
  CHECK(std::abs(sce.loss - focal0.loss) <= 1e-12);
  CHECK((sce.grad_logits.values() - focal0.grad_logits.values()).cwiseAbs().maxCoeff() <= 1e-12);

  const auto wsce = compute_loss(logits, t, LossConfig{LossKind::weighted_sce, 0.0, w});
  const auto wfocal0 = compute_loss(logits, t, LossConfig{LossKind::weighted_focal, 0.0, w});
  CHECK(std::abs(wsce.loss - wfocal0.loss) <= 1e-12);

  for (double gamma : {0.5, 1.0, 2.0}) {
    const auto focal = compute_loss(logits, t, LossConfig{LossKind::focal, gamma});
    const auto wfocal = compute_loss(logits, t, LossConfig{LossKind::weighted_focal, gamma, ones});
    CHECK(std::abs(focal.loss - wfocal.loss) <= 1e-12);
    CHECK((focal.grad_logits.values() - wfocal.grad_logits.values()).cwiseAbs().maxCoeff() <= 1e-12);
  }
}

TEST_CASE("focal / SCE per-pixel ratio is (1-p)^gamma and decreasing in p") {
  double previous = 2.0;
  for (double p : {0.05, 0.2, 0.5, 0.8, 0.95, 0.999}) {
    const T logits = logits_for({p, 1 - p});
    const double ratio = compute_loss(logits, one_pixel(0), LossConfig{LossKind::focal, 2.0}).loss /
                         compute_loss(logits, one_pixel(0), LossConfig{LossKind::sce}).loss;
    CHECK(ratio == doctest::Approx(std::pow(1 - p, 2.0)).epsilon(1e-10));
    CHECK(ratio < previous);
    previous = ratio;
  }
}

TEST_CASE("confident correct predictions cost nothing") {
  T logits({1, 3, 1, 1});
  logits[0] = 60;  // softmax saturates beyond the clamp
  for (LossKind kind : {LossKind::sce, LossKind::weighted_sce, LossKind::focal, LossKind::weighted_focal}) {
    const auto r = compute_loss(logits, one_pixel(0), LossConfig{kind, 2.0, {1, 2, 3}});
    CHECK(r.loss <= 3 * 1.1e-7);
    CHECK(r.grad_logits.values().cwiseAbs().maxCoeff() == 0.0);
  }
}

TEST_CASE("invalid pixels are isolated") {
  std::mt19937_64 rng(5);
  T logits = T::random_normal({2, 4, 3, 3}, rng);
  PixelTargets t = random_targets(rng, 2, 3, 3, 4, 1.0);
  t.valid[4] = 0;
  t.labels[4] = 3;
  const LossConfig config{LossKind::weighted_focal, 1.0, {1, 2, 3, 4}};
  const auto before = compute_loss(logits, t, config);
  CHECK(before.valid_pixels == 17);
  for (Index c = 0; c < 4; ++c) logits(0, c, 1, 1) += 5.0 * static_cast<double>(c + 1);
  const auto after = compute_loss(logits, t, config);
  CHECK(after.loss == before.loss);
  for (Index c = 0; c < 4; ++c) CHECK(after.grad_logits(0, c, 1, 1) == 0.0);
  CHECK(after.grad_logits == before.grad_logits);

  SUBCASE("labels at invalid pixels may be anything") {
    t.labels[4] = 99;
    CHECK_NOTHROW(compute_loss(logits, t, config));
  }
}

TEST_CASE("loss is invariant to permuting pixels") {
  std::mt19937_64 rng(6);
  const T logits = T::random_normal({1, 3, 1, 12}, rng);
  const PixelTargets t = random_targets(rng, 1, 1, 12, 3, 0.7);
  std::vector<Index> order(12);
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  T permuted(logits.dims());
  PixelTargets pt(1, 1, 12);
  for (Index i = 0; i < 12; ++i) {
    const Index from = order[static_cast<std::size_t>(i)];
    for (Index c = 0; c < 3; ++c) permuted(0, c, 0, i) = logits(0, c, 0, from);
    pt.labels[static_cast<std::size_t>(i)] = t.labels[static_cast<std::size_t>(from)];
    pt.valid[static_cast<std::size_t>(i)] = t.valid[static_cast<std::size_t>(from)];
  }
  const LossConfig config{LossKind::focal, 0.5};
  CHECK(compute_loss(permuted, pt, config).loss == doctest::Approx(compute_loss(logits, t, config).loss).epsilon(1e-14));
}

TEST_CASE("gradient matches finite differences for every kind") {
  std::mt19937_64 rng(12);
  for (LossKind kind : {LossKind::sce, LossKind::weighted_sce, LossKind::focal, LossKind::weighted_focal}) {
    for (double gamma : {0.5, 1.0, 2.0}) {
      T logits = T::random_normal({2, 4, 3, 3}, rng, 2.0);
      const PixelTargets t = random_targets(rng, 2, 3, 3, 4, 0.8);
      const LossConfig config{kind, gamma, {1, 10, 5, 0.5}};
      const T g = compute_loss(logits, t, config).grad_logits;
      const double scale = g.values().cwiseAbs().maxCoeff();
      for (Index i = 0; i < logits.size(); ++i) {
        const double saved = logits[i];
        logits[i] = saved + 1e-4;
        const double plus = compute_loss(logits, t, config).loss;
        logits[i] = saved - 1e-4;
        const double minus = compute_loss(logits, t, config).loss;
        logits[i] = saved;
        const double numeric = (plus - minus) / 2e-4;
        CHECK(std::abs(numeric - g[i]) / std::max({std::abs(g[i]), std::abs(numeric), 1e-3 * scale}) < 1e-5);
      }
    }
  }
}

TEST_CASE("loss errors") {
  const T logits({1, 2, 1, 2});
  PixelTargets t(1, 1, 2);
  t.valid = {0, 0};
  SUBCASE("no valid pixels") { CHECK_THROWS_AS(compute_loss(logits, t, LossConfig{}), NoValidPixelsError); }
  SUBCASE("label out of range") {
    t.valid[0] = 1;
    t.labels[0] = 2;
    CHECK_THROWS_AS(compute_loss(logits, t, LossConfig{}), std::out_of_range);
  }
  SUBCASE("spatial mismatch") {
    t.valid[0] = 1;
    CHECK_THROWS(compute_loss(T({1, 2, 2, 1}), t, LossConfig{}));
  }
  SUBCASE("weight count must match classes") {
    t.valid[0] = 1;
    CHECK_THROWS(compute_loss(logits, t, LossConfig{LossKind::weighted_sce, 0, {1, 2, 3}}));
    CHECK_THROWS(compute_loss(logits, t, LossConfig{LossKind::weighted_sce, 0, {1, -2}}));
  }
  SUBCASE("negative gamma") {
    t.valid[0] = 1;
    CHECK_THROWS(compute_loss(logits, t, LossConfig{LossKind::focal, -1}));
  }
}

TEST_CASE("class weights from label frequencies") {
  const std::vector<double> two{0.5, 0.05};
  const auto w = class_weights_from_frequencies(two, 1e-4);
  CHECK(w[0] == doctest::Approx(1.0));
  CHECK(w[1] == doctest::Approx(10.0));

  const std::vector<double> uniform{7, 7, 7, 7};
  for (double v : class_weights_from_frequencies(uniform, 1e-4)) CHECK(v == doctest::Approx(1.0));

  const std::vector<double> with_zero{900, 100, 0};
  const auto z = class_weights_from_frequencies(with_zero, 0.01);
  CHECK(z[2] == doctest::Approx((1 / 0.01) / (1 / 0.9)));

  const std::vector<double> empty{0, 0};
  CHECK_THROWS(class_weights_from_frequencies(empty, 0.01));
}

TEST_CASE("a manual weight set is used verbatim") {
  const LossConfig config{LossKind::weighted_sce, 0, {1, 1, 10, 5, 1, 1}};
  CHECK_NOTHROW(config.validate(6));
  CHECK(config.effective_weights(6) == std::vector<double>{1, 1, 10, 5, 1, 1});
  LossConfig normalized{LossKind::weighted_sce, 0, {0.5, 5}, true};
  CHECK(normalized.effective_weights(2) == std::vector<double>{1, 10});
}
