#pragma once

#include "useg/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace useg {

enum class LossKind { sce, weighted_sce, focal, weighted_focal };

std::string to_string(LossKind kind);
LossKind loss_kind_from_string(const std::string& name);

struct LossConfig {
  LossKind kind = LossKind::sce;
  /// Focusing exponent; only used by the focal kinds.
  double gamma = 2.0;
  /// Per-class weights; only used by the weighted kinds.
  std::vector<double> class_weights;
  /// Rescale weights so the smallest is 1.
  bool normalize_weights = false;

  bool weighted() const { return kind == LossKind::weighted_sce || kind == LossKind::weighted_focal; }
  bool focal() const { return kind == LossKind::focal || kind == LossKind::weighted_focal; }

  /// Weights actually applied: all ones for unweighted kinds.
  std::vector<double> effective_weights(Index num_classes) const;
  double effective_gamma() const { return focal() ? gamma : 0.0; }

  void validate(Index num_classes) const;
  std::string label() const;
};

/// Per-pixel class labels and validity flags (batch x height x width, row-major).
struct PixelTargets {
  Index batch = 0, height = 0, width = 0;
  std::vector<std::int32_t> labels;
  /// 0 marks occluded or unlabeled pixels.
  std::vector<std::uint8_t> valid;

  PixelTargets() = default;
  PixelTargets(Index batch_, Index height_, Index width_)
      : batch(batch_), height(height_), width(width_),
        labels(static_cast<std::size_t>(batch_ * height_ * width_), 0),
        valid(static_cast<std::size_t>(batch_ * height_ * width_), 1) {}

  Index pixels() const { return batch * height * width; }
  Index valid_count() const;
  void check(Index num_classes) const;
};

class NoValidPixelsError : public std::invalid_argument {
 public:
  NoValidPixelsError() : std::invalid_argument("compute_loss: no valid pixels") {}
};

inline constexpr double kProbabilityClamp = 1e-7;

/// -w * (1 - p)^gamma * log(p) with p clamped to [kProbabilityClamp, 1 - kProbabilityClamp].
inline double pixel_loss(double prob_true, double weight, double gamma) {
  const double p = std::clamp(prob_true, kProbabilityClamp, 1.0 - kProbabilityClamp);
  return -weight * std::pow(1.0 - p, gamma) * std::log(p);
}

/// Derivative of pixel_loss with respect to the (unclamped) true-class probability.
inline double pixel_loss_derivative(double prob_true, double weight, double gamma) {
  if (prob_true < kProbabilityClamp || prob_true > 1.0 - kProbabilityClamp) return 0.0;
  const double p = prob_true;
  double d = -std::pow(1.0 - p, gamma) / p;
  if (gamma != 0.0) d += gamma * std::pow(1.0 - p, gamma - 1.0) * std::log(p);
  return weight * d;
}

template <typename Scalar>
struct LossResult {
  Scalar loss = 0;
  Tensor<Scalar> grad_logits;
  Index valid_pixels = 0;
};

/// Mean of the per-pixel loss over valid pixels, and its gradient w.r.t. the logits.
/// Only the true-class term is non-zero since targets are one-hot.
template <typename Scalar>
LossResult<Scalar> compute_loss(const Tensor<Scalar>& logits, const PixelTargets& targets,
                                const LossConfig& config) {
  require_rank4(logits, "compute_loss");
  const Index classes = logits.dim(1);
  config.validate(classes);
  if (targets.batch != logits.dim(0) || targets.height != logits.dim(2) ||
      targets.width != logits.dim(3)) {
    throw ShapeError("compute_loss: targets " +
                     shape_string({targets.batch, targets.height, targets.width}) +
                     " do not match logits " + shape_string(logits.dims()));
  }
  targets.check(classes);
  const Index valid = targets.valid_count();
  if (valid == 0) throw NoValidPixelsError();

  const std::vector<double> weights = config.effective_weights(classes);
  const double gamma = config.effective_gamma();
  const Index plane = logits.dim(2) * logits.dim(3);

  LossResult<Scalar> result;
  result.valid_pixels = valid;
  result.grad_logits = Tensor<Scalar>(logits.dims());
  double total = 0.0;
  Eigen::VectorXd probs(classes), g(classes);
  for (Index n = 0; n < logits.dim(0); ++n) {
    const auto z = logits.item(n);
    auto grad = result.grad_logits.item(n);
    for (Index px = 0; px < plane; ++px) {
      const auto at = static_cast<std::size_t>(n * plane + px);
      if (!targets.valid[at]) continue;
      const Index label = targets.labels[at];
      probs = z.col(px).template cast<double>();
      probs = (probs.array() - probs.maxCoeff()).exp().matrix();
      probs /= probs.sum();
      const double p = probs[label];
      const double w = weights[static_cast<std::size_t>(label)];
      total += pixel_loss(p, w, gamma);
      // d p_t / d z_k = p_t * (delta_tk - p_k)
      const double scale = pixel_loss_derivative(p, w, gamma) * p / static_cast<double>(valid);
      g = -scale * probs;
      g[label] += scale;
      grad.col(px) = g.cast<Scalar>();
    }
  }
  result.loss = static_cast<Scalar>(total / static_cast<double>(valid));
  if (!std::isfinite(static_cast<double>(result.loss))) throw NumericalError("compute_loss: non-finite loss");
  return result;
}

/// Inverse-frequency weights: w_c proportional to 1 / max(freq_c, floor), rescaled so min(w) = 1.
std::vector<double> class_weights_from_frequencies(std::span<const double> label_histogram,
                                                   double floor);

}  // namespace useg
