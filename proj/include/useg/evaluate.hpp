#pragma once

#include "useg/dataset.hpp"
#include "useg/metrics.hpp"
#include "useg/unet.hpp"

#include <cstdint>
#include <vector>

namespace useg {

/// Per-pixel argmax over channels (lowest index wins ties); batch x height x width.
template <typename Scalar>
std::vector<std::int32_t> predict_labels(const Tensor<Scalar>& logits) {
  require_rank4(logits, "predict_labels");
  const Index plane = logits.dim(2) * logits.dim(3);
  std::vector<std::int32_t> labels(static_cast<std::size_t>(logits.dim(0) * plane));
  for (Index n = 0; n < logits.dim(0); ++n) {
    const auto z = logits.item(n);
    for (Index p = 0; p < plane; ++p) {
      Index best = 0;
      for (Index c = 1; c < z.rows(); ++c) {
        if (z(c, p) > z(best, p)) best = c;
      }
      labels[static_cast<std::size_t>(n * plane + p)] = static_cast<std::int32_t>(best);
    }
  }
  return labels;
}

/// Confusion counts of one sample under eval-mode inference.
ConfusionCounts evaluate_sample(const UNet<double>& model, const LabeledSample& sample, int target_class);

/// Pooled (micro) metrics over the whole set plus per-class pixel accuracy.
MetricsReport evaluate(const UNet<double>& model, const Dataset& data, const MetricsConfig& config);

}  // namespace useg
