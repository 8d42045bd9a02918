#pragma once

#include "useg/adam.hpp"
#include "useg/augment.hpp"
#include "useg/checkpoint.hpp"
#include "useg/dataset.hpp"
#include "useg/loss.hpp"
#include "useg/metrics.hpp"

#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace useg {

struct TrainConfig {
  Index batch_size = 2;
  Index max_epochs = 1800;
  /// Stop after this many evaluations without a DSC improvement.
  Index early_stop_patience = 15;
  Index eval_every = 10;
  LossConfig loss;
  AdamHyper adam;
  bool augment_enabled = true;
  AugmentConfig augment;
  std::uint64_t seed = 0;

  void validate(Index num_classes) const;
};

struct EpochRecord {
  Index epoch = 0;
  double train_loss = 0.0;
  /// Present on evaluation epochs.
  std::optional<MetricsReport> eval;
  double wall_seconds = 0.0;
};

struct TrainHistory {
  std::vector<EpochRecord> epochs;

  /// Evaluation epochs only matter for early stopping; wall time is omitted unless requested
  /// so that identical runs produce identical files.
  std::string to_csv(bool include_wall_time = false) const;
  std::optional<double> best_dsc() const;
};

struct TrainResult {
  /// Highest eval-DSC snapshot, at checkpoint (32-bit) precision.
  Checkpoint best;
  TrainHistory history;
  Index stopped_epoch = 0;
};

class TrainingDiverged : public std::runtime_error {
 public:
  TrainingDiverged(Index epoch, Index batch, const std::string& what)
      : std::runtime_error("training diverged at epoch " + std::to_string(epoch) + ", batch " +
                           std::to_string(batch) + ": " + what),
        epoch_(epoch), batch_(batch) {}
  Index epoch() const noexcept { return epoch_; }
  Index batch() const noexcept { return batch_; }

 private:
  Index epoch_, batch_;
};

/// Independent streams derived from one run seed: model initialization and augmentation.
std::uint64_t init_seed_for(std::uint64_t run_seed);
std::uint64_t augment_seed_for(std::uint64_t run_seed);

using EpochCallback = std::function<void(const EpochRecord&)>;

/// Mini-batch Adam training with seeded shuffling and augmentation; evaluates every
/// eval_every epochs (and at the last epoch) and keeps the best-DSC checkpoint.
TrainResult train(UNet<double>& model, const Dataset& train_set, const Dataset& eval_set,
                  const TrainConfig& config, const MetricsConfig& metrics,
                  const EpochCallback& on_epoch = {});

}  // namespace useg
