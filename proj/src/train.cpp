#include "useg/train.hpp"

#include "useg/evaluate.hpp"
#include "useg/seeding.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <numeric>
#include <sstream>

namespace useg {

void TrainConfig::validate(Index num_classes) const {
  if (batch_size < 1) throw std::invalid_argument("TrainConfig: batch_size must be >= 1");
  if (max_epochs < 1) throw std::invalid_argument("TrainConfig: max_epochs must be >= 1");
  if (early_stop_patience < 1) throw std::invalid_argument("TrainConfig: early_stop_patience must be >= 1");
  if (eval_every < 1) throw std::invalid_argument("TrainConfig: eval_every must be >= 1");
  loss.validate(num_classes);
  adam.validate();
  if (augment_enabled) augment.validate();
}

std::string TrainHistory::to_csv(bool include_wall_time) const {
  auto value = [](const std::optional<double>& v) {
    if (!v) return std::string("undefined");
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", *v);
    return std::string(buf);
  };
  std::ostringstream out;
  out << "epoch,train_loss,eval_dsc,eval_sensitivity,eval_specificity,eval_total_error";
  if (include_wall_time) out << ",wall_seconds";
  out << '\n';
  for (const auto& r : epochs) {
    out << r.epoch << ',' << value(r.train_loss);
    if (r.eval) {
      out << ',' << value(r.eval->dsc) << ',' << value(r.eval->sensitivity) << ','
          << value(r.eval->specificity) << ',' << value(r.eval->total_error);
    } else {
      out << ",,,,";
    }
    if (include_wall_time) out << ',' << r.wall_seconds;
    out << '\n';
  }
  return out.str();
}

std::optional<double> TrainHistory::best_dsc() const {
  std::optional<double> best;
  for (const auto& r : epochs) {
    if (r.eval) {
      const double d = r.eval->dsc.value_or(0.0);
      if (!best || d > *best) best = d;
    }
  }
  return best;
}

std::uint64_t init_seed_for(std::uint64_t run_seed) { return derive_seed({run_seed, 0x696e6974ULL}); }
std::uint64_t augment_seed_for(std::uint64_t run_seed) { return derive_seed({run_seed, 0x61756775ULL}); }

TrainResult train(UNet<double>& model, const Dataset& train_set, const Dataset& eval_set,
                  const TrainConfig& config, const MetricsConfig& metrics,
                  const EpochCallback& on_epoch) {
  if (train_set.empty() || eval_set.empty()) throw std::invalid_argument("train: empty train or eval set");
  config.validate(model.config().num_classes);
  metrics.validate(model.config().num_classes);

  const auto start = std::chrono::steady_clock::now();
  AdamState adam;
  TrainResult result;
  double best_dsc = -1.0;
  Index stale_evaluations = 0;
  std::vector<std::size_t> order(train_set.size());

  for (Index epoch = 1; epoch <= config.max_epochs; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    auto shuffle_rng = make_rng({config.seed, 0x73687566ULL, static_cast<std::uint64_t>(epoch)});
    std::shuffle(order.begin(), order.end(), shuffle_rng);

    double loss_sum = 0.0;
    Index batches = 0;
    for (std::size_t first = 0; first < order.size(); first += static_cast<std::size_t>(config.batch_size)) {
      const std::size_t last = std::min(order.size(), first + static_cast<std::size_t>(config.batch_size));
      std::vector<LabeledSample> augmented;
      std::vector<const LabeledSample*> members;
      augmented.reserve(last - first);
      for (std::size_t k = first; k < last; ++k) {
        const LabeledSample& sample = train_set[order[k]];
        if (config.augment_enabled) {
          const auto draw = derive_seed({config.seed, static_cast<std::uint64_t>(epoch), order[k]});
          augmented.push_back(augment(sample, config.augment, draw));
        } else {
          augmented.push_back(sample);
        }
      }
      for (const auto& s : augmented) members.push_back(&s);
      const Batch batch = make_batch(members);
      // Augmentation can leave a batch without labeled pixels; there is nothing to learn from it.
      if (batch.targets.valid_count() == 0) continue;

      try {
        UNet<double>::Cache cache;
        const Tensor<double> logits = model.forward(batch.images, Mode::train, &cache);
        const auto loss = compute_loss(logits, batch.targets, config.loss);
        const auto grads = model.backward(cache, loss.grad_logits);
        for (const auto& [name, g] : grads) {
          if (!g.all_finite()) throw NumericalError("non-finite gradient for " + name);
        }
        adam_step(model.params(), grads, adam, config.adam);
        loss_sum += loss.loss;
      } catch (const NumericalError& e) {
        throw TrainingDiverged(epoch, batches, e.what());
      }
      ++batches;
    }

    EpochRecord record;
    record.epoch = epoch;
    record.train_loss = batches > 0 ? loss_sum / static_cast<double>(batches) : 0.0;

    const bool evaluate_now = epoch % config.eval_every == 0 || epoch == config.max_epochs;
    bool stop = false;
    if (evaluate_now) {
      // Evaluate exactly what a saved checkpoint would contain.
      UNet<double> snapshot = model;
      narrow_to_storage(snapshot);
      record.eval = evaluate(snapshot, eval_set, metrics);
      const double dsc_value = record.eval->dsc.value_or(0.0);
      if (dsc_value > best_dsc) {
        best_dsc = dsc_value;
        stale_evaluations = 0;
        AdamState stored = adam;
        result.best = make_checkpoint(snapshot, &stored, epoch, dsc_value);
        narrow_to_storage(result.best);
      } else if (++stale_evaluations >= config.early_stop_patience) {
        stop = true;
      }
    }
    record.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    result.history.epochs.push_back(record);
    result.stopped_epoch = epoch;
    if (on_epoch) on_epoch(record);
    if (stop) break;
  }
  return result;
}

}  // namespace useg
