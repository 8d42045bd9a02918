#include "useg/loss.hpp"

#include <algorithm>
#include <numeric>
#include <sstream>

namespace useg {

std::string to_string(LossKind kind) {
  switch (kind) {
    case LossKind::sce: return "sce";
    case LossKind::weighted_sce: return "w_sce";
    case LossKind::focal: return "focal";
    case LossKind::weighted_focal: return "w_focal";
  }
  return "unknown";
}

LossKind loss_kind_from_string(const std::string& name) {
  std::string key = name;
  std::transform(key.begin(), key.end(), key.begin(), [](unsigned char c) {
    return c == '-' ? '_' : static_cast<char>(std::tolower(c));
  });
  if (key == "sce") return LossKind::sce;
  if (key == "w_sce" || key == "weighted_sce") return LossKind::weighted_sce;
  if (key == "focal") return LossKind::focal;
  if (key == "w_focal" || key == "weighted_focal") return LossKind::weighted_focal;
  throw std::invalid_argument("unknown loss kind: " + name);
}

std::vector<double> LossConfig::effective_weights(Index num_classes) const {
  if (!weighted()) return std::vector<double>(static_cast<std::size_t>(num_classes), 1.0);
  std::vector<double> w = class_weights;
  if (normalize_weights) {
    const double smallest = *std::min_element(w.begin(), w.end());
    for (double& v : w) v /= smallest;
  }
  return w;
}

void LossConfig::validate(Index num_classes) const {
  if (!(gamma >= 0) || !std::isfinite(gamma)) {
    throw std::invalid_argument("LossConfig: gamma must be a finite value >= 0");
  }
  if (weighted()) {
    if (static_cast<Index>(class_weights.size()) != num_classes) {
      throw std::invalid_argument("LossConfig: " + std::to_string(class_weights.size()) +
                                  " class weights for " + std::to_string(num_classes) + " classes");
    }
    for (double w : class_weights) {
      if (!(w > 0) || !std::isfinite(w)) {
        throw std::invalid_argument("LossConfig: class weights must be positive");
      }
    }
  }
}

std::string LossConfig::label() const {
  std::ostringstream out;
  out << to_string(kind);
  if (focal()) out << "(g=" << gamma << ")";
  return out.str();
}

Index PixelTargets::valid_count() const {
  return std::count_if(valid.begin(), valid.end(), [](std::uint8_t v) { return v != 0; });
}

void PixelTargets::check(Index num_classes) const {
  const auto n = static_cast<std::size_t>(pixels());
  if (labels.size() != n || valid.size() != n) {
    throw ShapeError("PixelTargets: label/valid storage does not match dims");
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (valid[i] && (labels[i] < 0 || labels[i] >= num_classes)) {
      throw std::out_of_range("PixelTargets: label " + std::to_string(labels[i]) +
                              " out of range for " + std::to_string(num_classes) + " classes");
    }
  }
}

std::vector<double> class_weights_from_frequencies(std::span<const double> label_histogram,
                                                   double floor) {
  if (!(floor > 0)) throw std::invalid_argument("class_weights_from_frequencies: floor must be > 0");
  if (label_histogram.empty()) throw std::invalid_argument("class_weights_from_frequencies: empty histogram");
  double total = 0.0;
  for (double count : label_histogram) {
    if (!(count >= 0)) throw std::invalid_argument("class_weights_from_frequencies: negative count");
    total += count;
  }
  if (total <= 0) throw std::invalid_argument("class_weights_from_frequencies: all-zero histogram");
  std::vector<double> weights;
  weights.reserve(label_histogram.size());
  for (double count : label_histogram) weights.push_back(1.0 / std::max(count / total, floor));
  const double smallest = *std::min_element(weights.begin(), weights.end());
  for (double& w : weights) w /= smallest;
  return weights;
}

}  // namespace useg
