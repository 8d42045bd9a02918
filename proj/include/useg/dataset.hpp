#pragma once

#include "useg/clahe.hpp"
#include "useg/synth.hpp"

#include <filesystem>
#include <optional>
#include <vector>

namespace useg {

using Dataset = std::vector<LabeledSample>;

struct DatasetSplit {
  Dataset train;
  Dataset test;
};

struct DatasetConfig {
  SynthConfig synth;
  Index n_train = 38;
  Index n_test = 32;
  /// Applied to every generated image when set.
  std::optional<ClaheConfig> preprocess = ClaheConfig{};
};

/// Seed of sample `index` in `split` (0 = train, 1 = test); splits never share seeds.
std::uint64_t sample_seed(std::uint64_t base_seed, int split, Index index);

DatasetSplit build_dataset(const DatasetConfig& config);

/// Writes train/ and test/ PNG pairs plus manifest.json into `dir`.
void save_dataset(const DatasetSplit& data, const DatasetConfig& config, const std::filesystem::path& dir);
/// Loads a directory written by save_dataset (paths resolved against `dir`).
DatasetSplit load_dataset(const std::filesystem::path& dir);

}  // namespace useg
