#pragma once

#include "useg/dataset.hpp"
#include "useg/metrics.hpp"
#include "useg/train.hpp"
#include "useg/unet.hpp"

#include <filesystem>
#include <stdexcept>
#include <string>

namespace useg {

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Everything a CLI run needs. Parsing is strict (unknown keys are errors) and the echoed
/// form always lists every field, defaults included.
struct RunConfig {
  /// Drives model initialization, shuffling and augmentation; data has its own seed.
  std::uint64_t seed = 0;
  UNetConfig model;
  TrainConfig train;
  DatasetConfig data;
  std::string target_class = "corroded";
  double alpha = 10.0;
  std::filesystem::path data_dir;
  std::filesystem::path checkpoint;

  MetricsConfig metrics() const;
  /// Applies cross-section consistency (class count, seeds) and validates every section.
  void finalize();
};

RunConfig parse_run_config(const std::string& json_text);
RunConfig load_run_config(const std::filesystem::path& path);
std::string to_json(const RunConfig& config);

}  // namespace useg
