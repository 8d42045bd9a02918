#pragma once

#include "useg/unet.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>

namespace useg {

/// Adam moment estimates keyed by parameter name, plus the step counter.
struct AdamState {
  std::map<std::string, Tensor<double>> first_moment;
  std::map<std::string, Tensor<double>> second_moment;
  std::int64_t step = 0;
};

/// Everything needed to restore a trained model.
struct Checkpoint {
  UNetConfig config;
  std::map<std::string, Tensor<double>> params;
  std::map<std::string, BatchNormState<double>> running_stats;
  std::optional<AdamState> optimizer_state;
  std::int64_t epoch = 0;
  double eval_dsc = 0.0;
};

enum class CheckpointErrc { io, bad_magic, version_mismatch, truncated, inconsistent };

class CheckpointError : public std::runtime_error {
 public:
  CheckpointError(CheckpointErrc code, const std::string& message)
      : std::runtime_error(message), code_(code) {}
  CheckpointErrc code() const noexcept { return code_; }

 private:
  CheckpointErrc code_;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

Checkpoint make_checkpoint(const UNet<double>& model, const AdamState* optimizer,
                           std::int64_t epoch, double eval_dsc);
UNet<double> model_from_checkpoint(const Checkpoint& checkpoint);

/// Rounds every stored value to 32-bit precision, i.e. what a save/load round trip yields.
void narrow_to_storage(Checkpoint& checkpoint);
void narrow_to_storage(UNet<double>& model);

/// Little-endian layout: "USEG", u32 version, u32 metadata length, metadata JSON,
/// u32 record count, then per tensor: u32 name length, UTF-8 name, u8 rank, u32 dims,
/// raw float32 values.
void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace useg
