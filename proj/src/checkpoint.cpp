#include "useg/checkpoint.hpp"

#include <json.hpp>

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <vector>

namespace useg {
namespace {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes little-endian");

constexpr char kMagic[4] = {'U', 'S', 'E', 'G'};

const std::string kParamPrefix = "param/";
const std::string kMeanPrefix = "bn_mean/";
const std::string kVarPrefix = "bn_var/";
const std::string kFirstPrefix = "adam_m/";
const std::string kSecondPrefix = "adam_v/";

class Writer {
 public:
  template <typename T>
  void put(T value) {
    const auto* bytes = reinterpret_cast<const char*>(&value);
    buffer_.insert(buffer_.end(), bytes, bytes + sizeof(T));
  }
  void put_bytes(const std::string& s) { buffer_.insert(buffer_.end(), s.begin(), s.end()); }

  void put_tensor(const std::string& name, const Tensor<double>& t) {
    put(static_cast<std::uint32_t>(name.size()));
    put_bytes(name);
    put(static_cast<std::uint8_t>(t.rank()));
    for (Index d : t.dims()) put(static_cast<std::uint32_t>(d));
    for (Index i = 0; i < t.size(); ++i) put(static_cast<float>(t[i]));
  }

  const std::vector<char>& bytes() const { return buffer_; }

 private:
  std::vector<char> buffer_;
};

class Reader {
 public:
  explicit Reader(std::vector<char> bytes) : bytes_(std::move(bytes)) {}

  template <typename T>
  T get() {
    need(sizeof(T));
    T value;
    std::memcpy(&value, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return value;
  }

  std::string get_string(std::size_t length) {
    need(length);
    std::string s(bytes_.data() + pos_, length);
    pos_ += length;
    return s;
  }

  std::pair<std::string, Tensor<double>> get_tensor() {
    const auto name_length = get<std::uint32_t>();
    std::string name = get_string(name_length);
    const auto rank = get<std::uint8_t>();
    if (rank == 0) throw CheckpointError(CheckpointErrc::inconsistent, "record " + name + " has rank 0");
    Shape dims;
    for (std::uint8_t i = 0; i < rank; ++i) {
      const auto d = get<std::uint32_t>();
      if (d == 0) throw CheckpointError(CheckpointErrc::inconsistent, "record " + name + " has a zero dim");
      dims.push_back(static_cast<Index>(d));
    }
    const Index count = shape_size(dims);
    if (static_cast<std::size_t>(count) > remaining() / sizeof(float)) {
      throw CheckpointError(CheckpointErrc::truncated, "checkpoint truncated in record " + name);
    }
    Tensor<double> t(dims);
    for (Index i = 0; i < count; ++i) t[i] = static_cast<double>(get<float>());
    return {std::move(name), std::move(t)};
  }

  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  void need(std::size_t n) const {
    if (remaining() < n) throw CheckpointError(CheckpointErrc::truncated, "checkpoint truncated");
  }

  std::vector<char> bytes_;
  std::size_t pos_ = 0;
};

nlohmann::json config_to_json(const UNetConfig& c) {
  return {{"in_channels", c.in_channels}, {"num_classes", c.num_classes},
          {"base_features", c.base_features}, {"depth", c.depth},
          {"bn_momentum", c.bn_momentum}, {"bn_eps", c.bn_eps}};
}

UNetConfig config_from_json(const nlohmann::json& j) {
  UNetConfig c;
  c.in_channels = j.at("in_channels").get<Index>();
  c.num_classes = j.at("num_classes").get<Index>();
  c.base_features = j.at("base_features").get<Index>();
  c.depth = j.at("depth").get<Index>();
  c.bn_momentum = j.at("bn_momentum").get<double>();
  c.bn_eps = j.at("bn_eps").get<double>();
  return c;
}

void narrow(Tensor<double>& t) {
  t.values() = t.values().cast<float>().cast<double>();
}

bool starts_with(const std::string& s, const std::string& prefix) {
  return s.compare(0, prefix.size(), prefix) == 0;
}

}  // namespace

Checkpoint make_checkpoint(const UNet<double>& model, const AdamState* optimizer,
                           std::int64_t epoch, double eval_dsc) {
  Checkpoint ckpt;
  ckpt.config = model.config();
  ckpt.params = model.params();
  ckpt.running_stats = model.batch_norm_states();
  if (optimizer != nullptr) ckpt.optimizer_state = *optimizer;
  ckpt.epoch = epoch;
  ckpt.eval_dsc = eval_dsc;
  return ckpt;
}

UNet<double> model_from_checkpoint(const Checkpoint& checkpoint) {
  return UNet<double>::from_parts(checkpoint.config, checkpoint.params, checkpoint.running_stats);
}

void narrow_to_storage(Checkpoint& checkpoint) {
  for (auto& [name, t] : checkpoint.params) narrow(t);
  for (auto& [name, s] : checkpoint.running_stats) {
    narrow(s.running_mean);
    narrow(s.running_var);
  }
  if (checkpoint.optimizer_state) {
    for (auto& [name, t] : checkpoint.optimizer_state->first_moment) narrow(t);
    for (auto& [name, t] : checkpoint.optimizer_state->second_moment) narrow(t);
  }
}

void narrow_to_storage(UNet<double>& model) {
  for (auto& [name, t] : model.params()) narrow(t);
  for (auto& [name, s] : model.batch_norm_states()) {
    narrow(s.running_mean);
    narrow(s.running_var);
  }
}

void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path) {
  nlohmann::json meta;
  meta["config"] = config_to_json(checkpoint.config);
  meta["epoch"] = checkpoint.epoch;
  meta["eval_dsc"] = checkpoint.eval_dsc;
  nlohmann::json batches = nlohmann::json::object();
  for (const auto& [name, s] : checkpoint.running_stats) batches[name] = s.num_batches;
  meta["bn_batches"] = batches;
  if (checkpoint.optimizer_state) meta["adam_step"] = checkpoint.optimizer_state->step;
  const std::string meta_text = meta.dump();

  std::uint32_t records = static_cast<std::uint32_t>(checkpoint.params.size() +
                                                     2 * checkpoint.running_stats.size());
  if (checkpoint.optimizer_state) {
    records += static_cast<std::uint32_t>(checkpoint.optimizer_state->first_moment.size() +
                                          checkpoint.optimizer_state->second_moment.size());
  }

  Writer w;
  w.put_bytes(std::string(kMagic, 4));
  w.put(kCheckpointVersion);
  w.put(static_cast<std::uint32_t>(meta_text.size()));
  w.put_bytes(meta_text);
  w.put(records);
  for (const auto& [name, t] : checkpoint.params) w.put_tensor(kParamPrefix + name, t);
  for (const auto& [name, s] : checkpoint.running_stats) {
    w.put_tensor(kMeanPrefix + name, s.running_mean);
    w.put_tensor(kVarPrefix + name, s.running_var);
  }
  if (checkpoint.optimizer_state) {
    for (const auto& [name, t] : checkpoint.optimizer_state->first_moment) {
      w.put_tensor(kFirstPrefix + name, t);
    }
    for (const auto& [name, t] : checkpoint.optimizer_state->second_moment) {
      w.put_tensor(kSecondPrefix + name, t);
    }
  }

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw CheckpointError(CheckpointErrc::io, "cannot open " + path.string() + " for writing");
  out.write(w.bytes().data(), static_cast<std::streamsize>(w.bytes().size()));
  if (!out) throw CheckpointError(CheckpointErrc::io, "failed writing " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError(CheckpointErrc::io, "cannot open " + path.string());
  Reader r(std::vector<char>(std::istreambuf_iterator<char>(in), {}));

  if (r.remaining() < 4 || r.get_string(4) != std::string(kMagic, 4)) {
    throw CheckpointError(CheckpointErrc::bad_magic, path.string() + ": bad magic");
  }
  const auto version = r.get<std::uint32_t>();
  if (version != kCheckpointVersion) {
    throw CheckpointError(CheckpointErrc::version_mismatch,
                          path.string() + ": version " + std::to_string(version) + ", expected " +
                              std::to_string(kCheckpointVersion));
  }
  const auto meta_length = r.get<std::uint32_t>();
  nlohmann::json meta;
  try {
    meta = nlohmann::json::parse(r.get_string(meta_length));
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(CheckpointErrc::inconsistent, path.string() + ": bad metadata: " + e.what());
  }

  Checkpoint ckpt;
  try {
    ckpt.config = config_from_json(meta.at("config"));
    ckpt.config.validate();
    ckpt.epoch = meta.at("epoch").get<std::int64_t>();
    ckpt.eval_dsc = meta.at("eval_dsc").get<double>();
    if (meta.contains("adam_step")) {
      ckpt.optimizer_state.emplace();
      ckpt.optimizer_state->step = meta.at("adam_step").get<std::int64_t>();
    }
  } catch (const std::exception& e) {
    throw CheckpointError(CheckpointErrc::inconsistent, path.string() + ": bad metadata: " + e.what());
  }

  const auto records = r.get<std::uint32_t>();
  for (std::uint32_t i = 0; i < records; ++i) {
    auto [name, tensor] = r.get_tensor();
    bool inserted = false;
    if (starts_with(name, kParamPrefix)) {
      inserted = ckpt.params.emplace(name.substr(kParamPrefix.size()), std::move(tensor)).second;
    } else if (starts_with(name, kMeanPrefix)) {
      auto& state = ckpt.running_stats[name.substr(kMeanPrefix.size())];
      inserted = state.running_mean.empty();
      state.running_mean = std::move(tensor);
    } else if (starts_with(name, kVarPrefix)) {
      auto& state = ckpt.running_stats[name.substr(kVarPrefix.size())];
      inserted = state.running_var.empty();
      state.running_var = std::move(tensor);
    } else if (ckpt.optimizer_state && starts_with(name, kFirstPrefix)) {
      inserted = ckpt.optimizer_state->first_moment
                     .emplace(name.substr(kFirstPrefix.size()), std::move(tensor))
                     .second;
    } else if (ckpt.optimizer_state && starts_with(name, kSecondPrefix)) {
      inserted = ckpt.optimizer_state->second_moment
                     .emplace(name.substr(kSecondPrefix.size()), std::move(tensor))
                     .second;
    }
    if (!inserted) {
      throw CheckpointError(CheckpointErrc::inconsistent,
                            path.string() + ": unexpected or duplicate record " + name);
    }
  }
  if (r.remaining() != 0) {
    throw CheckpointError(CheckpointErrc::inconsistent,
                          path.string() + ": " + std::to_string(r.remaining()) +
                              " trailing bytes after " + std::to_string(records) + " records");
  }

  try {
    const auto& batches = meta.at("bn_batches");
    for (auto& [name, state] : ckpt.running_stats) {
      if (state.running_mean.empty() || state.running_var.empty()) {
        throw CheckpointError(CheckpointErrc::inconsistent, "incomplete running stats for " + name);
      }
      state.num_batches = batches.at(name).get<std::int64_t>();
    }
    // Validates slot set and every dimension against the architecture.
    const UNet<double> model = model_from_checkpoint(ckpt);
    if (ckpt.optimizer_state) {
      for (const auto* moments :
           {&ckpt.optimizer_state->first_moment, &ckpt.optimizer_state->second_moment}) {
        for (const auto& [name, t] : *moments) {
          auto it = model.params().find(name);
          if (it == model.params().end() || it->second.dims() != t.dims()) {
            throw CheckpointError(CheckpointErrc::inconsistent, "optimizer slot " + name +
                                                                    " does not match the model");
          }
        }
      }
    }
  } catch (const CheckpointError&) {
    throw;
  } catch (const std::exception& e) {
    throw CheckpointError(CheckpointErrc::inconsistent, path.string() + ": " + e.what());
  }
  return ckpt;
}

}  // namespace useg
