#pragma once

#include "useg/layers.hpp"

#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <random>
#include <set>
#include <string>
#include <vector>

namespace useg {

/// Architecture of the reduced-width U-Net.
struct UNetConfig {
  Index in_channels = 3;
  Index num_classes = 6;
  /// Width of the first encoder level; level l has base_features * 2^l channels.
  Index base_features = 8;
  /// Number of pooling levels.
  Index depth = 4;
  double bn_momentum = 0.1;
  double bn_eps = 1e-5;

  Index width(Index level) const { return base_features << level; }
  Index spatial_multiple() const { return Index{1} << depth; }

  void validate() const {
    if (in_channels < 1) throw std::invalid_argument("UNetConfig: in_channels must be >= 1");
    if (num_classes < 2) throw std::invalid_argument("UNetConfig: num_classes must be >= 2");
    if (base_features < 1) throw std::invalid_argument("UNetConfig: base_features must be >= 1");
    if (depth < 1 || depth > 16) throw std::invalid_argument("UNetConfig: depth must be in 1..16");
    if (!(bn_momentum >= 0 && bn_momentum <= 1)) {
      throw std::invalid_argument("UNetConfig: bn_momentum must be in [0, 1]");
    }
    if (!(bn_eps > 0)) throw std::invalid_argument("UNetConfig: bn_eps must be positive");
  }

  bool operator==(const UNetConfig&) const = default;
};

/// Encoder blocks of two 3x3 conv+BN+ReLU units followed by 2x2 max-pooling, a bottleneck
/// block, decoder blocks of 2x2 transposed conv + skip concat + two units, and a 1x1 head.
template <typename Scalar>
class UNet {
 public:
  using ParamMap = std::map<std::string, Tensor<Scalar>>;
  using StateMap = std::map<std::string, BatchNormState<Scalar>>;

  struct UnitCache {
    Tensor<Scalar> input;
    BatchNormCache<Scalar> norm;
    Tensor<Scalar> pre_activation;
  };
  using BlockCache = std::array<UnitCache, 2>;
  struct PoolCache {
    Shape input_dims;
    std::vector<Index> argmax;
  };
  /// Activations recorded by forward() for backward().
  struct Cache {
    std::vector<BlockCache> encoder;
    std::vector<PoolCache> pools;
    BlockCache bottleneck;
    std::vector<Tensor<Scalar>> up_inputs;
    std::vector<BlockCache> decoder;
    Tensor<Scalar> head_input;
  };

  /// Builds the network with He-normal kernels, zero biases and betas, unit gammas.
  UNet(const UNetConfig& config, std::uint64_t seed) : config_(config) {
    config_.validate();
    std::mt19937_64 rng(seed);
    for (Index level = 0; level < config_.depth; ++level) {
      const Index in = level == 0 ? config_.in_channels : config_.width(level - 1);
      add_block(block_name("enc", level), in, config_.width(level), rng);
    }
    add_block("mid", config_.width(config_.depth - 1), config_.width(config_.depth), rng);
    for (Index level = config_.depth - 1; level >= 0; --level) {
      const std::string name = block_name("dec", level);
      const Index wide = config_.width(level + 1), narrow = config_.width(level);
      add_param(name + ".up.kernel",
                Tensor<Scalar>::random_normal({wide, narrow, 2, 2}, rng,
                                              static_cast<Scalar>(std::sqrt(2.0 / wide))));
      add_param(name + ".up.bias", Tensor<Scalar>({narrow}));
      add_block(name, 2 * narrow, narrow, rng);
    }
    add_conv("head", config_.width(0), config_.num_classes, 1, rng);
  }

  /// Reassembles a model from stored tensors; every slot must be present exactly once.
  static UNet from_parts(const UNetConfig& config, ParamMap params, StateMap states) {
    UNet model(config, 0);
    if (!same_keys(model.params_, params) || !same_keys(model.states_, states)) {
      throw ShapeError("UNet: parameter slots do not match the architecture");
    }
    for (const auto& [name, tensor] : params) {
      if (tensor.dims() != model.params_.at(name).dims()) {
        throw ShapeError("UNet: parameter " + name + " has dims " + shape_string(tensor.dims()) +
                         ", expected " + shape_string(model.params_.at(name).dims()));
      }
    }
    for (const auto& [name, state] : states) {
      const Index channels = model.states_.at(name).running_mean.size();
      if (state.running_mean.size() != channels || state.running_var.size() != channels) {
        throw ShapeError("UNet: running stats " + name + " have the wrong length");
      }
    }
    model.params_ = std::move(params);
    model.states_ = std::move(states);
    return model;
  }

  const UNetConfig& config() const noexcept { return config_; }
  ParamMap& params() noexcept { return params_; }
  const ParamMap& params() const noexcept { return params_; }
  StateMap& batch_norm_states() noexcept { return states_; }
  const StateMap& batch_norm_states() const noexcept { return states_; }

  Index parameter_count() const {
    Index total = 0;
    for (const auto& [name, tensor] : params_) total += tensor.size();
    return total;
  }

  /// When false, train-mode forward passes leave the running statistics untouched.
  void set_update_running_stats(bool update) noexcept { update_stats_ = update; }

  /// Logits (batch x num_classes x H x W). Train mode uses batch statistics and updates the
  /// running estimates; pass `cache` to enable backward().
  Tensor<Scalar> forward(const Tensor<Scalar>& batch, Mode mode, Cache* cache = nullptr) {
    return run(batch, mode, states_, update_stats_ && mode == Mode::train, cache);
  }

  /// Eval-mode forward; does not modify the model.
  Tensor<Scalar> predict(const Tensor<Scalar>& batch) const {
    StateMap states = states_;
    return run(batch, Mode::eval, states, false, nullptr);
  }

  /// Parameter gradients of a scalar whose gradient w.r.t. the logits is `grad_logits`.
  ParamMap backward(const Cache& cache, const Tensor<Scalar>& grad_logits) const {
    ParamMap grads;
    auto head = conv2d_backward(cache.head_input, params_.at("head.kernel"), grad_logits, 1, 0);
    store(grads, "head", head);
    Tensor<Scalar> grad = std::move(head.grad_input);

    std::vector<Tensor<Scalar>> skip_grads(static_cast<std::size_t>(config_.depth));
    for (Index level = 0; level < config_.depth; ++level) {
      const auto idx = static_cast<std::size_t>(config_.depth - 1 - level);
      const std::string name = block_name("dec", level);
      grad = block_backward(name, cache.decoder[idx], std::move(grad), grads);
      auto [from_up, from_skip] = split_channels(grad, config_.width(level));
      skip_grads[static_cast<std::size_t>(level)] = std::move(from_skip);
      auto up = upconv2d_backward(cache.up_inputs[idx], params_.at(name + ".up.kernel"), from_up, 2);
      store(grads, name + ".up", up);
      grad = std::move(up.grad_input);
    }
    grad = block_backward("mid", cache.bottleneck, std::move(grad), grads);
    for (Index level = config_.depth - 1; level >= 0; --level) {
      const auto l = static_cast<std::size_t>(level);
      const auto& pool = cache.pools[l];
      Tensor<Scalar> g = maxpool2d_backward(pool.input_dims, pool.argmax, grad);
      g.values() += skip_grads[l].values();
      grad = block_backward(block_name("enc", level), cache.encoder[l], std::move(g), grads);
    }
    return grads;
  }

  template <typename Other>
  UNet<Other> cast() const {
    typename UNet<Other>::ParamMap params;
    for (const auto& [name, t] : params_) params.emplace(name, t.template cast<Other>());
    typename UNet<Other>::StateMap states;
    for (const auto& [name, s] : states_) {
      BatchNormState<Other> converted;
      converted.running_mean = s.running_mean.template cast<Other>();
      converted.running_var = s.running_var.template cast<Other>();
      converted.num_batches = s.num_batches;
      states.emplace(name, std::move(converted));
    }
    return UNet<Other>::from_parts(config_, std::move(params), std::move(states));
  }

  static std::string block_name(const char* prefix, Index level) {
    return std::string(prefix) + std::to_string(level);
  }

 private:
  template <typename Map>
  static bool same_keys(const Map& a, const Map& b) {
    if (a.size() != b.size()) return false;
    for (const auto& [key, value] : a) {
      if (!b.contains(key)) return false;
    }
    return true;
  }

  template <typename Rng>
  void add_conv(const std::string& name, Index in, Index out, Index extent, Rng& rng) {
    const double fan_in = static_cast<double>(in * extent * extent);
    add_param(name + ".kernel",
              Tensor<Scalar>::random_normal({out, in, extent, extent}, rng,
                                            static_cast<Scalar>(std::sqrt(2.0 / fan_in))));
    add_param(name + ".bias", Tensor<Scalar>({out}));
  }

  template <typename Rng>
  void add_block(const std::string& name, Index in, Index out, Rng& rng) {
    for (int unit = 1; unit <= 2; ++unit) {
      const std::string suffix = std::to_string(unit);
      add_conv(name + ".conv" + suffix, unit == 1 ? in : out, out, 3, rng);
      add_param(name + ".bn" + suffix + ".gamma", Tensor<Scalar>::constant({out}, Scalar(1)));
      add_param(name + ".bn" + suffix + ".beta", Tensor<Scalar>({out}));
      states_.emplace(name + ".bn" + suffix, BatchNormState<Scalar>(out));
    }
  }

  void add_param(const std::string& name, Tensor<Scalar> value) {
    params_.insert_or_assign(name, std::move(value));
  }

  static void store(ParamMap& grads, const std::string& prefix, LayerGrads<Scalar>& layer) {
    for (auto& [name, g] : layer.grad_params) grads.insert_or_assign(prefix + "." + name, std::move(g));
  }

  Tensor<Scalar> block_forward(const std::string& name, Tensor<Scalar> x, Mode mode,
                               StateMap& states, bool update, BlockCache* cache) const {
    for (int unit = 1; unit <= 2; ++unit) {
      const std::string conv = name + ".conv" + std::to_string(unit);
      const std::string norm = name + ".bn" + std::to_string(unit);
      Tensor<Scalar> z = conv2d(x, params_.at(conv + ".kernel"), params_.at(conv + ".bias"), 1, 1);
      UnitCache* uc = cache != nullptr ? &(*cache)[static_cast<std::size_t>(unit - 1)] : nullptr;
      Tensor<Scalar> a = batchnorm2d(z, params_.at(norm + ".gamma"), params_.at(norm + ".beta"),
                                     states.at(norm), mode, static_cast<Scalar>(config_.bn_momentum),
                                     static_cast<Scalar>(config_.bn_eps),
                                     uc != nullptr ? &uc->norm : nullptr, update);
      Tensor<Scalar> y = relu(a);
      if (uc != nullptr) {
        uc->input = std::move(x);
        uc->pre_activation = std::move(a);
      }
      x = std::move(y);
    }
    return x;
  }

  Tensor<Scalar> block_backward(const std::string& name, const BlockCache& cache,
                                Tensor<Scalar> grad, ParamMap& grads) const {
    for (int unit = 2; unit >= 1; --unit) {
      const std::string conv = name + ".conv" + std::to_string(unit);
      const std::string norm = name + ".bn" + std::to_string(unit);
      const UnitCache& uc = cache[static_cast<std::size_t>(unit - 1)];
      grad = relu_backward(uc.pre_activation, grad);
      auto bn = batchnorm2d_backward(uc.norm, grad);
      store(grads, norm, bn);
      auto cv = conv2d_backward(uc.input, params_.at(conv + ".kernel"), bn.grad_input, 1, 1);
      store(grads, conv, cv);
      grad = std::move(cv.grad_input);
    }
    return grad;
  }

  Tensor<Scalar> run(const Tensor<Scalar>& batch, Mode mode, StateMap& states, bool update,
                     Cache* cache) const {
    require_rank4(batch, "UNet::forward");
    if (batch.dim(1) != config_.in_channels) {
      throw ShapeError("UNet::forward: input has " + std::to_string(batch.dim(1)) +
                       " channels, model expects " + std::to_string(config_.in_channels));
    }
    const Index multiple = config_.spatial_multiple();
    if (batch.dim(2) % multiple != 0 || batch.dim(3) % multiple != 0) {
      throw ShapeError("UNet::forward: spatial dims " + shape_string(batch.dims()) +
                       " not divisible by " + std::to_string(multiple));
    }
    const auto depth = static_cast<std::size_t>(config_.depth);
    if (cache != nullptr) {
      cache->encoder.assign(depth, {});
      cache->pools.assign(depth, {});
      cache->up_inputs.assign(depth, {});
      cache->decoder.assign(depth, {});
    }

    std::vector<Tensor<Scalar>> skips(depth);
    Tensor<Scalar> x = batch;
    for (std::size_t level = 0; level < depth; ++level) {
      skips[level] = block_forward(block_name("enc", static_cast<Index>(level)), std::move(x), mode,
                                   states, update, cache ? &cache->encoder[level] : nullptr);
      auto pooled = maxpool2d(skips[level], 2);
      if (cache != nullptr) cache->pools[level] = {skips[level].dims(), std::move(pooled.argmax)};
      x = std::move(pooled.output);
    }
    x = block_forward("mid", std::move(x), mode, states, update,
                      cache ? &cache->bottleneck : nullptr);
    for (Index level = config_.depth - 1; level >= 0; --level) {
      const auto idx = static_cast<std::size_t>(config_.depth - 1 - level);
      const std::string name = block_name("dec", level);
      Tensor<Scalar> up =
          upconv2d(x, params_.at(name + ".up.kernel"), params_.at(name + ".up.bias"), 2);
      if (cache != nullptr) cache->up_inputs[idx] = std::move(x);
      x = block_forward(name, concat_channels(up, skips[static_cast<std::size_t>(level)]), mode,
                        states, update, cache ? &cache->decoder[idx] : nullptr);
    }
    Tensor<Scalar> logits = conv2d(x, params_.at("head.kernel"), params_.at("head.bias"), 1, 0);
    if (cache != nullptr) cache->head_input = std::move(x);
    return logits;
  }

  UNetConfig config_;
  ParamMap params_;
  StateMap states_;
  bool update_stats_ = true;
};

}  // namespace useg
