#include "useg/run_config.hpp"

#include "useg/variants.hpp"

#include <json.hpp>

#include <fstream>
#include <set>
#include <sstream>

namespace useg {
namespace {

using nlohmann::json;

// Reads an object field by field and rejects whatever it did not ask for.
class Section {
 public:
  Section(const json& node, std::string path) : node_(node), path_(std::move(path)) {
    if (!node_.is_object()) throw ConfigError(where() + " must be an object");
  }

  template <typename T>
  void get(const std::string& key, T& out) {
    known_.insert(key);
    const auto it = node_.find(key);
    if (it == node_.end()) return;
    try {
      out = it->template get<T>();
    } catch (const json::exception&) {
      throw ConfigError(where() + "." + key + " has the wrong type");
    }
  }

  bool has(const std::string& key) const { return node_.contains(key); }

  Section child(const std::string& key) {
    known_.insert(key);
    static const json empty = json::object();
    const auto it = node_.find(key);
    return Section(it == node_.end() ? empty : *it, path_ + "." + key);
  }

  const json* raw(const std::string& key) {
    known_.insert(key);
    const auto it = node_.find(key);
    return it == node_.end() ? nullptr : &*it;
  }

  std::string where() const { return path_; }

  void finish() const {
    for (const auto& [key, value] : node_.items()) {
      if (!known_.count(key)) throw ConfigError("unknown key " + path_ + "." + key);
    }
  }

 private:
  const json& node_;
  std::string path_;
  std::set<std::string> known_;
};

void read_model(Section s, UNetConfig& m) {
  s.get("in_channels", m.in_channels);
  s.get("num_classes", m.num_classes);
  s.get("base_features", m.base_features);
  s.get("depth", m.depth);
  s.get("bn_momentum", m.bn_momentum);
  s.get("bn_eps", m.bn_eps);
  s.finish();
}

void read_loss(Section s, LossConfig& loss) {
  std::string kind = to_string(loss.kind);
  s.get("kind", kind);
  try {
    loss.kind = loss_kind_from_string(kind);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(s.where() + ".kind: " + e.what());
  }
  s.get("gamma", loss.gamma);
  s.get("class_weights", loss.class_weights);
  s.get("normalize_weights", loss.normalize_weights);
  s.finish();
}

void read_augment(Section s, AugmentConfig& a, bool& enabled) {
  s.get("enabled", enabled);
  s.get("rotation_min_degrees", a.rotation_min_degrees);
  s.get("rotation_max_degrees", a.rotation_max_degrees);
  s.get("rotation_probability", a.rotation_probability);
  s.get("crop_pixels", a.crop_pixels);
  s.get("crop_probability", a.crop_probability);
  s.get("gamma_min", a.gamma_min);
  s.get("gamma_max", a.gamma_max);
  s.get("gamma_probability", a.gamma_probability);
  s.get("brightness_levels", a.brightness_levels);
  s.get("brightness_probability", a.brightness_probability);
  s.get("color_shift_levels", a.color_shift_levels);
  s.get("color_probability", a.color_probability);
  s.finish();
}

void read_train(Section s, TrainConfig& t) {
  s.get("batch_size", t.batch_size);
  s.get("max_epochs", t.max_epochs);
  s.get("early_stop_patience", t.early_stop_patience);
  s.get("eval_every", t.eval_every);
  Section adam = s.child("adam");
  adam.get("lr", t.adam.lr);
  adam.get("beta1", t.adam.beta1);
  adam.get("beta2", t.adam.beta2);
  adam.get("eps", t.adam.eps);
  adam.finish();
  s.finish();
}

void read_blob(Section s, BlobStyle& b) {
  s.get("min_count", b.min_count);
  s.get("max_count", b.max_count);
  s.get("min_radius", b.min_radius);
  s.get("max_radius", b.max_radius);
  s.get("color", b.color);
  s.get("color_jitter", b.color_jitter);
  s.get("texture", b.texture);
  s.get("irregularity", b.irregularity);
  s.finish();
}

void read_data(Section s, DatasetConfig& d) {
  SynthConfig& synth = d.synth;
  s.get("n_train", d.n_train);
  s.get("n_test", d.n_test);
  s.get("seed", synth.seed);
  s.get("height", synth.height);
  s.get("width", synth.width);
  s.get("classes", synth.taxonomy.names);
  std::string policy = synth.taxonomy.noisy_corroded_policy == NoisyCorrodedPolicy::merge_to_corroded
                           ? "merge_to_corroded" : "mark_invalid";
  s.get("noisy_corroded_policy", policy);
  if (policy == "merge_to_corroded") {
    synth.taxonomy.noisy_corroded_policy = NoisyCorrodedPolicy::merge_to_corroded;
  } else if (policy == "mark_invalid") {
    synth.taxonomy.noisy_corroded_policy = NoisyCorrodedPolicy::mark_invalid;
  } else {
    throw ConfigError(s.where() + ".noisy_corroded_policy must be merge_to_corroded or mark_invalid");
  }
  s.get("target_fractions", synth.target_fractions);
  s.get("noisy_corroded_fraction", synth.noisy_corroded_fraction);
  s.get("noise_level", synth.noise_level);
  s.get("dust_streak_rate", synth.dust_streak_rate);
  s.get("min_gain", synth.min_gain);
  s.get("max_gain", synth.max_gain);
  if (const json* blobs = s.raw("blobs")) {
    if (!blobs->is_array()) throw ConfigError(s.where() + ".blobs must be an array");
    synth.blobs.assign(blobs->size(), BlobStyle{});
    for (std::size_t i = 0; i < blobs->size(); ++i) {
      read_blob(Section((*blobs)[i], s.where() + ".blobs[" + std::to_string(i) + "]"), synth.blobs[i]);
    }
  }
  Section clahe = s.child("clahe");
  bool enabled = d.preprocess.has_value();
  ClaheConfig c = d.preprocess.value_or(ClaheConfig{});
  clahe.get("enabled", enabled);
  clahe.get("clip_limit", c.clip_limit);
  clahe.get("tiles_x", c.tiles_x);
  clahe.get("tiles_y", c.tiles_y);
  clahe.finish();
  d.preprocess = enabled ? std::optional<ClaheConfig>(c) : std::nullopt;
  s.finish();
}

json blob_json(const BlobStyle& b) {
  return {{"min_count", b.min_count},       {"max_count", b.max_count}, {"min_radius", b.min_radius},
          {"max_radius", b.max_radius},     {"color", b.color},         {"color_jitter", b.color_jitter},
          {"texture", b.texture},           {"irregularity", b.irregularity}};
}

}  // namespace

MetricsConfig RunConfig::metrics() const {
  MetricsConfig m;
  m.target_class = data.synth.taxonomy.index_of(target_class);
  m.alpha = alpha;
  return m;
}

void RunConfig::finalize() {
  // Weighted losses without explicit weights use the standard set for the default classes.
  if (train.loss.weighted() && train.loss.class_weights.empty() &&
      data.synth.taxonomy.names == ClassTaxonomy{}.names) {
    train.loss.class_weights = default_class_weights();
  }
  try {
    data.synth.taxonomy.validate();
    if (model.num_classes != data.synth.num_classes()) {
      throw ConfigError("model.num_classes (" + std::to_string(model.num_classes) + ") differs from the " +
                        std::to_string(data.synth.num_classes()) + " data classes");
    }
    model.validate();
    data.synth.validate();
    if (data.n_train < 1 || data.n_test < 1) throw ConfigError("data.n_train and data.n_test must be >= 1");
    const Index multiple = model.spatial_multiple();
    if (data.synth.height % multiple != 0 || data.synth.width % multiple != 0) {
      throw ConfigError("data image size must be divisible by " + std::to_string(multiple));
    }
    train.seed = seed;
    train.augment.seed = augment_seed_for(seed);
    train.validate(model.num_classes);
    metrics().validate(model.num_classes);
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError(e.what());
  }
}

RunConfig parse_run_config(const std::string& json_text) {
  json root;
  try {
    root = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  RunConfig config;
  Section s(root, "config");
  s.get("seed", config.seed);
  read_model(s.child("model"), config.model);
  read_loss(s.child("loss"), config.train.loss);
  read_train(s.child("train"), config.train);
  read_augment(s.child("augment"), config.train.augment, config.train.augment_enabled);
  read_data(s.child("data"), config.data);
  Section metrics = s.child("metrics");
  metrics.get("target_class", config.target_class);
  metrics.get("alpha", config.alpha);
  metrics.finish();
  Section paths = s.child("paths");
  std::string data_dir = config.data_dir.string(), checkpoint = config.checkpoint.string();
  paths.get("data", data_dir);
  paths.get("checkpoint", checkpoint);
  paths.finish();
  config.data_dir = data_dir;
  config.checkpoint = checkpoint;
  s.finish();
  config.finalize();
  return config;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read config " + path.string());
  std::ostringstream text;
  text << in.rdbuf();
  return parse_run_config(text.str());
}

std::string to_json(const RunConfig& c) {
  const auto& t = c.train;
  const auto& a = t.augment;
  const auto& s = c.data.synth;
  json blobs = json::array();
  for (const auto& b : s.blobs) blobs.push_back(blob_json(b));
  const ClaheConfig clahe = c.data.preprocess.value_or(ClaheConfig{});
  json root = {
      {"seed", c.seed},
      {"model",
       {{"in_channels", c.model.in_channels}, {"num_classes", c.model.num_classes},
        {"base_features", c.model.base_features}, {"depth", c.model.depth},
        {"bn_momentum", c.model.bn_momentum}, {"bn_eps", c.model.bn_eps}}},
      {"loss",
       {{"kind", to_string(t.loss.kind)}, {"gamma", t.loss.gamma}, {"class_weights", t.loss.class_weights},
        {"normalize_weights", t.loss.normalize_weights}}},
      {"train",
       {{"batch_size", t.batch_size}, {"max_epochs", t.max_epochs},
        {"early_stop_patience", t.early_stop_patience}, {"eval_every", t.eval_every},
        {"adam", {{"lr", t.adam.lr}, {"beta1", t.adam.beta1}, {"beta2", t.adam.beta2}, {"eps", t.adam.eps}}}}},
      {"augment",
       {{"enabled", t.augment_enabled}, {"rotation_min_degrees", a.rotation_min_degrees},
        {"rotation_max_degrees", a.rotation_max_degrees}, {"rotation_probability", a.rotation_probability},
        {"crop_pixels", a.crop_pixels}, {"crop_probability", a.crop_probability}, {"gamma_min", a.gamma_min},
        {"gamma_max", a.gamma_max}, {"gamma_probability", a.gamma_probability},
        {"brightness_levels", a.brightness_levels}, {"brightness_probability", a.brightness_probability},
        {"color_shift_levels", a.color_shift_levels}, {"color_probability", a.color_probability}}},
      {"data",
       {{"n_train", c.data.n_train}, {"n_test", c.data.n_test}, {"seed", s.seed}, {"height", s.height},
        {"width", s.width}, {"classes", s.taxonomy.names},
        {"noisy_corroded_policy", s.taxonomy.noisy_corroded_policy == NoisyCorrodedPolicy::merge_to_corroded
                                      ? "merge_to_corroded" : "mark_invalid"},
        {"target_fractions", s.target_fractions}, {"noisy_corroded_fraction", s.noisy_corroded_fraction},
        {"noise_level", s.noise_level}, {"dust_streak_rate", s.dust_streak_rate}, {"min_gain", s.min_gain},
        {"max_gain", s.max_gain}, {"blobs", blobs},
        {"clahe", {{"enabled", c.data.preprocess.has_value()}, {"clip_limit", clahe.clip_limit},
                   {"tiles_x", clahe.tiles_x}, {"tiles_y", clahe.tiles_y}}}}},
      {"metrics", {{"target_class", c.target_class}, {"alpha", c.alpha}}},
      {"paths", {{"data", c.data_dir.string()}, {"checkpoint", c.checkpoint.string()}}},
  };
  return root.dump(2);
}

}  // namespace useg
