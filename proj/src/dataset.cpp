#include "useg/dataset.hpp"

#include "useg/png_io.hpp"
#include "useg/seeding.hpp"

#include <json.hpp>

#include <cstdio>
#include <fstream>

namespace useg {

std::uint64_t sample_seed(std::uint64_t base_seed, int split, Index index) {
  return derive_seed({base_seed, static_cast<std::uint64_t>(split), static_cast<std::uint64_t>(index)});
}

DatasetSplit build_dataset(const DatasetConfig& config) {
  if (config.n_train < 1 || config.n_test < 1) {
    throw std::invalid_argument("build_dataset: n_train and n_test must be >= 1");
  }
  config.synth.validate();
  auto make = [&](int split, Index count) {
    Dataset out;
    out.reserve(static_cast<std::size_t>(count));
    for (Index i = 0; i < count; ++i) {
      SynthConfig synth = config.synth;
      synth.seed = sample_seed(config.synth.seed, split, i);
      LabeledSample sample = generate_scene(synth);
      if (config.preprocess) sample.image = clahe(sample.image, *config.preprocess);
      out.push_back(std::move(sample));
    }
    return out;
  };
  return {make(0, config.n_train), make(1, config.n_test)};
}

void save_dataset(const DatasetSplit& data, const DatasetConfig& config, const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(dir / "train", ec);
  fs::create_directories(dir / "test", ec);
  if (ec) throw ImageIoError("cannot create " + dir.string() + ": " + ec.message());

  nlohmann::json manifest;
  manifest["version"] = 1;
  manifest["classes"] = config.synth.taxonomy.names;
  manifest["height"] = config.synth.height;
  manifest["width"] = config.synth.width;
  manifest["samples"] = nlohmann::json::array();
  auto write_split = [&](const Dataset& samples, const char* split, int split_id) {
    for (std::size_t i = 0; i < samples.size(); ++i) {
      char stem[32];
      std::snprintf(stem, sizeof stem, "%04zu", i);
      const std::string image = std::string(split) + "/" + stem + "_image.png";
      const std::string mask = std::string(split) + "/" + stem + "_mask.png";
      save_sample(samples[i], dir / image, dir / mask);
      manifest["samples"].push_back({{"split", split},
                                     {"image", image},
                                     {"mask", mask},
                                     {"seed", sample_seed(config.synth.seed, split_id, static_cast<Index>(i))}});
    }
  };
  write_split(data.train, "train", 0);
  write_split(data.test, "test", 1);
  std::ofstream out(dir / "manifest.json");
  if (!out) throw ImageIoError("cannot write " + (dir / "manifest.json").string());
  out << manifest.dump(2) << '\n';
  if (!out) throw ImageIoError("failed writing " + (dir / "manifest.json").string());
}

DatasetSplit load_dataset(const std::filesystem::path& dir) {
  const auto path = dir / "manifest.json";
  std::ifstream in(path);
  if (!in) throw ImageIoError("cannot open " + path.string());
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ImageIoError(path.string() + ": " + e.what());
  }
  DatasetSplit data;
  try {
    for (const auto& entry : manifest.at("samples")) {
      const std::string split = entry.at("split").get<std::string>();
      LabeledSample sample = load_sample(dir / entry.at("image").get<std::string>(),
                                         dir / entry.at("mask").get<std::string>());
      if (split == "train") data.train.push_back(std::move(sample));
      else if (split == "test") data.test.push_back(std::move(sample));
      else throw ImageIoError(path.string() + ": unknown split " + split);
    }
  } catch (const nlohmann::json::exception& e) {
    throw ImageIoError(path.string() + ": " + e.what());
  }
  return data;
}

}  // namespace useg
