#pragma once

#include <filesystem>
#include <memory>
#include <string>

#include "json.hpp"
#include "part/dataio.hpp"
#include "part/model.hpp"
#include "part/train.hpp"

namespace part {

struct DataConfig {
  /// scenes | signals | raw
  std::string kind = "scenes";
  SyntheticSceneSpec scene;
  SignalSpec signal;
  /// raw: training file, optional validation file, and record geometry.
  std::string path;
  std::string val_path;
  int height = 32;
  int width = 32;
  int channels = 3;
  int num_classes = 0;
  std::size_t train_count = 512;
  std::size_t val_count = 32;

  ImageDims dims() const;
  int classes() const;
  void validate() const;
};

struct Datasets {
  std::unique_ptr<Dataset> train;
  std::unique_ptr<Dataset> val;
};

/// Synthetic validation items are generated right after the training indices.
Datasets make_datasets(const DataConfig& data);

struct RunConfig {
  SamplerConfig sampler;
  ViTConfig vit;
  HeadConfig head;
  TrainConfig train;
  DataConfig data;
  std::string out = "runs/part";
  /// Input checkpoint for finetune, probe, evaluate, reconstruct and diagnose.
  std::string checkpoint;

  /// Pretraining model: head.target follows train.target_mode, head.patch_count
  /// follows sampler.patch_count.
  ModelConfig model_config() const;
  void validate() const;
};

nlohmann::json to_json(const RunConfig& c);
/// Strict: unknown keys and mistyped values throw ConfigError naming the key path.
RunConfig run_config_from_json(const nlohmann::json& j);
RunConfig load_run_config(const std::filesystem::path& path);

nlohmann::json to_json(const ModelConfig& c);
ModelConfig model_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const TrainConfig& c);
TrainConfig train_config_from_json(const nlohmann::json& j);

/// Sets a dotted key (e.g. "train.learning_rate") in a materialized config. The value
/// is parsed as JSON when possible, otherwise taken as a string. Unknown keys throw.
void apply_override(nlohmann::json& config, const std::string& dotted_key, const std::string& value);

}  // namespace part
