#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "part/checkpoint.hpp"
#include "part/dataio.hpp"
#include "part/model.hpp"
#include "part/optim.hpp"

namespace part {

enum class TrainMode { pretrain, finetune, probe };
std::string to_string(TrainMode m);
TrainMode train_mode_from_string(const std::string& s);

struct TrainConfig {
  double learning_rate = 5e-4;
  int batch_size = 64;
  int steps = 2000;
  /// Negative: 5% of steps.
  int warmup_steps = -1;
  double weight_decay = 0.05;
  double beta1 = 0.9;
  double beta2 = 0.95;
  Schedule schedule = Schedule::cosine;
  std::uint64_t seed = 0;
  TrainMode mode = TrainMode::pretrain;
  TargetMode target_mode = TargetMode::base;
  int pair_count = 2048;
  /// Reuse one pair subset per image instead of resampling every iteration.
  bool freeze_pairs = false;
  /// Random horizontal flips while finetuning 2-D images.
  bool hflip = true;
  /// Worker threads for the per-image forward/backward (0: OpenMP default).
  int threads = 0;
  /// Validation loss / antisymmetry every N steps (0: never).
  int eval_every = 0;
  /// Checkpoint every N steps (0: only the final one).
  int checkpoint_every = 0;
  /// Pairs per validation image.
  int val_pair_count = 256;
  /// Validation images used for the periodic antisymmetry correlation.
  int antisymmetry_images = 4;

  std::uint64_t warmup() const;
  void validate() const;
};

struct MetricsRecord {
  std::uint64_t step = 0;
  double loss = 0.0;
  double learning_rate = 0.0;
  std::optional<double> val_loss;
  std::optional<double> antisymmetry;
  double wall_time = 0.0;
};

/// Append-only, step-monotone training log. CSV header:
/// step,loss,lr,val_loss,antisymmetry,wall_time (empty cells for missing values).
class MetricsLog {
 public:
  void append(const MetricsRecord& r);
  const std::vector<MetricsRecord>& records() const { return records_; }
  bool empty() const { return records_.empty(); }

  void write_csv(const std::filesystem::path& path) const;
  /// Appends rows (header written when the file is new or empty).
  void append_csv(const std::filesystem::path& path, std::size_t from_record) const;
  static MetricsLog read_csv(const std::filesystem::path& path);

 private:
  std::vector<MetricsRecord> records_;
};

/// Seed of the fixed validation boxes and pairs used by the training loops.
inline constexpr std::uint64_t kValidationSeed = 0x7a11da7e;

/// Pretext-task validation: fixed boxes and pairs per validation image, derived from
/// seed, so the value is comparable across checkpoints.
struct PretextEval {
  double loss = 0.0;                    // mean squared error over all coordinates
  std::vector<double> mse_per_coord;    // x, y (, w, h)
  double l2_error = 0.0;                // mean Euclidean norm of the translation residual
  std::size_t pairs = 0;
};
PretextEval evaluate_pretext(const PartModel& model, const Dataset& val, const SamplerConfig& sampler,
                             TargetMode mode, std::size_t pair_count, std::uint64_t seed);

/// Mean Pearson correlation of predicted theta_ij against -theta_ji over validation images.
double antisymmetry_correlation(const PartModel& model, const Dataset& val, const SamplerConfig& sampler,
                                std::size_t images, std::uint64_t seed);

/// Runs the pretraining loop: sample boxes -> resize -> encode -> predict pairs -> MSE -> AdamW.
/// The model is initialized from train.seed and its head target follows train.target_mode.
class Pretrainer {
 public:
  Pretrainer(const ModelConfig& model, const TrainConfig& train, const Dataset& data,
             const nlohmann::json& run_config = nlohmann::json::object());
  /// Resumes from a checkpoint written by checkpoint().
  Pretrainer(const Checkpoint& ckpt, const ModelConfig& model, const TrainConfig& train, const Dataset& data,
             const nlohmann::json& run_config = nlohmann::json::object());

  /// One optimizer step; returns the mean batch loss.
  double step();
  /// Steps until train.steps, logging each step. on_step runs after every step.
  void run(MetricsLog& log, const Dataset* val = nullptr,
           const std::function<void(const Pretrainer&, const MetricsRecord&)>& on_step = nullptr);

  std::uint64_t current_step() const { return step_; }
  const PartModel& model() const { return *model_; }
  PartModel& model() { return *model_; }
  const TrainConfig& train_config() const { return train_; }
  Checkpoint checkpoint() const;

 private:
  void init_optimizer();

  ModelConfig model_config_;
  TrainConfig train_;
  const Dataset& data_;
  nlohmann::json run_config_;
  std::unique_ptr<PartModel> model_;
  std::unique_ptr<AdamW> opt_;
  std::uint64_t step_ = 0;
  Rng root_;
};

/// Convenience wrapper: full pretraining run returning the final checkpoint.
Checkpoint pretrain(const Dataset& data, const ModelConfig& model, const TrainConfig& train,
                    MetricsLog* log = nullptr, const Dataset* val = nullptr);

/// Copies checkpoint parameters ("param:<name>") into a store. Parameters whose
/// names start with any skip prefix are left alone; shape mismatches throw.
/// Returns the number of parameters loaded.
std::size_t load_parameters(ParameterStore& store, const Checkpoint& ckpt,
                            const std::vector<std::string>& skip_prefixes = {});

struct ClassificationEval {
  /// Mean cross-entropy.
  double loss = 0.0;
  double accuracy = 0.0;
  double kappa = 0.0;
  std::vector<int> predictions;
  std::vector<int> labels;
};

struct FinetuneResult {
  Checkpoint checkpoint;
  MetricsLog log;
  ClassificationEval eval;
};

/// Drops the relative head, attaches a [CLS] classifier and learnable position
/// embeddings, and trains on grid-sampled patches. In probe mode the trunk is frozen
/// and only the classifier and position table are updated.
FinetuneResult finetune(const Checkpoint& pretrained, const Dataset& labeled, const Dataset& val,
                        const TrainConfig& train);

ClassificationEval evaluate_classifier(const PartModel& model, const Dataset& data);

/// Cohen's kappa between two label sequences.
double cohen_kappa(std::span<const int> a, std::span<const int> b, int num_classes);

/// Rebuilds a model from a checkpoint's stored configuration and parameters.
std::unique_ptr<PartModel> model_from_checkpoint(const Checkpoint& ckpt);

}  // namespace part
