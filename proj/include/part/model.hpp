#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <vector>

#include "part/backbone.hpp"
#include "part/geometry.hpp"
#include "part/image.hpp"
#include "part/relhead.hpp"

namespace part {

struct ModelConfig {
  ImageDims dims{32, 32, 3};
  SamplerConfig sampler;
  ViTConfig vit;
  HeadConfig head;
  /// Relative head present (pretraining); replaced by a classifier when finetuning.
  bool relative_head = true;
  /// Classifier output count; 0 means no classifier.
  int num_classes = 0;

  void validate() const;
};

/// ViT trunk with either a relative-translation head or a [CLS] classifier,
/// all parameters in one store.
class PartModel {
 public:
  PartModel(const ModelConfig& config, std::uint64_t init_seed);
  PartModel(const PartModel&) = delete;
  PartModel& operator=(const PartModel&) = delete;

  const ModelConfig& config() const { return config_; }
  ParameterStore& params() { return store_; }
  const ParameterStore& params() const { return store_; }
  VisionTransformer& vit() { return *vit_; }
  const VisionTransformer& vit() const { return *vit_; }
  const RelativeHead* head() const { return head_.get(); }

  PatchSequence patches(const Image& image, std::span<const PatchBox> boxes) const;
  /// Encoder output restricted to patch rows (X').
  ad::Var encode_patches(ad::Tape& tape, const PatchSequence& seq) const;
  ad::Var predict(ad::Tape& tape, const PatchSequence& seq, const PairSelection& pairs) const;
  /// 1 x num_classes logits read from the [CLS] row (mean of patch rows without [CLS]).
  ad::Var classify(ad::Tape& tape, const PatchSequence& seq) const;

 private:
  ModelConfig config_;
  ParameterStore store_;
  std::unique_ptr<VisionTransformer> vit_;
  std::unique_ptr<RelativeHead> head_;
  Parameter* cls_gain_ = nullptr;
  Parameter* cls_shift_ = nullptr;
  Parameter* cls_w_ = nullptr;
  Parameter* cls_b_ = nullptr;
};

/// One image prepared for the pretext task.
struct PretextSample {
  PatchSequence seq;
  PairSelection pairs;
  /// #pairs x arity ground-truth targets.
  Tensor targets;
};

/// Boxes for pretraining: windows on 1-D inputs, otherwise sampler.mode decides.
std::vector<PatchBox> pretext_boxes(const ImageDims& dims, const SamplerConfig& sampler, Rng& rng);
/// Fixed tiling used for finetuning (rows of P x P boxes; 1 x P windows on 1-D inputs).
std::vector<PatchBox> grid_boxes(const ImageDims& dims, int patch_size);

PretextSample make_pretext_sample(const Image& image, const SamplerConfig& sampler, TargetMode mode,
                                  std::size_t pair_count, Rng& box_rng, Rng& pair_rng, int patch_size);

Tensor pair_targets(std::span<const PatchBox> boxes, const PairSelection& pairs, TargetMode mode);

}  // namespace part
