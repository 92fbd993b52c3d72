#include "part/model.hpp"

#include "part/error.hpp"

namespace part {

void ModelConfig::validate() const {
  dims.validate();
  vit.validate(relative_head);
  if (sampler.patch_size != vit.patch_size) {
    throw ConfigError("sampler.patch_size (" + std::to_string(sampler.patch_size) + ") must equal vit.patch_size (" +
                      std::to_string(vit.patch_size) + ")");
  }
  if (dims.height == 1) {
    if (sampler.patch_count < 2) throw ConfigError("sampler.patch_count must be >= 2");
    if (sampler.size_max > dims.width) throw ConfigError("sampler.size_max exceeds the sequence length");
  } else {
    sampler.validate(dims);
  }
  if (relative_head && head.kind == HeadKind::full_mlp && head.patch_count != sampler.patch_count) {
    throw ConfigError("head.patch_count must equal sampler.patch_count for the full MLP head");
  }
  if (dims.height == 1 && relative_head && head.target != TargetMode::time) {
    throw ConfigError("1-D inputs need train.target_mode = time");
  }
  if (num_classes < 0) throw ConfigError("num_classes must be >= 0");
}

PartModel::PartModel(const ModelConfig& config, std::uint64_t init_seed) : config_(config) {
  config_.validate();
  Rng rng(init_seed);
  Rng vit_rng = rng.split(1);
  vit_ = std::make_unique<VisionTransformer>(config_.vit, patch_dim(config_.dims, config_.vit.patch_size), store_,
                                             vit_rng);
  if (config_.relative_head) {
    Rng head_rng = rng.split(2);
    head_ = std::make_unique<RelativeHead>(config_.head, static_cast<std::size_t>(config_.vit.embed_dim), store_,
                                           head_rng);
  }
  if (config_.num_classes > 0) {
    Rng cls_rng = rng.split(3);
    const auto d = static_cast<std::size_t>(config_.vit.embed_dim);
    cls_gain_ = &store_.add("classifier.norm.gain", 1, d, Init::ones, cls_rng);
    cls_shift_ = &store_.add("classifier.norm.shift", 1, d, Init::zeros, cls_rng);
    cls_w_ = &store_.add("classifier.weight", d, static_cast<std::size_t>(config_.num_classes), Init::trunc_normal,
                         cls_rng);
    cls_b_ = &store_.add("classifier.bias", 1, static_cast<std::size_t>(config_.num_classes), Init::zeros, cls_rng);
  }
}

PatchSequence PartModel::patches(const Image& image, std::span<const PatchBox> boxes) const {
  if (!(image.dims == config_.dims)) throw ConfigError("image dims do not match the model configuration");
  return extract_and_resize(image, boxes, config_.vit.patch_size);
}

ad::Var PartModel::encode_patches(ad::Tape& tape, const PatchSequence& seq) const {
  return vit_->patch_rows(vit_->forward(tape, seq));
}

ad::Var PartModel::predict(ad::Tape& tape, const PatchSequence& seq, const PairSelection& pairs) const {
  if (!head_) throw ConfigError("model has no relative head");
  return head_->predict(tape, encode_patches(tape, seq), pairs);
}

ad::Var PartModel::classify(ad::Tape& tape, const PatchSequence& seq) const {
  if (cls_w_ == nullptr) throw ConfigError("model has no classifier");
  ad::Var x = vit_->forward(tape, seq);
  ad::Var pooled;
  if (config_.vit.use_cls) {
    pooled = ad::slice_rows(x, 0, 1);
  } else {
    pooled = ad::matmul(tape.constant(Tensor(1, x.rows(), 1.0 / static_cast<double>(x.rows()))), x);
  }
  pooled = ad::layernorm(pooled, tape.param(*cls_gain_), tape.param(*cls_shift_));
  return ad::linear(pooled, tape.param(*cls_w_), tape.param(*cls_b_));
}

std::vector<PatchBox> pretext_boxes(const ImageDims& dims, const SamplerConfig& sampler, Rng& rng) {
  if (dims.height == 1) {
    if (sampler.mode == SamplingMode::grid) {
      std::vector<PatchBox> g = grid_boxes(dims, sampler.patch_size);
      if (static_cast<int>(g.size()) != sampler.patch_count) {
        throw ConfigError("grid windows: sampler.patch_count must equal length / patch_size = " +
                          std::to_string(g.size()));
      }
      return g;
    }
    return sample_windows_1d(dims.width, sampler, rng);
  }
  return sample_boxes(dims, sampler, rng);
}

std::vector<PatchBox> grid_boxes(const ImageDims& dims, int patch_size) {
  if (dims.height != 1) return sample_grid(dims, patch_size);
  if (patch_size < 1 || dims.width % patch_size != 0) {
    throw ConfigError("sequence length " + std::to_string(dims.width) + " is not divisible by patch_size " +
                      std::to_string(patch_size));
  }
  std::vector<PatchBox> boxes;
  for (int x = 0; x < dims.width; x += patch_size) boxes.push_back({x, 0, patch_size, 1});
  return boxes;
}

Tensor pair_targets(std::span<const PatchBox> boxes, const PairSelection& pairs, TargetMode mode) {
  const std::size_t a = arity(mode);
  Tensor t(pairs.count(), a);
  for (std::size_t k = 0; k < pairs.count(); ++k) {
    const auto [i, j] = pairs.pairs[k];
    write_target(boxes[i], boxes[j], mode, t.row(k));
  }
  return t;
}

PretextSample make_pretext_sample(const Image& image, const SamplerConfig& sampler, TargetMode mode,
                                  std::size_t pair_count, Rng& box_rng, Rng& pair_rng, int patch_size) {
  PretextSample s;
  const std::vector<PatchBox> boxes = pretext_boxes(image.dims, sampler, box_rng);
  s.seq = extract_and_resize(image, boxes, patch_size);
  s.pairs = select_pairs(boxes.size(), pair_count, pair_rng);
  s.targets = pair_targets(boxes, s.pairs, mode);
  return s;
}

}  // namespace part
