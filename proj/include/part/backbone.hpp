#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "part/autodiff.hpp"
#include "part/geometry.hpp"
#include "part/image.hpp"
#include "part/params.hpp"

namespace part {

/// Resized patches, one flattened row per box (row, column, channel order).
struct PatchSequence {
  Tensor values;
  std::vector<PatchBox> source_boxes;
};

/// Patch geometry after resizing: P x P for images, 1 x P for 1-D signals (height 1).
struct PatchShape {
  int height;
  int width;
};
PatchShape patch_shape(const ImageDims& dims, int patch_size);
std::size_t patch_dim(const ImageDims& dims, int patch_size);

PatchSequence extract_and_resize(const Image& image, std::span<const PatchBox> boxes, int patch_size);

struct ViTConfig {
  int embed_dim = 64;
  int depth = 4;
  int heads = 4;
  int mlp_ratio = 4;
  int patch_size = 4;
  bool use_cls = true;
  /// Learnable position table added before the blocks; only in finetuning.
  bool use_positional = false;
  /// Rows of the position table (0: sized from the sequence at construction).
  int max_positions = 0;

  void validate(bool pretraining) const;
};

/// Patch projection plus pre-norm transformer blocks. Parameters live in the
/// shared store under "vit.".
class VisionTransformer {
 public:
  VisionTransformer(const ViTConfig& config, std::size_t input_dim, ParameterStore& store, Rng& rng);

  const ViTConfig& config() const { return config_; }
  std::size_t input_dim() const { return input_dim_; }

  /// Frozen trunks bind their parameters as constants.
  void set_frozen(bool frozen) { frozen_ = frozen; }
  bool frozen() const { return frozen_; }

  /// X = seq * W + b, with the [CLS] row prepended when enabled.
  ad::Var embed(ad::Tape& tape, const PatchSequence& seq) const;
  ad::Var add_positional(ad::Tape& tape, ad::Var x) const;
  /// Transformer blocks; shape preserving.
  ad::Var encode(ad::Tape& tape, ad::Var x) const;
  /// embed -> (positional) -> encode.
  ad::Var forward(ad::Tape& tape, const PatchSequence& seq) const;

  /// Rows of the encoder output that belong to patches (drops [CLS]).
  ad::Var patch_rows(ad::Var x) const;
  std::size_t cls_offset() const { return config_.use_cls ? 1 : 0; }

  /// Adds the position table to the store if it does not exist yet.
  void enable_positional(ParameterStore& store, std::size_t rows, Rng& rng);

 private:
  struct Block {
    Parameter* ln1_gain;
    Parameter* ln1_shift;
    Parameter* qkv;
    Parameter* proj_w;
    Parameter* proj_b;
    Parameter* ln2_gain;
    Parameter* ln2_shift;
    Parameter* fc1_w;
    Parameter* fc1_b;
    Parameter* fc2_w;
    Parameter* fc2_b;
  };

  ad::Var bind(ad::Tape& tape, const Parameter& p) const { return frozen_ ? tape.frozen(p) : tape.param(p); }
  ad::Var attention(ad::Tape& tape, const Block& b, ad::Var h) const;

  ViTConfig config_;
  std::size_t input_dim_;
  Parameter* patch_w_ = nullptr;
  Parameter* patch_b_ = nullptr;
  Parameter* cls_ = nullptr;
  Parameter* pos_ = nullptr;
  std::vector<Block> blocks_;
  bool frozen_ = false;
};

}  // namespace part
