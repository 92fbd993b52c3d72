#include "part/backbone.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "part/dataio.hpp"
#include "part/error.hpp"

namespace part {

PatchShape patch_shape(const ImageDims& dims, int patch_size) {
  return dims.height == 1 ? PatchShape{1, patch_size} : PatchShape{patch_size, patch_size};
}

std::size_t patch_dim(const ImageDims& dims, int patch_size) {
  const PatchShape s = patch_shape(dims, patch_size);
  return static_cast<std::size_t>(s.height) * s.width * dims.channels;
}

PatchSequence extract_and_resize(const Image& image, std::span<const PatchBox> boxes, int patch_size) {
  const PatchShape s = patch_shape(image.dims, patch_size);
  PatchSequence seq;
  seq.values = Tensor(boxes.size(), patch_dim(image.dims, patch_size));
  seq.source_boxes.assign(boxes.begin(), boxes.end());
  for (std::size_t i = 0; i < boxes.size(); ++i) {
    resample_box(image, boxes[i], s.height, s.width, seq.values.row(i));
    // 1-D windows are instance normalized after resizing.
    if (image.dims.height == 1) {
      const NormalizedWindow w = instance_normalize(seq.values.row(i), image.dims.channels);
      std::copy(w.values.begin(), w.values.end(), seq.values.row(i).begin());
    }
  }
  return seq;
}

void ViTConfig::validate(bool pretraining) const {
  if (embed_dim < 1) throw ConfigError("vit.embed_dim must be >= 1");
  if (depth < 0) throw ConfigError("vit.depth must be >= 0");
  if (heads < 1 || embed_dim % heads != 0) throw ConfigError("vit.embed_dim must be divisible by vit.heads");
  if (mlp_ratio < 1) throw ConfigError("vit.mlp_ratio must be >= 1");
  if (patch_size < 1) throw ConfigError("vit.patch_size must be >= 1");
  if (pretraining && use_positional) throw ConfigError("vit.use_positional must be false during pretraining");
}

VisionTransformer::VisionTransformer(const ViTConfig& config, std::size_t input_dim, ParameterStore& store, Rng& rng)
    : config_(config), input_dim_(input_dim) {
  config_.validate(false);
  const auto d = static_cast<std::size_t>(config_.embed_dim);
  const std::size_t hidden = d * static_cast<std::size_t>(config_.mlp_ratio);
  patch_w_ = &store.add("vit.patch.weight", input_dim, d, Init::trunc_normal, rng);
  patch_b_ = &store.add("vit.patch.bias", 1, d, Init::zeros, rng);
  if (config_.use_cls) cls_ = &store.add("vit.cls", 1, d, Init::trunc_normal, rng);
  if (cls_ != nullptr) cls_->decay = false;
  for (int i = 0; i < config_.depth; ++i) {
    const std::string p = "vit.block" + std::to_string(i) + ".";
    Block b{};
    b.ln1_gain = &store.add(p + "ln1.gain", 1, d, Init::ones, rng);
    b.ln1_shift = &store.add(p + "ln1.shift", 1, d, Init::zeros, rng);
    b.qkv = &store.add(p + "attn.qkv", d, 3 * d, Init::trunc_normal, rng);
    b.proj_w = &store.add(p + "attn.proj.weight", d, d, Init::trunc_normal, rng);
    b.proj_b = &store.add(p + "attn.proj.bias", 1, d, Init::zeros, rng);
    b.ln2_gain = &store.add(p + "ln2.gain", 1, d, Init::ones, rng);
    b.ln2_shift = &store.add(p + "ln2.shift", 1, d, Init::zeros, rng);
    b.fc1_w = &store.add(p + "mlp.fc1.weight", d, hidden, Init::trunc_normal, rng);
    b.fc1_b = &store.add(p + "mlp.fc1.bias", 1, hidden, Init::zeros, rng);
    b.fc2_w = &store.add(p + "mlp.fc2.weight", hidden, d, Init::trunc_normal, rng);
    b.fc2_b = &store.add(p + "mlp.fc2.bias", 1, d, Init::zeros, rng);
    blocks_.push_back(b);
  }
  if (config_.use_positional) enable_positional(store, static_cast<std::size_t>(config_.max_positions), rng);
}

void VisionTransformer::enable_positional(ParameterStore& store, std::size_t rows, Rng& rng) {
  if (rows == 0) throw ConfigError("vit.max_positions must be >= 1 when positional embeddings are enabled");
  config_.use_positional = true;
  config_.max_positions = static_cast<int>(rows);
  pos_ = store.find("vit.pos");
  if (pos_ == nullptr) {
    pos_ = &store.add("vit.pos", rows, static_cast<std::size_t>(config_.embed_dim), Init::trunc_normal, rng);
    pos_->decay = false;
  }
}

ad::Var VisionTransformer::embed(ad::Tape& tape, const PatchSequence& seq) const {
  if (seq.values.cols() != input_dim_) {
    throw ShapeError("embed: patch rows have " + std::to_string(seq.values.cols()) + " values, projection expects " +
                     std::to_string(input_dim_));
  }
  ad::Var x = ad::linear(tape.constant(seq.values), bind(tape, *patch_w_), bind(tape, *patch_b_));
  if (cls_ != nullptr) x = ad::concat_rows(bind(tape, *cls_), x);
  return x;
}

ad::Var VisionTransformer::add_positional(ad::Tape& tape, ad::Var x) const {
  if (pos_ == nullptr) throw ConfigError("add_positional: no position table (finetune mode only)");
  if (pos_->value.rows() < x.rows()) {
    throw ShapeError("add_positional: table has " + std::to_string(pos_->value.rows()) + " rows, sequence has " +
                     std::to_string(x.rows()));
  }
  // The position table stays trainable when the trunk is frozen (probe mode).
  return ad::add(x, ad::slice_rows(tape.param(*pos_), 0, x.rows()));
}

ad::Var VisionTransformer::attention(ad::Tape& tape, const Block& b, ad::Var h) const {
  const auto d = static_cast<std::size_t>(config_.embed_dim);
  const auto heads = static_cast<std::size_t>(config_.heads);
  const std::size_t hd = d / heads;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(hd));
  ad::Var qkv = ad::matmul(h, bind(tape, *b.qkv));
  std::vector<ad::Var> outs;
  outs.reserve(heads);
  for (std::size_t i = 0; i < heads; ++i) {
    ad::Var q = ad::slice_cols(qkv, i * hd, hd);
    ad::Var k = ad::slice_cols(qkv, d + i * hd, hd);
    ad::Var v = ad::slice_cols(qkv, 2 * d + i * hd, hd);
    ad::Var w = ad::row_softmax(ad::scale(ad::matmul_nt(q, k), inv_sqrt));
    outs.push_back(ad::matmul(w, v));
  }
  ad::Var o = heads == 1 ? outs[0] : ad::concat_cols(outs);
  return ad::linear(o, bind(tape, *b.proj_w), bind(tape, *b.proj_b));
}

ad::Var VisionTransformer::encode(ad::Tape& tape, ad::Var x) const {
  for (std::size_t i = 0; i < blocks_.size(); ++i) {
    const Block& b = blocks_[i];
    ad::Var h = ad::layernorm(x, bind(tape, *b.ln1_gain), bind(tape, *b.ln1_shift));
    x = ad::add(x, attention(tape, b, h));
    ad::Var m = ad::layernorm(x, bind(tape, *b.ln2_gain), bind(tape, *b.ln2_shift));
    m = ad::gelu(ad::linear(m, bind(tape, *b.fc1_w), bind(tape, *b.fc1_b)));
    x = ad::add(x, ad::linear(m, bind(tape, *b.fc2_w), bind(tape, *b.fc2_b)));
    if (!x.value().all_finite()) throw NumericError("encode: non-finite activations after block " + std::to_string(i));
  }
  return x;
}

ad::Var VisionTransformer::forward(ad::Tape& tape, const PatchSequence& seq) const {
  ad::Var x = embed(tape, seq);
  if (config_.use_positional) x = add_positional(tape, x);
  return encode(tape, x);
}

ad::Var VisionTransformer::patch_rows(ad::Var x) const {
  if (!config_.use_cls) return x;
  return ad::slice_rows(x, 1, x.rows() - 1);
}

}  // namespace part
