#pragma once

#include <cstddef>
#include <string>

#include "part/autodiff.hpp"
#include "part/geometry.hpp"
#include "part/params.hpp"

namespace part {

enum class HeadKind { cross_attention, pairwise_mlp, full_mlp };

std::string to_string(HeadKind kind);
HeadKind head_kind_from_string(const std::string& s);

struct HeadConfig {
  HeadKind kind = HeadKind::cross_attention;
  TargetMode target = TargetMode::base;
  /// Attention heads of the cross-attention module (query/key split evenly).
  int heads = 1;
  /// Learned key/value projections; identity (keys = values = X') when false.
  bool learned_kv = false;
  /// Adds the pair query to the attention context before the output projection.
  bool query_residual = false;
  /// Patch count the full MLP is built for.
  int patch_count = 0;
};

/// Maps patch embeddings X' (N x d, patch rows only) and a pair subset to
/// predicted relative targets (#pairs x arity). Parameters live under "head.".
class RelativeHead {
 public:
  RelativeHead(const HeadConfig& config, std::size_t embed_dim, ParameterStore& store, Rng& rng);

  const HeadConfig& config() const { return config_; }
  std::size_t arity() const { return part::arity(config_.target); }

  /// Dispatches on the configured kind.
  ad::Var predict(ad::Tape& tape, ad::Var x, const PairSelection& pairs) const;

  /// Concatenates the reference and target rows of each pair (2d) and reduces to d.
  ad::Var concat_pairs(ad::Tape& tape, ad::Var x, const PairSelection& pairs) const;
  /// softmax(Q X'^T / sqrt(d)) X' followed by a d -> arity projection.
  ad::Var cross_attention_predict(ad::Tape& tape, ad::Var pair_embedding, ad::Var x) const;
  /// 2d -> d -> arity MLP per pair.
  ad::Var pairwise_mlp_predict(ad::Tape& tape, ad::Var x, const PairSelection& pairs) const;
  /// One linear map from all N*d embeddings to N*N*arity outputs, gathered at the pairs.
  ad::Var full_mlp_predict(ad::Tape& tape, ad::Var x, const PairSelection& pairs) const;

 private:
  HeadConfig config_;
  std::size_t d_;
  Parameter* reduce_w_ = nullptr;
  Parameter* reduce_b_ = nullptr;
  Parameter* key_w_ = nullptr;
  Parameter* value_w_ = nullptr;
  Parameter* out_w_ = nullptr;
  Parameter* out_b_ = nullptr;
  Parameter* hidden_w_ = nullptr;
  Parameter* hidden_b_ = nullptr;
  Parameter* full_w_ = nullptr;
  Parameter* full_b_ = nullptr;
};

/// Mean squared error over all #pairs * arity entries.
ad::Var pretrain_loss(ad::Var prediction, ad::Var truth);

}  // namespace part
