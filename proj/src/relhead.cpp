#include "part/relhead.hpp"

#include <cmath>
#include <vector>

#include "part/error.hpp"

namespace part {

std::string to_string(HeadKind kind) {
  switch (kind) {
    case HeadKind::cross_attention:
      return "cross_attention";
    case HeadKind::pairwise_mlp:
      return "pairwise_mlp";
    case HeadKind::full_mlp:
      return "full_mlp";
  }
  return "cross_attention";
}

HeadKind head_kind_from_string(const std::string& s) {
  if (s == "cross_attention") return HeadKind::cross_attention;
  if (s == "pairwise_mlp") return HeadKind::pairwise_mlp;
  if (s == "full_mlp") return HeadKind::full_mlp;
  throw ConfigError("head.kind must be cross_attention|pairwise_mlp|full_mlp, got '" + s + "'");
}

RelativeHead::RelativeHead(const HeadConfig& config, std::size_t embed_dim, ParameterStore& store, Rng& rng)
    : config_(config), d_(embed_dim) {
  const std::size_t out = arity();
  switch (config_.kind) {
    case HeadKind::cross_attention:
      if (config_.heads < 1 || d_ % static_cast<std::size_t>(config_.heads) != 0) {
        throw ConfigError("head.heads must divide vit.embed_dim");
      }
      reduce_w_ = &store.add("head.reduce.weight", 2 * d_, d_, Init::trunc_normal, rng);
      reduce_b_ = &store.add("head.reduce.bias", 1, d_, Init::zeros, rng);
      if (config_.learned_kv) {
        key_w_ = &store.add("head.key.weight", d_, d_, Init::trunc_normal, rng);
        value_w_ = &store.add("head.value.weight", d_, d_, Init::trunc_normal, rng);
      }
      out_w_ = &store.add("head.out.weight", d_, out, Init::trunc_normal, rng);
      out_b_ = &store.add("head.out.bias", 1, out, Init::zeros, rng);
      break;
    case HeadKind::pairwise_mlp:
      hidden_w_ = &store.add("head.fc1.weight", 2 * d_, d_, Init::trunc_normal, rng);
      hidden_b_ = &store.add("head.fc1.bias", 1, d_, Init::zeros, rng);
      out_w_ = &store.add("head.fc2.weight", d_, out, Init::trunc_normal, rng);
      out_b_ = &store.add("head.fc2.bias", 1, out, Init::zeros, rng);
      break;
    case HeadKind::full_mlp: {
      if (config_.patch_count < 2) throw ConfigError("head.patch_count must be >= 2 for the full MLP head");
      const auto n = static_cast<std::size_t>(config_.patch_count);
      full_w_ = &store.add("head.full.weight", n * n * out, n * d_, Init::trunc_normal, rng);
      full_b_ = &store.add("head.full.bias", 1, n * n * out, Init::zeros, rng);
      break;
    }
  }
}

ad::Var RelativeHead::predict(ad::Tape& tape, ad::Var x, const PairSelection& pairs) const {
  switch (config_.kind) {
    case HeadKind::cross_attention:
      return cross_attention_predict(tape, concat_pairs(tape, x, pairs), x);
    case HeadKind::pairwise_mlp:
      return pairwise_mlp_predict(tape, x, pairs);
    case HeadKind::full_mlp:
      return full_mlp_predict(tape, x, pairs);
  }
  throw ConfigError("unknown head kind");
}

namespace {

ad::Var pair_concat(ad::Var x, const PairSelection& pairs) {
  std::vector<std::size_t> refs, tgts;
  refs.reserve(pairs.count());
  tgts.reserve(pairs.count());
  for (const auto& [i, j] : pairs.pairs) {
    if (i == j) throw ConfigError("pair (" + std::to_string(i) + ", " + std::to_string(j) + ") is a self-pair");
    refs.push_back(i);
    tgts.push_back(j);
  }
  return ad::concat_last_dim(ad::gather_rows(x, refs), ad::gather_rows(x, tgts));
}

}  // namespace

ad::Var RelativeHead::concat_pairs(ad::Tape& tape, ad::Var x, const PairSelection& pairs) const {
  if (reduce_w_ == nullptr) throw ConfigError("concat_pairs: head has no pair reducer");
  if (x.cols() != d_) throw ShapeError("concat_pairs: embeddings have " + std::to_string(x.cols()) + " columns");
  return ad::linear(pair_concat(x, pairs), tape.param(*reduce_w_), tape.param(*reduce_b_));
}

ad::Var RelativeHead::cross_attention_predict(ad::Tape& tape, ad::Var pair_embedding, ad::Var x) const {
  if (out_w_ == nullptr || reduce_w_ == nullptr) throw ConfigError("cross_attention_predict: not a cross-attention head");
  if (pair_embedding.cols() != d_ || x.cols() != d_) {
    throw ShapeError("cross_attention_predict: expected width " + std::to_string(d_) + ", got " +
                     shape_string(pair_embedding.value()) + " and " + shape_string(x.value()));
  }
  ad::Var keys = key_w_ != nullptr ? ad::matmul(x, tape.param(*key_w_)) : x;
  ad::Var values = value_w_ != nullptr ? ad::matmul(x, tape.param(*value_w_)) : x;
  const auto heads = static_cast<std::size_t>(config_.heads);
  const std::size_t hd = d_ / heads;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(hd));
  ad::Var context;
  if (heads == 1) {
    context = ad::matmul(ad::row_softmax(ad::scale(ad::matmul_nt(pair_embedding, keys), inv_sqrt)), values);
  } else {
    std::vector<ad::Var> parts;
    for (std::size_t h = 0; h < heads; ++h) {
      ad::Var q = ad::slice_cols(pair_embedding, h * hd, hd);
      ad::Var k = ad::slice_cols(keys, h * hd, hd);
      ad::Var v = ad::slice_cols(values, h * hd, hd);
      parts.push_back(ad::matmul(ad::row_softmax(ad::scale(ad::matmul_nt(q, k), inv_sqrt)), v));
    }
    context = ad::concat_cols(parts);
  }
  if (config_.query_residual) context = ad::add(context, pair_embedding);
  return ad::linear(context, tape.param(*out_w_), tape.param(*out_b_));
}

ad::Var RelativeHead::pairwise_mlp_predict(ad::Tape& tape, ad::Var x, const PairSelection& pairs) const {
  if (hidden_w_ == nullptr) throw ConfigError("pairwise_mlp_predict: not a pairwise MLP head");
  if (x.cols() != d_) throw ShapeError("pairwise_mlp_predict: embeddings have " + std::to_string(x.cols()) + " columns");
  ad::Var h = ad::gelu(ad::linear(pair_concat(x, pairs), tape.param(*hidden_w_), tape.param(*hidden_b_)));
  return ad::linear(h, tape.param(*out_w_), tape.param(*out_b_));
}

ad::Var RelativeHead::full_mlp_predict(ad::Tape& tape, ad::Var x, const PairSelection& pairs) const {
  if (full_w_ == nullptr) throw ConfigError("full_mlp_predict: not a full MLP head");
  const auto n = static_cast<std::size_t>(config_.patch_count);
  if (x.rows() != n || x.cols() != d_) {
    throw ConfigError("full MLP head built for " + std::to_string(n) + " patches of width " + std::to_string(d_) +
                      ", got " + shape_string(x.value()));
  }
  const std::size_t a = arity();
  std::vector<std::size_t> outputs;
  outputs.reserve(pairs.count() * a);
  for (const auto& [i, j] : pairs.pairs) {
    if (i >= n || j >= n) throw ShapeError("full_mlp_predict: pair index out of range");
    if (i == j) throw ConfigError("pair (" + std::to_string(i) + ", " + std::to_string(j) + ") is a self-pair");
    for (std::size_t k = 0; k < a; ++k) outputs.push_back((i * n + j) * a + k);
  }
  ad::Var flat = ad::reshape(x, 1, n * d_);
  ad::Var out = ad::linear_select(flat, tape.param(*full_w_), tape.param(*full_b_), outputs);
  return ad::reshape(out, pairs.count(), a);
}

ad::Var pretrain_loss(ad::Var prediction, ad::Var truth) { return ad::mse(prediction, truth); }

}  // namespace part
