#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "part/backbone.hpp"
#include "part/error.hpp"
#include "part/gradcheck.hpp"
#include "test_util.hpp"

using namespace part;

namespace {

ViTConfig small_vit(bool cls = true) {
  ViTConfig c;
  c.embed_dim = 16;
  c.depth = 2;
  c.heads = 2;
  c.mlp_ratio = 2;
  c.patch_size = 4;
  c.use_cls = cls;
  return c;
}

Tensor random_rows(std::size_t rows, std::size_t cols, std::uint64_t seed) {
  Rng rng(seed);
  return test::random_tensor(rows, cols, rng);
}

}  // namespace

TEST(Backbone, PatchShapeAndDim) {
  EXPECT_EQ(patch_dim({32, 32, 3}, 4), 48u);
  EXPECT_EQ(patch_dim({1, 300, 2}, 10), 20u);
  EXPECT_EQ(patch_shape({1, 300, 2}, 10).height, 1);
}

TEST(Backbone, ExtractAndResizeRowsMatchResample) {
  const Image img = test::random_image({12, 12, 3}, 2);
  const std::vector<PatchBox> boxes{{0, 0, 6, 6}, {5, 3, 4, 4}, {2, 7, 5, 5}};
  const PatchSequence seq = extract_and_resize(img, boxes, 4);
  ASSERT_EQ(seq.values.rows(), 3u);
  ASSERT_EQ(seq.values.cols(), 48u);
  EXPECT_EQ(seq.source_boxes, boxes);
  std::vector<double> expect(48);
  for (std::size_t i = 0; i < boxes.size(); ++i) {
    resample_box(img, boxes[i], 4, 4, expect);
    for (std::size_t k = 0; k < 48; ++k) EXPECT_EQ(seq.values(i, k), expect[k]);
  }
}

TEST(Backbone, OneDimensionalWindowsAreInstanceNormalized) {
  Image sig({1, 50, 2});
  for (int x = 0; x < 50; ++x) {
    sig.at(0, x, 0) = 3.0 + 0.1 * x;
    sig.at(0, x, 1) = std::sin(0.3 * x) * 5.0;
  }
  const std::vector<PatchBox> w{{0, 0, 10, 1}, {20, 0, 16, 1}};
  const PatchSequence seq = extract_and_resize(sig, w, 8);
  ASSERT_EQ(seq.values.cols(), 16u);
  for (std::size_t r = 0; r < 2; ++r) {
    for (int c = 0; c < 2; ++c) {
      double m = 0, v = 0;
      for (int t = 0; t < 8; ++t) m += seq.values(r, static_cast<std::size_t>(t * 2 + c));
      m /= 8;
      for (int t = 0; t < 8; ++t) v += std::pow(seq.values(r, static_cast<std::size_t>(t * 2 + c)) - m, 2);
      EXPECT_NEAR(m, 0.0, 1e-12);
      EXPECT_NEAR(v / 8, 1.0, 1e-12);
    }
  }
}

TEST(Backbone, OutputShapeWithAndWithoutCls) {
  for (bool cls : {true, false}) {
    ParameterStore store;
    Rng rng(1);
    VisionTransformer vit(small_vit(cls), 48, store, rng);
    PatchSequence seq{random_rows(5, 48, 3), {}};
    ad::Tape tape;
    ad::Var x = vit.forward(tape, seq);
    EXPECT_EQ(x.rows(), cls ? 6u : 5u);
    EXPECT_EQ(x.cols(), 16u);
    EXPECT_EQ(vit.patch_rows(x).rows(), 5u);
    EXPECT_EQ(vit.cls_offset(), cls ? 1u : 0u);
  }
}

TEST(Backbone, EncoderIsPermutationEquivariantWithoutPositions) {
  ParameterStore store;
  Rng rng(4);
  VisionTransformer vit(small_vit(), 48, store, rng);
  scale_weights(store, 10.0);
  PatchSequence seq{random_rows(6, 48, 5), {}};
  const std::vector<std::size_t> perm{3, 0, 5, 1, 4, 2};
  PatchSequence shuffled{Tensor(6, 48), {}};
  for (std::size_t i = 0; i < 6; ++i)
    for (std::size_t k = 0; k < 48; ++k) shuffled.values(i, k) = seq.values(perm[i], k);
  ad::Tape tape;
  const Tensor a = vit.forward(tape, seq).value();
  const Tensor b = vit.forward(tape, shuffled).value();
  for (std::size_t k = 0; k < 16; ++k) EXPECT_NEAR(a(0, k), b(0, k), 1e-10);
  for (std::size_t i = 0; i < 6; ++i)
    for (std::size_t k = 0; k < 16; ++k) EXPECT_NEAR(b(i + 1, k), a(perm[i] + 1, k), 1e-10);
}

TEST(Backbone, PositionalTableBreaksEquivarianceAndStaysTrainableWhenFrozen) {
  ParameterStore store;
  Rng rng(4);
  VisionTransformer vit(small_vit(), 48, store, rng);
  vit.enable_positional(store, 7, rng);
  ASSERT_NE(store.find("vit.pos"), nullptr);
  EXPECT_FALSE(store.at("vit.pos").decay);
  vit.set_frozen(true);
  std::vector<Tensor> sink = make_gradient_buffer(store);
  ad::Tape tape;
  PatchSequence seq{random_rows(6, 48, 5), {}};
  tape.backward(ad::sum(vit.forward(tape, seq)), sink);
  for (std::size_t i = 0; i < store.size(); ++i) {
    double norm = 0;
    for (double g : sink[i].data()) norm += std::abs(g);
    if (store[i].name == "vit.pos") {
      EXPECT_GT(norm, 0.0);
    } else {
      EXPECT_EQ(norm, 0.0) << store[i].name;
    }
  }
  PatchSequence too_long{random_rows(7, 48, 5), {}};
  EXPECT_THROW(vit.forward(tape, too_long), ShapeError);
}

TEST(Backbone, EmbedEncodeGradientMatchesFiniteDifferences) {
  ParameterStore store;
  Rng rng(6);
  VisionTransformer vit(small_vit(), 48, store, rng);
  scale_weights(store, 10.0);
  PatchSequence seq{random_rows(5, 48, 7), {}};
  const Tensor proj = random_rows(16, 2, 8);
  auto loss = [&](ad::Tape& tape) {
    ad::Var y = ad::matmul(vit.forward(tape, seq), tape.constant(proj));
    return ad::mse(y, tape.constant(Tensor(y.rows(), y.cols(), 0.0)));
  };
  std::vector<Parameter*> ps = store.all();
  const GradCheckResult r = grad_check(loss, ps, {1e-5, 40, 2});
  EXPECT_LE(r.max_rel_error, 1e-5) << r.worst_param << "[" << r.worst_index << "]";
}

TEST(Backbone, ConfigValidation) {
  ViTConfig c = small_vit();
  c.heads = 3;
  EXPECT_THROW(c.validate(true), ConfigError);
  c = small_vit();
  c.use_positional = true;
  EXPECT_THROW(c.validate(true), ConfigError);
  EXPECT_NO_THROW(c.validate(false));
  c = small_vit();
  c.embed_dim = 0;
  EXPECT_THROW(c.validate(false), ConfigError);
  ParameterStore store;
  Rng rng(1);
  VisionTransformer vit(small_vit(), 48, store, rng);
  ad::Tape tape;
  PatchSequence wrong{Tensor(3, 47), {}};
  EXPECT_THROW(vit.embed(tape, wrong), ShapeError);
  EXPECT_THROW(vit.add_positional(tape, tape.constant(Tensor(3, 16))), ConfigError);
  EXPECT_THROW(vit.enable_positional(store, 0, rng), ConfigError);
}
