#include <gtest/gtest.h>

#include <cmath>

#include "part/error.hpp"
#include "part/gradcheck.hpp"
#include "part/model.hpp"
#include "test_util.hpp"

using namespace part;

TEST(GradCheck, ExactGradientOnQuadratic) {
  ParameterStore store;
  Rng rng(1);
  Parameter& p = store.add("p", 3, 3, Init::trunc_normal, rng, 1.0);
  auto loss = [&](ad::Tape& t) { return ad::mse(t.param(p), t.constant(Tensor(3, 3, 0.5))); };
  std::vector<Parameter*> ps{&p};
  const GradCheckResult r = grad_check(loss, ps);
  EXPECT_EQ(r.coordinates_checked, 9u);
  EXPECT_LE(r.max_rel_error, 1e-8);
}

TEST(GradCheck, DetectsAWrongGradient) {
  ParameterStore store;
  Rng rng(1);
  Parameter& p = store.add("p", 1, 4, Init::trunc_normal, rng, 1.0);
  // Custom op whose adjoint is off by a factor of two.
  auto loss = [&](ad::Tape& t) {
    ad::Var x = t.param(p);
    double v = 0;
    for (double e : p.value.data()) v += e * e;
    const std::size_t xid = x.id();
    ad::Var y = t.record(Tensor::scalar(v), true, [xid](ad::Tape& tape, std::size_t self) {
      const double g = tape.grad_of(self).item();
      Tensor& gx = tape.grad_of(xid);
      for (std::size_t k = 0; k < gx.size(); ++k) gx[k] += g * 4.0 * tape.value_of(xid)[k];
    });
    return y;
  };
  std::vector<Parameter*> ps{&p};
  const GradCheckResult r = grad_check(loss, ps);
  EXPECT_NEAR(r.max_rel_error, 1.0 / 3.0, 1e-6);
  EXPECT_EQ(r.worst_param, "p");
  EXPECT_NEAR(r.worst_analytic, 2.0 * r.worst_numeric, 1e-6 * std::abs(r.worst_numeric) + 1e-9);
}

TEST(GradCheck, SamplesAtMostTheRequestedCoordinates) {
  ParameterStore store;
  Rng rng(1);
  Parameter& p = store.add("p", 10, 10, Init::trunc_normal, rng, 1.0);
  auto loss = [&](ad::Tape& t) { return ad::sum(ad::gelu(t.param(p))); };
  std::vector<Parameter*> ps{&p};
  EXPECT_EQ(grad_check(loss, ps, {1e-5, 7, 3}).coordinates_checked, 7u);
  EXPECT_EQ(grad_check(loss, {}, {}).coordinates_checked, 0u);
}

TEST(GradCheck, ErrorPaths) {
  ParameterStore store;
  Rng rng(1);
  Parameter& p = store.add("p", 1, 2, Init::zeros, rng);
  std::vector<Parameter*> ps{&p};
  auto loss = [&](ad::Tape& t) { return ad::sum(t.param(p)); };
  EXPECT_THROW(grad_check(loss, ps, {1e-3, 10, 0}), ConfigError);
  EXPECT_THROW(grad_check(loss, ps, {1e-8, 10, 0}), ConfigError);
  auto nan_loss = [&](ad::Tape& t) { return ad::scale(ad::sum(t.param(p)), std::nan("")); };
  EXPECT_THROW(grad_check(nan_loss, ps), NumericError);
}

TEST(GradCheck, ScaleWeightsTouchesOnlyDecayedParameters) {
  ParameterStore store;
  Rng rng(1);
  Parameter& w = store.add("w", 2, 2, Init::trunc_normal, rng);
  Parameter& g = store.add("g", 1, 2, Init::ones, rng);
  const Tensor w0 = w.value;
  scale_weights(store, 10.0);
  for (std::size_t k = 0; k < 4; ++k) EXPECT_DOUBLE_EQ(w.value[k], 10.0 * w0[k]);
  EXPECT_EQ(g.value[0], 1.0);
}

class ModelGradCheck : public ::testing::TestWithParam<HeadKind> {};

TEST_P(ModelGradCheck, FullPretextLossAtScaledWeights) {
  for (bool signal : {false, true}) {
    const ModelConfig cfg = signal ? test::tiny_signal_config(GetParam()) : test::tiny_config(GetParam());
    PartModel model(cfg, 3);
    scale_weights(model.params(), 10.0);
    Rng boxes(4), pairs(5);
    const Image img = test::random_image(cfg.dims, 6);
    const PretextSample s =
        make_pretext_sample(img, cfg.sampler, cfg.head.target, 8, boxes, pairs, cfg.vit.patch_size);
    auto loss = [&](ad::Tape& t) {
      return pretrain_loss(model.predict(t, s.seq, s.pairs), t.constant(s.targets));
    };
    std::vector<Parameter*> ps = model.params().all();
    const GradCheckResult r = grad_check(loss, ps, {1e-5, 30, 7});
    EXPECT_LE(r.max_rel_error, 1e-4) << (signal ? "signal " : "image ") << r.worst_param;
  }
}

INSTANTIATE_TEST_SUITE_P(Heads, ModelGradCheck,
                         ::testing::Values(HeadKind::cross_attention, HeadKind::pairwise_mlp, HeadKind::full_mlp));
