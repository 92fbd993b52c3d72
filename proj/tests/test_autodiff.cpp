#include <gtest/gtest.h>

#include <cmath>
#include <functional>
#include <vector>

#include "part/autodiff.hpp"
#include "part/error.hpp"
#include "part/gradcheck.hpp"
#include "part/params.hpp"
#include "test_util.hpp"

using namespace part;
using ad::Tape;
using ad::Var;

namespace {

struct OpFixture {
  ParameterStore store;
  Rng rng{17};
  Parameter& a;
  Parameter& b;
  Parameter& row;
  Tensor target;

  OpFixture(std::size_t r, std::size_t c, std::size_t bc)
      : a(store.add("a", r, c, Init::trunc_normal, rng, 0.5)),
        b(store.add("b", c, bc, Init::trunc_normal, rng, 0.5)),
        row(store.add("row", 1, c, Init::trunc_normal, rng, 0.5)) {
    Rng t(99);
    target = test::random_tensor(r, c, t);
  }

  double check(const std::function<Var(Tape&, Var, Var, Var)>& op) {
    auto loss = [&](Tape& tape) {
      Var y = op(tape, tape.param(a), tape.param(b), tape.param(row));
      Rng t(5);
      Tensor proj = test::random_tensor(y.cols(), 3, t);
      Var z = ad::matmul(y, tape.constant(proj));
      Tensor goal(z.rows(), z.cols(), 0.25);
      return ad::mse(z, tape.constant(goal));
    };
    std::vector<Parameter*> ps = store.all();
    return grad_check(loss, ps, {1e-5, 200, 1}).max_rel_error;
  }
};

}  // namespace

#define OP_GRAD_TEST(Name, R, C, BC, Expr)                                    \
  TEST(AutodiffGrad, Name) {                                                 \
    OpFixture f(R, C, BC);                                                   \
    EXPECT_LE(f.check([&]([[maybe_unused]] Tape& tape, [[maybe_unused]] Var a, [[maybe_unused]] Var b, \
                       [[maybe_unused]] Var row) { return Expr; }), 1e-6); \
  }

OP_GRAD_TEST(Matmul, 3, 4, 5, ad::matmul(a, b))
OP_GRAD_TEST(MatmulNt, 3, 4, 3, ad::matmul_nt(a, ad::reshape(b, 3, 4)))
OP_GRAD_TEST(AddAndAddRow, 3, 4, 4, ad::add_row(ad::add(a, ad::slice_rows(ad::concat_rows(a, a), 1, 3)), row))
OP_GRAD_TEST(Linear, 3, 4, 5, ad::linear(a, b, ad::slice_cols(ad::concat_last_dim(row, row), 3, 5)))
OP_GRAD_TEST(LinearNoBias, 3, 4, 5, ad::linear(a, b, Var()))
OP_GRAD_TEST(ScaleGelu, 3, 4, 2, ad::gelu(ad::scale(a, 2.5)))
OP_GRAD_TEST(RowSoftmax, 3, 4, 2, ad::row_softmax(ad::scale(a, 3.0)))
OP_GRAD_TEST(Layernorm, 3, 4, 4, ad::layernorm(ad::matmul(a, b), row, ad::scale(row, -0.5)))
OP_GRAD_TEST(ConcatSlice, 3, 4, 2,
             ad::slice_cols(ad::concat_cols(std::vector<Var>{a, ad::gelu(a), a}), 2, 7))
OP_GRAD_TEST(GatherRows, 3, 4, 2, ad::gather_rows(a, std::vector<std::size_t>{2, 0, 2, 1}))
OP_GRAD_TEST(Reshape, 3, 4, 2, ad::reshape(ad::gelu(a), 6, 2))
OP_GRAD_TEST(LinearSelect, 1, 4, 4,
             ad::linear_select(a, ad::reshape(b, 4, 4), row, std::vector<std::size_t>{3, 1, 1}))

TEST(AutodiffGrad, SoftmaxCrossEntropy) {
  ParameterStore store;
  Rng rng(3);
  Parameter& logits = store.add("logits", 4, 5, Init::trunc_normal, rng, 1.0);
  const std::vector<int> labels{0, 4, 2, 2};
  auto loss = [&](Tape& tape) { return ad::softmax_cross_entropy(tape.param(logits), labels); };
  std::vector<Parameter*> ps = store.all();
  EXPECT_LE(grad_check(loss, ps).max_rel_error, 1e-6);
}

TEST(AutodiffGrad, SumOfSquares) {
  ParameterStore store;
  Rng rng(3);
  Parameter& x = store.add("x", 2, 3, Init::trunc_normal, rng, 1.0);
  auto loss = [&](Tape& tape) {
    Var v = tape.param(x);
    return ad::sum(ad::mse(v, tape.constant(Tensor(2, 3, 0.1))));
  };
  std::vector<Parameter*> ps = store.all();
  EXPECT_LE(grad_check(loss, ps).max_rel_error, 1e-6);
}

TEST(Autodiff, ForwardValuesMatchClosedForm) {
  Tape tape;
  Var x = tape.constant(Tensor(1, 3, std::vector<double>{1.0, 2.0, 3.0}));
  const Tensor& s = ad::row_softmax(x).value();
  const double z = std::exp(1.0) + std::exp(2.0) + std::exp(3.0);
  EXPECT_NEAR(s[0], std::exp(1.0) / z, 1e-15);
  EXPECT_NEAR(s[2], std::exp(3.0) / z, 1e-15);
  const Tensor& ln = ad::layernorm(x, tape.constant(Tensor(1, 3, 1.0)), tape.constant(Tensor(1, 3, 0.0)), 0.0).value();
  EXPECT_NEAR(ln[0], -std::sqrt(1.5), 1e-12);
  EXPECT_NEAR(ln[1], 0.0, 1e-12);
  EXPECT_NEAR(ad::gelu(tape.constant(Tensor::scalar(0.0))).value().item(), 0.0, 1e-15);
  EXPECT_NEAR(ad::mse(x, tape.constant(Tensor(1, 3, 0.0))).value().item(), 14.0 / 3.0, 1e-15);
  const std::vector<int> label{1};
  EXPECT_NEAR(ad::softmax_cross_entropy(tape.constant(Tensor(1, 4, 0.0)), label).value().item(), std::log(4.0), 1e-15);
}

TEST(Autodiff, SoftmaxIsStableForLargeLogits) {
  Tape tape;
  Var x = tape.constant(Tensor(1, 2, std::vector<double>{1000.0, 999.0}));
  const Tensor& s = ad::row_softmax(x).value();
  EXPECT_TRUE(s.all_finite());
  EXPECT_NEAR(s[0], 1.0 / (1.0 + std::exp(-1.0)), 1e-12);
}

TEST(Autodiff, InputLeafReceivesGradient) {
  Tape tape;
  Var x = tape.input(Tensor(1, 2, std::vector<double>{3.0, -1.0}));
  Var loss = ad::sum(ad::matmul_nt(x, x));
  tape.backward(loss);
  EXPECT_DOUBLE_EQ(x.grad()[0], 6.0);
  EXPECT_DOUBLE_EQ(x.grad()[1], -2.0);
}

TEST(Autodiff, FrozenParameterGetsNoGradientAndSinkAccumulates) {
  ParameterStore store;
  Rng rng(1);
  Parameter& w = store.add("w", 2, 2, Init::ones, rng);
  Parameter& f = store.add("f", 2, 2, Init::ones, rng);
  std::vector<Tensor> sink = make_gradient_buffer(store);
  for (int rep = 0; rep < 2; ++rep) {
    Tape tape;
    Var loss = ad::sum(ad::matmul(tape.param(w), tape.frozen(f)));
    tape.backward(loss, sink);
  }
  for (double g : sink[0].data()) EXPECT_DOUBLE_EQ(g, 4.0);
  for (double g : sink[1].data()) EXPECT_DOUBLE_EQ(g, 0.0);
  for (double g : w.grad.data()) EXPECT_DOUBLE_EQ(g, 0.0);
}

TEST(Autodiff, ErrorPaths) {
  Tape tape, other;
  Var a = tape.constant(Tensor(2, 3));
  Var b = tape.constant(Tensor(2, 3));
  EXPECT_THROW(ad::matmul(a, b), ShapeError);
  EXPECT_THROW(ad::add(a, other.constant(Tensor(2, 3))), ShapeError);
  EXPECT_THROW(ad::slice_cols(a, 2, 2), ShapeError);
  EXPECT_THROW(ad::gather_rows(a, std::vector<std::size_t>{2}), ShapeError);
  EXPECT_THROW(ad::reshape(a, 4, 2), ShapeError);
  EXPECT_THROW(ad::softmax_cross_entropy(a, std::vector<int>{0}), ShapeError);
  EXPECT_THROW(ad::softmax_cross_entropy(a, std::vector<int>{0, 3}), ShapeError);
  EXPECT_THROW(ad::concat_cols(std::vector<Var>{}), ShapeError);
  EXPECT_THROW(ad::add(a, Var()), ShapeError);
  EXPECT_THROW(tape.backward(a), ShapeError);
  EXPECT_THROW(other.backward(ad::sum(a)), ShapeError);
}
