#include <memory>

#include "gtest/gtest.h"

#include "elastic/block.hpp"
#include "elastic/gradcheck.hpp"
#include "elastic/ops.hpp"
#include "testutil.hpp"

namespace elastic {
namespace {

using eltest::random_tensor;

// The checker itself needs an oracle: a hand-built op whose backward lies
// must be caught, otherwise every pass result is meaningless.
TEST(GradCheckHarness, CatchesWrongAnalyticGradient) {
  auto wrong_double = [](const std::vector<TensorRef>& in) {
    auto x = in[0];
    auto y = Tensor::create(x->shape);
    for (i64 i = 0; i < x->numel(); ++i) y->data[i] = 2.0f * x->data[i];
    y->parents = {x};
    y->backward_fn = [x](Tensor& self) {
      x->ensure_grad();
      for (i64 i = 0; i < x->numel(); ++i)
        x->grad[i] += 3.0f * self.grad[i];  // claims d/dx = 3, truth is 2
    };
    return y;
  };
  Pcg32 rng(1, 1);
  auto report =
      grad_check(wrong_double, {random_tensor({1, 1, 2, 2}, rng, 1.0f, true)},
                 1e-3);
  EXPECT_FALSE(report.pass);
  EXPECT_GT(report.max_rel_err, 0.2);
  EXPECT_FALSE(report.worst.empty());
}

TEST(GradCheckHarness, PassesExactLinearOp) {
  Pcg32 rng(2, 1);
  auto x = random_tensor({1, 2, 3, 3}, rng, 1.0f, true);
  auto report = grad_check(
      [](const std::vector<TensorRef>& in) { return add(in[0], in[0]); }, {x},
      1e-3);
  EXPECT_TRUE(report.pass);
  EXPECT_LT(report.max_rel_err, 1e-3);
}

TEST(GradCheckHarness, ProbeBudgetLimitsWork) {
  Pcg32 rng(3, 1);
  auto x = random_tensor({1, 4, 8, 8}, rng, 1.0f, true);
  auto report = grad_check(
      [](const std::vector<TensorRef>& in) { return relu(in[0]); }, {x}, 1e-2,
      1e-3, 17, 9);
  EXPECT_TRUE(report.pass);
  EXPECT_LE(report.probed, 17);
  EXPECT_GT(report.probed, 0);
}

TEST(GradCheckOps, ConvBatchNormLinearPass) {
  Pcg32 rng(5, 1);
  {
    auto p = ConvParams::create(4, 6, 3, 1, 1, 2, true, rng);
    p.weight->requires_grad = true;
    p.bias->requires_grad = true;
    auto x = random_tensor({2, 4, 6, 6}, rng, 1.0f, true);
    auto r = grad_check(
        [&p](const std::vector<TensorRef>& in) { return conv2d(in[0], p); },
        {x, p.weight, p.bias}, 1e-3);
    EXPECT_TRUE(r.pass) << r.worst;
  }
  {
    auto p = std::make_shared<NormParams>(NormParams::create(3));
    p->gamma->requires_grad = true;
    p->beta->requires_grad = true;
    auto x = random_tensor({2, 3, 5, 5}, rng, 1.0f, true);
    for (auto mode : {NormParams::Mode::train, NormParams::Mode::eval}) {
      p->mode = mode;
      auto r = grad_check(
          [p](const std::vector<TensorRef>& in) {
            return batch_norm(in[0], *p);
          },
          {x, p->gamma, p->beta}, 1e-3);
      EXPECT_TRUE(r.pass) << r.worst;
    }
  }
  {
    auto p = LinearParams::create(8, 3, rng);
    p.weight->requires_grad = true;
    p.bias->requires_grad = true;
    auto x = random_tensor({2, 2, 2, 2}, rng, 1.0f, true);
    auto r = grad_check(
        [&p](const std::vector<TensorRef>& in) { return linear(in[0], p); },
        {x, p.weight, p.bias}, 1e-3);
    EXPECT_TRUE(r.pass) << r.worst;
  }
}

TEST(GradCheckOps, ResamplersPass) {
  Pcg32 rng(6, 1);
  auto x = random_tensor({1, 3, 6, 6}, rng, 1.0f, true);
  for (auto op : {
           OpFn([](const std::vector<TensorRef>& in) {
             return avg_pool2(in[0]);
           }),
           OpFn([](const std::vector<TensorRef>& in) {
             return bilinear_resize(in[0], 12, 12);
           }),
           OpFn([](const std::vector<TensorRef>& in) {
             return bilinear_resize(in[0], 3, 3);
           }),
           OpFn([](const std::vector<TensorRef>& in) {
             return nearest_resize(in[0], 12, 12);
           }),
           OpFn([](const std::vector<TensorRef>& in) {
             return global_avg_pool(in[0]);
           }),
       }) {
    auto r = grad_check(op, {x}, 1e-3);
    EXPECT_TRUE(r.pass) << r.worst;
  }
}

// Deep chains stack three nonlinear stages; the shifted-norm regime (see
// testutil.hpp) keeps every relu input off the kink so the numeric side
// stays a derivative estimate.
TEST(GradCheckComposition, FullBlockWithinLooseTolerance) {
  Pcg32 rng(8, 1);
  ElasticBlockSpec bs;
  bs.kind = BlockKind::resnext_bottleneck;
  bs.in_channels = 8;
  bs.bottleneck_channels = 8;
  bs.out_channels = 8;
  bs.stride = 1;
  bs.residual = true;
  bs.branches = {{1, Rational(1, 2), 4}, {2, Rational(1, 2), 4}};
  bs.validate();
  auto params = std::make_shared<BlockParams>(make_block(bs, rng));
  std::vector<TensorRef> inputs{random_tensor({2, 8, 8, 8}, rng, 0.5f, true)};
  eltest::shift_norms_off_kink(*params, &inputs);
  auto r = grad_check(
      [params](const std::vector<TensorRef>& in) {
        return block_forward(in[0], *params);
      },
      inputs, 1e-2);
  EXPECT_TRUE(r.pass) << r.worst;
  EXPECT_LT(r.max_rel_err, 1e-2);
}

// Without relu in the chain the composition is smooth and must check out at
// the strict tolerance; this is what separates "kink artifact" from "wrong
// chain rule" whenever the loose block case regresses.
TEST(GradCheckComposition, SmoothChainAtStrictTolerance) {
  Pcg32 rng(9, 1);
  auto c1 = ConvParams::create(6, 4, 1, 1, 0, 1, false, rng);
  auto b1 = std::make_shared<NormParams>(NormParams::create(4));
  auto c2 = ConvParams::create(4, 4, 3, 1, 1, 2, false, rng);
  auto b2 = std::make_shared<NormParams>(NormParams::create(4));
  c1.weight->requires_grad = true;
  c2.weight->requires_grad = true;
  auto x = random_tensor({2, 6, 6, 6}, rng, 1.0f, true);
  auto r = grad_check(
      [&, b1, b2](const std::vector<TensorRef>& in) {
        auto h = batch_norm(conv2d(in[0], c1), *b1);
        return batch_norm(conv2d(h, c2), *b2);
      },
      {x, c1.weight, c2.weight}, 1e-3);
  EXPECT_TRUE(r.pass) << r.worst;
}

}  // namespace
}  // namespace elastic
