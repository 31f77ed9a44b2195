#include <cmath>
#include <cstring>

#include "gtest/gtest.h"

#include "elastic/ops.hpp"
#include "testutil.hpp"

namespace elastic {
namespace {

using eltest::naive_conv2d;
using eltest::random_tensor;

double max_abs_diff(const std::vector<float>& got,
                    const std::vector<double>& want) {
  EXPECT_EQ(got.size(), want.size());
  double worst = 0.0;
  for (size_t i = 0; i < got.size(); ++i)
    worst = std::max(worst, std::abs(static_cast<double>(got[i]) - want[i]));
  return worst;
}

struct ConvCase {
  i64 n, cin, h, w, cout;
  int k, stride, padding, groups;
  bool bias;
};

TEST(Conv2d, MatchesNaiveLoopOracle) {
  const ConvCase cases[] = {
      {2, 3, 8, 8, 5, 3, 1, 1, 1, true},
      {1, 4, 7, 9, 6, 3, 2, 1, 2, false},
      {2, 8, 5, 5, 8, 1, 1, 0, 1, true},
      {1, 8, 6, 6, 8, 1, 1, 0, 4, false},
      {1, 2, 11, 11, 4, 5, 1, 2, 1, false},
      {2, 6, 9, 7, 6, 3, 3, 1, 3, true},
  };
  Pcg32 rng(11, 1);
  for (const auto& c : cases) {
    auto p = ConvParams::create(c.cin, c.cout, c.k, c.stride, c.padding,
                                c.groups, c.bias, rng);
    auto x = random_tensor({c.n, c.cin, c.h, c.w}, rng);
    auto y = conv2d(x, p);
    Shape want_shape;
    auto want = naive_conv2d(*x, *p.weight, c.bias ? p.bias.get() : nullptr,
                             c.stride, c.padding, c.groups, &want_shape);
    ASSERT_EQ(y->shape, want_shape);
    EXPECT_LT(max_abs_diff(y->data, want), 2e-4)
        << "k=" << c.k << " stride=" << c.stride << " groups=" << c.groups;
  }
}

TEST(Conv2d, RepeatRunsAreBitIdentical) {
  Pcg32 rng(3, 1);
  auto p = ConvParams::create(16, 32, 3, 1, 1, 4, false, rng);
  auto x = random_tensor({2, 16, 14, 14}, rng);
  auto a = conv2d(x, p);
  auto b = conv2d(x, p);
  EXPECT_EQ(0, std::memcmp(a->data.data(), b->data.data(),
                           a->data.size() * sizeof(float)));
}

TEST(Conv2d, RejectsChannelMismatch) {
  Pcg32 rng(1, 1);
  auto p = ConvParams::create(4, 8, 3, 1, 1, 1, false, rng);
  auto x = random_tensor({1, 3, 8, 8}, rng);
  EXPECT_THROW(conv2d(x, p), InputError);
}

TEST(ConvTranspose, IsAdjointOfConv) {
  // <conv(x), y> == <x, conv_transpose(y)> with the shared weight, which
  // pins the scatter/gather pair to each other without a second formula.
  Pcg32 rng(7, 1);
  for (int stride : {1, 2}) {
    auto p = ConvParams::create(3, 5, 2, stride, 0, 1, false, rng);
    auto x = random_tensor({2, 3, 8, 8}, rng);
    auto cx = conv2d(x, p);
    auto y = random_tensor(cx->shape, rng);
    auto ty = conv2d_transpose(y, p);
    ASSERT_EQ(ty->shape, x->shape);
    double lhs = 0.0, rhs = 0.0;
    for (i64 i = 0; i < cx->numel(); ++i)
      lhs += static_cast<double>(cx->data[i]) * y->data[i];
    for (i64 i = 0; i < x->numel(); ++i)
      rhs += static_cast<double>(x->data[i]) * ty->data[i];
    EXPECT_NEAR(lhs, rhs, 1e-2 * std::max(1.0, std::abs(lhs)));
  }
}

TEST(ConvTranspose, DoublesResolutionWithStride2) {
  Pcg32 rng(2, 1);
  auto p = ConvParams::create(4, 4, 2, 2, 0, 1, false, rng);
  auto x = random_tensor({1, 4, 5, 5}, rng);
  EXPECT_EQ(conv2d_transpose(x, p)->shape, (Shape{1, 4, 10, 10}));
}

TEST(BatchNorm, TrainModeMatchesBatchStatisticsOracle) {
  Pcg32 rng(13, 1);
  auto p = NormParams::create(3);
  for (auto& v : p.gamma->data) v = 0.5f + rng.next_float();
  for (auto& v : p.beta->data) v = static_cast<float>(rng.next_gaussian());
  auto x = random_tensor({4, 3, 5, 5}, rng, 2.0f);
  auto y = batch_norm(x, p);

  const i64 per = x->shape.n * x->shape.h * x->shape.w;
  for (i64 c = 0; c < 3; ++c) {
    double mean = 0.0, var = 0.0;
    for (i64 n = 0; n < 4; ++n)
      for (i64 h = 0; h < 5; ++h)
        for (i64 w = 0; w < 5; ++w) mean += x->at(n, c, h, w);
    mean /= static_cast<double>(per);
    for (i64 n = 0; n < 4; ++n)
      for (i64 h = 0; h < 5; ++h)
        for (i64 w = 0; w < 5; ++w) {
          double d = x->at(n, c, h, w) - mean;
          var += d * d;
        }
    var /= static_cast<double>(per);  // biased, as used for normalization
    for (i64 n = 0; n < 4; ++n)
      for (i64 h = 0; h < 5; ++h)
        for (i64 w = 0; w < 5; ++w) {
          double want = (x->at(n, c, h, w) - mean) / std::sqrt(var + 1e-5) *
                            p.gamma->data[c] +
                        p.beta->data[c];
          EXPECT_NEAR(y->at(n, c, h, w), want, 1e-4);
        }
    // Running stats blend in the unbiased batch variance.
    double unbiased = var * per / static_cast<double>(per - 1);
    EXPECT_NEAR(p.running_mean[c], 0.1 * mean, 1e-5);
    EXPECT_NEAR(p.running_var[c], 0.9 * 1.0 + 0.1 * unbiased, 1e-4);
  }
}

TEST(BatchNorm, EvalModeIsFrozenAffine) {
  auto p = NormParams::create(2);
  p.mode = NormParams::Mode::eval;
  p.running_mean = {1.0f, -1.0f};
  p.running_var = {4.0f, 0.25f};
  p.gamma->data = {2.0f, 3.0f};
  p.beta->data = {0.5f, -0.5f};
  auto x = Tensor::from({1, 2, 1, 2}, {3.0f, 1.0f, 0.0f, -2.0f});
  auto y = batch_norm(x, p);
  EXPECT_NEAR(y->at(0, 0, 0, 0), 2.0f * (3.0f - 1.0f) / std::sqrt(4.0f + 1e-5f) + 0.5f, 1e-5);
  EXPECT_NEAR(y->at(0, 0, 0, 1), 0.5f, 1e-5);
  EXPECT_NEAR(y->at(0, 1, 0, 0), 3.0f * 1.0f / std::sqrt(0.25f + 1e-5f) - 0.5f, 1e-4);
  EXPECT_NEAR(y->at(0, 1, 0, 1), 3.0f * -1.0f / std::sqrt(0.25f + 1e-5f) - 0.5f, 1e-4);
  // Eval mode must not touch the running statistics.
  EXPECT_FLOAT_EQ(p.running_mean[0], 1.0f);
  EXPECT_FLOAT_EQ(p.running_var[1], 0.25f);
}

TEST(Relu, ClampsNegativesAndRoutesGradient) {
  auto x = Tensor::from({1, 1, 1, 4}, {-2.0f, -0.5f, 0.5f, 2.0f}, true);
  auto y = relu(x);
  EXPECT_FLOAT_EQ(y->data[0], 0.0f);
  EXPECT_FLOAT_EQ(y->data[1], 0.0f);
  EXPECT_FLOAT_EQ(y->data[2], 0.5f);
  EXPECT_FLOAT_EQ(y->data[3], 2.0f);
  backward(sum(y));
  EXPECT_FLOAT_EQ(x->grad[0], 0.0f);
  EXPECT_FLOAT_EQ(x->grad[3], 1.0f);
}

TEST(AddConcat, ValuesAndShapeChecks) {
  auto a = Tensor::from({1, 2, 1, 1}, {1.0f, 2.0f});
  auto b = Tensor::from({1, 2, 1, 1}, {10.0f, 20.0f});
  auto s = add(a, b);
  EXPECT_FLOAT_EQ(s->data[0], 11.0f);
  EXPECT_FLOAT_EQ(s->data[1], 22.0f);

  auto c = concat_channels(a, b);
  EXPECT_EQ(c->shape, (Shape{1, 4, 1, 1}));
  EXPECT_FLOAT_EQ(c->data[1], 2.0f);
  EXPECT_FLOAT_EQ(c->data[2], 10.0f);

  auto bad = Tensor::from({1, 3, 1, 1}, {0.0f, 0.0f, 0.0f});
  EXPECT_THROW(add(a, bad), InputError);
  auto bad_spatial = Tensor::from({1, 2, 2, 1}, {0, 0, 0, 0});
  EXPECT_THROW(concat_channels(a, bad_spatial), InputError);
}

TEST(ConcatChannels, BackwardSplitsGradient) {
  auto a = Tensor::from({1, 1, 1, 2}, {1.0f, 2.0f}, true);
  auto b = Tensor::from({1, 2, 1, 2}, {3.0f, 4.0f, 5.0f, 6.0f}, true);
  backward(weighted_sum(concat_channels(a, b), {1, 2, 3, 4, 5, 6}));
  EXPECT_FLOAT_EQ(a->grad[0], 1.0f);
  EXPECT_FLOAT_EQ(a->grad[1], 2.0f);
  EXPECT_FLOAT_EQ(b->grad[0], 3.0f);
  EXPECT_FLOAT_EQ(b->grad[3], 6.0f);
}

TEST(AvgPool2, EvenWindowsAverageFour) {
  auto x = Tensor::from({1, 1, 2, 4}, {1, 2, 3, 4, 5, 6, 7, 8});
  auto y = avg_pool2(x);
  ASSERT_EQ(y->shape, (Shape{1, 1, 1, 2}));
  EXPECT_FLOAT_EQ(y->data[0], 3.5f);
  EXPECT_FLOAT_EQ(y->data[1], 5.5f);
}

TEST(AvgPool2, OddEdgeWindowsRenormalize) {
  // Trailing odd row/column windows hold fewer elements and average over
  // their true count instead of padding with zeros.
  auto x = Tensor::from({1, 1, 3, 3}, {1, 2, 3, 4, 5, 6, 7, 8, 9});
  auto y = avg_pool2(x);
  ASSERT_EQ(y->shape, (Shape{1, 1, 2, 2}));
  EXPECT_FLOAT_EQ(y->at(0, 0, 0, 0), 3.0f);   // (1+2+4+5)/4
  EXPECT_FLOAT_EQ(y->at(0, 0, 0, 1), 4.5f);   // (3+6)/2
  EXPECT_FLOAT_EQ(y->at(0, 0, 1, 0), 7.5f);   // (7+8)/2
  EXPECT_FLOAT_EQ(y->at(0, 0, 1, 1), 9.0f);   // lone corner
}

TEST(AvgPool2, BackwardSpreadsUniformly) {
  auto x = Tensor::from({1, 1, 2, 2}, {1, 2, 3, 4}, true);
  backward(sum(avg_pool2(x)));
  for (float g : x->grad) EXPECT_FLOAT_EQ(g, 0.25f);
}

TEST(AvgPool2, BitIdenticalToBilinearHalving) {
  // 2x2 mean pooling and bilinear downsampling to exactly half coincide
  // under the half-pixel convention; the contract is bitwise, not approximate.
  Pcg32 rng(21, 1);
  for (int trial = 0; trial < 200; ++trial) {
    i64 n = 1 + rng.next_below(2);
    i64 c = 1 + rng.next_below(4);
    i64 h = 2 * (1 + rng.next_below(16));
    i64 w = 2 * (1 + rng.next_below(16));
    auto x = random_tensor({n, c, h, w}, rng, 3.0f);
    auto pooled = avg_pool2(x);
    auto resized = bilinear_resize(x, h / 2, w / 2);
    ASSERT_EQ(pooled->shape, resized->shape);
    ASSERT_EQ(0, std::memcmp(pooled->data.data(), resized->data.data(),
                             pooled->data.size() * sizeof(float)))
        << "trial " << trial << " shape " << x->shape.str();
  }
}

TEST(MaxPool, ValuesAndFirstTieWins) {
  auto x = Tensor::from({1, 1, 2, 2}, {7.0f, 7.0f, 1.0f, 0.0f}, true);
  auto y = max_pool2d(x, 2, 2, 0);
  ASSERT_EQ(y->shape, (Shape{1, 1, 1, 1}));
  EXPECT_FLOAT_EQ(y->data[0], 7.0f);
  backward(sum(y));
  // Scan order finds the top-left seven first; only it gets gradient.
  EXPECT_FLOAT_EQ(x->grad[0], 1.0f);
  EXPECT_FLOAT_EQ(x->grad[1], 0.0f);
}

TEST(MaxPool, StridedWithPadding) {
  auto x = Tensor::from({1, 1, 3, 3}, {1, 2, 3, 4, 5, 6, 7, 8, 9});
  auto y = max_pool2d(x, 3, 2, 1);
  ASSERT_EQ(y->shape, (Shape{1, 1, 2, 2}));
  EXPECT_FLOAT_EQ(y->at(0, 0, 0, 0), 5.0f);
  EXPECT_FLOAT_EQ(y->at(0, 0, 0, 1), 6.0f);
  EXPECT_FLOAT_EQ(y->at(0, 0, 1, 0), 8.0f);
  EXPECT_FLOAT_EQ(y->at(0, 0, 1, 1), 9.0f);
}

TEST(Bilinear, FrozenDoubleingOfUnitRamp) {
  // Half-pixel mapping of [0,1] to four samples: src coordinates -0.25,
  // 0.25, 0.75, 1.25 clamp to the edges and interpolate the middle.
  auto x = Tensor::from({1, 1, 1, 2}, {0.0f, 1.0f});
  auto y = bilinear_resize(x, 1, 4);
  EXPECT_FLOAT_EQ(y->data[0], 0.0f);
  EXPECT_FLOAT_EQ(y->data[1], 0.25f);
  EXPECT_FLOAT_EQ(y->data[2], 0.75f);
  EXPECT_FLOAT_EQ(y->data[3], 1.0f);
}

TEST(Bilinear, FrozenHalvingAveragesPairs) {
  auto x = Tensor::from({1, 1, 1, 4}, {0.0f, 1.0f, 2.0f, 3.0f});
  auto y = bilinear_resize(x, 1, 2);
  EXPECT_FLOAT_EQ(y->data[0], 0.5f);
  EXPECT_FLOAT_EQ(y->data[1], 2.5f);
}

TEST(Bilinear, SameSizeIsIdentity) {
  Pcg32 rng(4, 1);
  auto x = random_tensor({2, 3, 7, 9}, rng);
  auto y = bilinear_resize(x, 7, 9);
  EXPECT_EQ(0, std::memcmp(x->data.data(), y->data.data(),
                           x->data.size() * sizeof(float)));
}

TEST(Bilinear, UpThenDownRoundTripsForConstants) {
  auto x = Tensor::full({1, 2, 4, 4}, 2.5f);
  auto y = bilinear_resize(bilinear_resize(x, 8, 8), 4, 4);
  for (float v : y->data) EXPECT_FLOAT_EQ(v, 2.5f);
}

TEST(Nearest, DoublingRepeatsEachSample) {
  auto x = Tensor::from({1, 1, 1, 2}, {5.0f, 9.0f});
  auto y = nearest_resize(x, 1, 4);
  EXPECT_FLOAT_EQ(y->data[0], 5.0f);
  EXPECT_FLOAT_EQ(y->data[1], 5.0f);
  EXPECT_FLOAT_EQ(y->data[2], 9.0f);
  EXPECT_FLOAT_EQ(y->data[3], 9.0f);
}

TEST(GlobalAvgPool, MeansSpatialField) {
  auto x = Tensor::from({1, 2, 2, 2}, {1, 2, 3, 4, 10, 20, 30, 40}, true);
  auto y = global_avg_pool(x);
  ASSERT_EQ(y->shape, (Shape{1, 2, 1, 1}));
  EXPECT_FLOAT_EQ(y->data[0], 2.5f);
  EXPECT_FLOAT_EQ(y->data[1], 25.0f);
  backward(sum(y));
  EXPECT_FLOAT_EQ(x->grad[0], 0.25f);
  EXPECT_FLOAT_EQ(x->grad[7], 0.25f);
}

TEST(Linear, MatchesDoubleLoopOracle) {
  Pcg32 rng(17, 1);
  auto p = LinearParams::create(12, 5, rng);
  auto x = random_tensor({3, 3, 2, 2}, rng);
  auto y = linear(x, p);
  ASSERT_EQ(y->shape, (Shape{3, 5, 1, 1}));
  for (i64 n = 0; n < 3; ++n)
    for (i64 k = 0; k < 5; ++k) {
      double acc = p.bias->data[k];
      for (i64 f = 0; f < 12; ++f)
        acc += static_cast<double>(x->data[n * 12 + f]) *
               p.weight->data[k * 12 + f];
      EXPECT_NEAR(y->at(n, k, 0, 0), acc, 1e-4);
    }
}

TEST(SoftmaxCrossEntropy, MatchesLogSumExpOracle) {
  Pcg32 rng(19, 1);
  auto logits = random_tensor({4, 6, 1, 1}, rng, 3.0f);
  std::vector<int> labels{0, 5, 2, 2};
  auto loss = softmax_cross_entropy(logits, labels);
  ASSERT_EQ(loss->numel(), 1);

  double want = 0.0;
  for (i64 n = 0; n < 4; ++n) {
    double mx = -1e30;
    for (i64 k = 0; k < 6; ++k)
      mx = std::max(mx, static_cast<double>(logits->at(n, k, 0, 0)));
    double lse = 0.0;
    for (i64 k = 0; k < 6; ++k)
      lse += std::exp(static_cast<double>(logits->at(n, k, 0, 0)) - mx);
    lse = mx + std::log(lse);
    want += lse - logits->at(n, labels[n], 0, 0);
  }
  want /= 4.0;
  EXPECT_NEAR(loss->data[0], want, 1e-5);
}

TEST(SoftmaxCrossEntropy, GradientIsSoftmaxMinusOneHot) {
  auto logits = Tensor::from({1, 3, 1, 1}, {1.0f, 2.0f, 3.0f}, true);
  backward(softmax_cross_entropy(logits, {1}));
  double z = std::exp(1.0) + std::exp(2.0) + std::exp(3.0);
  EXPECT_NEAR(logits->grad[0], std::exp(1.0) / z, 1e-5);
  EXPECT_NEAR(logits->grad[1], std::exp(2.0) / z - 1.0, 1e-5);
  EXPECT_NEAR(logits->grad[2], std::exp(3.0) / z, 1e-5);
}

TEST(SoftmaxCrossEntropy, RejectsBadLabels) {
  auto logits = Tensor::from({1, 3, 1, 1}, {0.0f, 0.0f, 0.0f});
  EXPECT_THROW(softmax_cross_entropy(logits, {3}), InputError);
  EXPECT_THROW(softmax_cross_entropy(logits, {-1}), InputError);
  EXPECT_THROW(softmax_cross_entropy(logits, {0, 1}), InputError);
}

TEST(PredictClasses, ArgmaxWithLowestTie) {
  auto logits =
      Tensor::from({2, 3, 1, 1}, {1.0f, 5.0f, 5.0f, 2.0f, 1.0f, 0.0f});
  auto got = predict_classes(logits);
  ASSERT_EQ(got.size(), 2u);
  EXPECT_EQ(got[0], 1);  // tie between classes 1 and 2 resolves low
  EXPECT_EQ(got[1], 0);
}

TEST(WeightedSum, ProjectsAndBackpropagatesConstants) {
  auto x = Tensor::from({1, 1, 1, 3}, {1.0f, 2.0f, 3.0f}, true);
  auto y = weighted_sum(x, {0.5, -1.0, 2.0});
  EXPECT_NEAR(y->data[0], 0.5 - 2.0 + 6.0, 1e-6);
  backward(y);
  EXPECT_FLOAT_EQ(x->grad[0], 0.5f);
  EXPECT_FLOAT_EQ(x->grad[1], -1.0f);
  EXPECT_FLOAT_EQ(x->grad[2], 2.0f);
}

}  // namespace
}  // namespace elastic
