#include <cmath>
#include <sstream>

#include "gtest/gtest.h"

#include "elastic/data.hpp"
#include "elastic/policy.hpp"
#include "testutil.hpp"

namespace elastic {
namespace {

using eltest::random_tensor;

TEST(ScaleScore, RejectsShapeMismatches) {
  Pcg32 rng(1, 1);
  auto high = random_tensor({1, 4, 8, 8}, rng);
  auto low = random_tensor({1, 4, 4, 4}, rng);
  EXPECT_NO_THROW(block_scale_score(*high, *low));

  auto wrong_c = random_tensor({1, 3, 4, 4}, rng);
  EXPECT_THROW(block_scale_score(*high, *wrong_c), InputError);
  auto wrong_hw = random_tensor({1, 4, 8, 8}, rng);
  EXPECT_THROW(block_scale_score(*high, *wrong_hw), InputError);
  auto batched_high = random_tensor({2, 4, 8, 8}, rng);
  auto batched_low = random_tensor({2, 4, 4, 4}, rng);
  EXPECT_THROW(block_scale_score(*batched_high, *batched_low), InputError);
}

TEST(ScaleScore, ConstantFieldsGiveExactDifference) {
  auto high = Tensor::full({1, 3, 8, 8}, 0.5f);
  auto low = Tensor::full({1, 3, 4, 4}, -0.25f);
  EXPECT_EQ(block_scale_score(*high, *low), 0.75);
  auto same = Tensor::full({1, 3, 4, 4}, 0.5f);
  EXPECT_EQ(block_scale_score(*high, *same), 0.0);
}

TEST(ScaleScore, MatchesDirectSummationOracle) {
  Pcg32 rng(3, 1);
  for (int trial = 0; trial < 200; ++trial) {
    i64 c = 1 + rng.next_below(32);
    i64 h = 1 + rng.next_below(12);
    i64 w = 1 + rng.next_below(12);
    auto high = random_tensor({1, c, 2 * h, 2 * w}, rng, 2.0f);
    auto low = random_tensor({1, c, h, w}, rng, 2.0f);
    double got = block_scale_score(*high, *low);
    double want = eltest::naive_scale_score(*high, *low);
    EXPECT_NEAR(got, want, 1e-6) << "trial " << trial;
  }
}

class TracedNetwork : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    net_ = new Network(Network::build(preset("toy_resnext_8_elastic"), 5));
    SyntheticSpec spec;
    spec.train_samples = 6;
    spec.eval_samples = 6;
    spec.seed = 9;
    data_ = new SyntheticData(generate_synthetic(spec));
  }
  static void TearDownTestSuite() {
    delete net_;
    delete data_;
    net_ = nullptr;
    data_ = nullptr;
  }
  static Network* net_;
  static SyntheticData* data_;
};
Network* TracedNetwork::net_ = nullptr;
SyntheticData* TracedNetwork::data_ = nullptr;

TEST_F(TracedNetwork, TraceImageScoresEveryElasticBlock) {
  auto img = data_->eval.image_tensor(0);
  net_->set_mode(NormParams::Mode::train);
  auto trace = trace_image(*net_, img, data_->eval.ids[0], data_->eval.labels[0]);
  EXPECT_EQ(trace.scores.size(),
            static_cast<size_t>(net_->elastic_block_count()));
  EXPECT_EQ(trace.image_id, data_->eval.ids[0]);
  EXPECT_EQ(trace.label, data_->eval.labels[0]);
  EXPECT_GE(trace.prediction, 0);
  EXPECT_LT(trace.prediction, 8);
  for (double s : trace.scores) EXPECT_TRUE(std::isfinite(s));
  // The pass must restore whatever mode the caller had set.
  EXPECT_EQ(net_->mode(), NormParams::Mode::train);
}

TEST_F(TracedNetwork, TraceDatasetHonorsLimit) {
  auto all = trace_dataset(*net_, data_->eval);
  EXPECT_EQ(all.size(), static_cast<size_t>(data_->eval.size()));
  auto some = trace_dataset(*net_, data_->eval, 3);
  ASSERT_EQ(some.size(), 3u);
  EXPECT_EQ(some[0].image_id, all[0].image_id);
  EXPECT_EQ(some[0].scores, all[0].scores);
}

TEST_F(TracedNetwork, PlainNetsTraceEmptyAndDensenetKindsAreRejected) {
  // No elastic blocks means no scores, not an error; the CLI layer is what
  // refuses to run the policy analysis on such checkpoints.
  auto plain = Network::build(preset("toy_resnext_8"), 1);
  auto img = data_->eval.image_tensor(0);
  auto trace = trace_image(plain, img, "x", 0);
  EXPECT_TRUE(trace.scores.empty());
  EXPECT_GE(trace.prediction, 0);

  auto dense = Network::build(preset("toy_densenet_8_elastic"), 1);
  try {
    trace_image(dense, img, "x", 0);
    FAIL() << "expected UsageError";
  } catch (const UsageError& e) {
    EXPECT_NE(std::string(e.what()).find("stage"), std::string::npos);
  }
}

TEST(PolicyAggregates, CategoryRankingIsAscendingWithLabelTies) {
  std::vector<PolicyTrace> traces;
  auto with = [&](const char* id, int label, std::vector<double> s) {
    PolicyTrace t;
    t.image_id = id;
    t.label = label;
    t.prediction = label;
    t.scores = std::move(s);
    traces.push_back(std::move(t));
  };
  with("a", 2, {1.0, 3.0});   // mean 2
  with("b", 0, {0.0, 1.0});   // mean 0.5
  with("c", 2, {2.0, 4.0});   // label 2 overall mean 2.5
  with("d", 1, {0.5, 0.5});   // mean 0.5, ties label 0 on the mean

  auto cats = aggregate_by_category(traces);
  ASSERT_EQ(cats.size(), 3u);
  EXPECT_EQ(cats[0].label, 0);
  EXPECT_NEAR(cats[0].mean_score, 0.5, 1e-12);
  EXPECT_EQ(cats[0].images, 1);
  EXPECT_EQ(cats[1].label, 1);
  EXPECT_EQ(cats[2].label, 2);
  EXPECT_NEAR(cats[2].mean_score, 2.5, 1e-12);
  EXPECT_EQ(cats[2].images, 2);
}

TEST(PolicyAggregates, PerBlockMomentsArePopulationMoments) {
  std::vector<PolicyTrace> traces(2);
  traces[0].scores = {1.0, -2.0};
  traces[1].scores = {3.0, -4.0};
  auto blocks = aggregate_by_block(traces);
  ASSERT_EQ(blocks.size(), 2u);
  EXPECT_EQ(blocks[0].block_index, 0u);
  EXPECT_NEAR(blocks[0].mean, 2.0, 1e-12);
  EXPECT_NEAR(blocks[0].stddev, 1.0, 1e-12);
  EXPECT_EQ(blocks[0].min, 1.0);
  EXPECT_EQ(blocks[0].max, 3.0);
  EXPECT_NEAR(blocks[1].mean, -3.0, 1e-12);
  EXPECT_NEAR(blocks[1].stddev, 1.0, 1e-12);

  traces[1].scores = {3.0};  // ragged rows are a caller bug
  EXPECT_THROW(aggregate_by_block(traces), InputError);
}

TEST(PolicyCsv, RoundTripsThroughSixSignificantDigits) {
  std::vector<PolicyTrace> traces(2);
  traces[0] = {"img-000001", 3, 5, {0.123456789, -1.5e-4, 2.0}};
  traces[1] = {"img-000002", 1, 1, {-0.5, 1234.5678, 0.0}};

  std::ostringstream out;
  export_traces_csv(traces, out);
  std::string text = out.str();
  EXPECT_EQ(text.substr(0, text.find('\n')),
            "image_id,label,prediction,s_1,s_2,s_3");

  std::istringstream in(text);
  auto back = import_traces_csv(in);
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back[0].image_id, "img-000001");
  EXPECT_EQ(back[0].label, 3);
  EXPECT_EQ(back[0].prediction, 5);
  ASSERT_EQ(back[0].scores.size(), 3u);
  for (size_t i = 0; i < 2; ++i)
    for (size_t k = 0; k < 3; ++k) {
      double want = traces[i].scores[k];
      double tol = std::abs(want) > 0 ? std::abs(want) * 1e-5 : 1e-9;
      EXPECT_NEAR(back[i].scores[k], want, tol);
    }
}

TEST(PolicyCsv, ImportRejectsMalformedStreams) {
  std::istringstream bad_header("id,label,prediction,s_1\n");
  EXPECT_THROW(import_traces_csv(bad_header), FormatError);

  std::istringstream short_row(
      "image_id,label,prediction,s_1,s_2\nimg,0,1,0.5\n");
  try {
    import_traces_csv(short_row);
    FAIL() << "expected FormatError";
  } catch (const FormatError& e) {
    EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos);
  }

  std::istringstream bad_number(
      "image_id,label,prediction,s_1\nimg,zero,1,0.5\n");
  EXPECT_THROW(import_traces_csv(bad_number), FormatError);
}

}  // namespace
}  // namespace elastic
