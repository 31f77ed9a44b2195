#include <algorithm>

#include "gtest/gtest.h"

#include "elastic/arch.hpp"
#include "elastic/config_io.hpp"
#include "elastic/cost.hpp"
#include "testutil.hpp"

namespace elastic {
namespace {

TEST(Presets, AllValidateAndListStaysStable) {
  auto names = preset_names();
  ASSERT_FALSE(names.empty());
  for (const auto& n :
       {"resnext50", "resnext50_elastic", "resnext50_selastic", "resnext101",
        "resnext101_elastic", "densenet201", "densenet201_elastic",
        "toy_resnext_8", "toy_resnext_8_elastic", "toy_densenet_8",
        "toy_densenet_8_elastic"}) {
    EXPECT_NE(std::find(names.begin(), names.end(), n), names.end())
        << "missing preset " << n;
    EXPECT_NO_THROW(preset(n).validate()) << n;
  }
  EXPECT_THROW(preset("no_such_model"), ConfigError);
}

TEST(Presets, Resnext50Structure) {
  auto s = preset("resnext50");
  ASSERT_EQ(s.stages.size(), 4u);
  EXPECT_EQ(s.input_resolution, 224);
  EXPECT_EQ(s.num_classes, 1000);
  const int blocks[] = {3, 4, 6, 3};
  const i64 out[] = {256, 512, 1024, 2048};
  const i64 res[] = {56, 28, 14, 7};
  for (size_t i = 0; i < 4; ++i) {
    EXPECT_EQ(s.stages[i].num_blocks, blocks[i]);
    EXPECT_EQ(s.stages[i].out_channels, out[i]);
    EXPECT_EQ(s.stages[i].resolution, res[i]);
    EXPECT_EQ(s.stages[i].cardinality, 32);
    EXPECT_FALSE(s.stages[i].elastic);
  }
  EXPECT_EQ(count_elastic_blocks(s), 0);
  EXPECT_EQ(s.min_resolution(), 7);
}

TEST(Presets, Resnext50ElasticRebalancesStages) {
  auto s = preset("resnext50_elastic");
  ASSERT_EQ(s.stages.size(), 4u);
  const int blocks[] = {6, 8, 5, 3};
  for (size_t i = 0; i < 4; ++i)
    EXPECT_EQ(s.stages[i].num_blocks, blocks[i]);
  EXPECT_TRUE(s.stages[0].elastic);
  EXPECT_TRUE(s.stages[1].elastic);
  EXPECT_TRUE(s.stages[2].elastic);
  EXPECT_FALSE(s.stages[3].elastic);  // minimum tier carries no branches
  EXPECT_EQ(count_elastic_blocks(s), 17);
  for (const auto& st : s.stages) {
    if (!st.elastic) continue;
    ASSERT_EQ(st.branches.size(), 2u);
    EXPECT_EQ(st.branches[0].scale_ratio, 1);
    EXPECT_EQ(st.branches[1].scale_ratio, 2);
    EXPECT_EQ(st.branches[0].width_fraction, Rational(1, 2));
  }
}

TEST(Eligibility, StrideTwoEntriesAndMinTierStayPlain) {
  auto s = preset("resnext50_elastic");
  // Stage 0 enters at stride 1: every block may branch.
  for (i64 b = 0; b < s.stages[0].num_blocks; ++b)
    EXPECT_TRUE(block_is_elastic(s, 0, b));
  // Stages 1 and 2 enter at stride 2: the entry block stays plain.
  EXPECT_FALSE(block_is_elastic(s, 1, 0));
  EXPECT_TRUE(block_is_elastic(s, 1, 1));
  EXPECT_FALSE(block_is_elastic(s, 2, 0));
  // The whole minimum-resolution tier is ineligible regardless of the flag.
  for (i64 b = 0; b < s.stages[3].num_blocks; ++b) {
    EXPECT_FALSE(block_eligible(s, 3, b));
    EXPECT_FALSE(block_is_elastic(s, 3, b));
  }
}

TEST(Eligibility, BlockSpecAtReflectsEligibility) {
  auto s = preset("resnext50_elastic");
  auto entry = block_spec_at(s, 1, 0);
  EXPECT_EQ(entry.branches.size(), 1u);  // plain, full width
  EXPECT_EQ(entry.stride, 2);
  auto inner = block_spec_at(s, 1, 1);
  EXPECT_EQ(inner.branches.size(), 2u);
  EXPECT_EQ(inner.stride, 1);
  EXPECT_EQ(inner.in_channels, 512);
  EXPECT_EQ(inner.out_channels, 512);
}

TEST(Selastic, TransformConvertsEligibleBlocksOnly) {
  auto base = preset("resnext50");
  auto converted = selastic_transform(base);
  ASSERT_EQ(converted.stages.size(), 4u);
  for (size_t i = 0; i < 4; ++i) {
    EXPECT_EQ(converted.stages[i].num_blocks, base.stages[i].num_blocks);
    EXPECT_EQ(converted.stages[i].out_channels, base.stages[i].out_channels);
  }
  EXPECT_TRUE(converted.stages[0].elastic);
  EXPECT_FALSE(converted.stages[3].elastic);
  // 3 + (4-1) + (6-1) eligible blocks across the first three stages.
  EXPECT_EQ(count_elastic_blocks(converted), 11);
  // Cardinality halves per branch so each half-width branch keeps its group
  // width.
  EXPECT_EQ(converted.stages[0].branches[0].cardinality, 16);
}

TEST(Selastic, ConservesEverythingButPerBranchNorms) {
  auto base = preset("resnext50");
  auto converted = selastic_transform(base);
  auto cost_base = model_cost(base);
  auto cost_conv = model_cost(converted);
  // Learnable delta is exactly two values per out channel per converted
  // block; conv and classifier weights are untouched.
  i64 want_delta = 2 * (3 * 256 + 3 * 512 + 5 * 1024);
  EXPECT_EQ(cost_conv.total_params - cost_base.total_params, want_delta);
  EXPECT_LT(cost_conv.total_macs, cost_base.total_macs);
  EXPECT_EQ(preset("resnext50_selastic"), converted);
}

TEST(Selastic, RejectsAlreadyElasticSpecs) {
  EXPECT_THROW(selastic_transform(preset("resnext50_elastic")), UsageError);
  EXPECT_THROW(selastic_transform(preset("resnext50_selastic")), UsageError);
}

TEST(Resolutions, WalkMatchesStageLayout) {
  auto s = preset("resnext50");
  auto check = check_input_resolution(s, 224);
  ASSERT_TRUE(check.ok) << check.reason;
  EXPECT_EQ(check.stage_resolutions, (std::vector<i64>{56, 28, 14, 7}));

  // A plain network has no divisibility constraints, so an off-by-one input
  // still flows; the elastic variant needs even elastic-stage sizes.
  EXPECT_TRUE(check_input_resolution(s, 225).ok);
  auto bad = check_input_resolution(preset("resnext50_elastic"), 225);
  EXPECT_FALSE(bad.ok);
  EXPECT_NE(bad.reason.find("scale_ratio"), std::string::npos);
}

TEST(Resolutions, ToyConsumesDoubledAndHalvedInputs) {
  auto s = preset("toy_resnext_8_elastic");
  EXPECT_TRUE(check_input_resolution(s, 32).ok);
  EXPECT_TRUE(check_input_resolution(s, 16).ok);
  EXPECT_TRUE(check_input_resolution(s, 64).ok);
  EXPECT_FALSE(check_input_resolution(s, 15).ok);

  auto valids = valid_input_resolutions(s, 1, 64);
  EXPECT_NE(std::find(valids.begin(), valids.end(), 32), valids.end());
  EXPECT_NE(std::find(valids.begin(), valids.end(), 64), valids.end());
  EXPECT_EQ(std::find(valids.begin(), valids.end(), 15), valids.end());
}

TEST(ConfigIo, RoundTripIsLosslessForEveryPreset) {
  for (const auto& name : preset_names()) {
    auto s = preset(name);
    auto text = serialize_arch(s);
    auto back = parse_arch(text);
    EXPECT_EQ(back, s) << name;
    EXPECT_EQ(serialize_arch(back), text) << name;
  }
}

TEST(ConfigIo, FileRoundTripAndResolveArch) {
  eltest::TempDir tmp;
  auto s = preset("toy_resnext_8_elastic");
  auto path = tmp.file("arch.cfg");
  save_arch_file(s, path);
  EXPECT_EQ(load_arch_file(path), s);
  EXPECT_EQ(resolve_arch(path), s);
  EXPECT_EQ(resolve_arch("toy_resnext_8_elastic"), s);
  EXPECT_THROW(load_arch_file(tmp.file("missing.cfg")), IoError);
  EXPECT_THROW(resolve_arch("definitely_not_a_preset"), ConfigError);
}

TEST(ConfigIo, SyntaxErrorsCarryLineNumbers) {
  try {
    parse_arch("arch v1\nfamily resnext\nthis line is nonsense\n");
    FAIL() << "expected FormatError";
  } catch (const FormatError& e) {
    EXPECT_NE(std::string(e.what()).find("line"), std::string::npos);
  } catch (const std::exception& e) {
    FAIL() << "wrong exception type: " << e.what();
  }
}

TEST(ConfigIo, ValidationFailuresNameTheStage) {
  auto s = preset("toy_resnext_8");
  s.stages[1].bottleneck_channels = 130;  // not divisible by cardinality 16
  try {
    parse_arch(serialize_arch(s));
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("stage"), std::string::npos);
  }
}

TEST(ArchValidate, CatchesResolutionMismatch) {
  auto s = preset("toy_resnext_8");
  s.stages[2].resolution = 9;  // walk says 8
  EXPECT_THROW(s.validate(), ConfigError);
}

}  // namespace
}  // namespace elastic
