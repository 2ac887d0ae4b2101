#include <gtest/gtest.h>

#include <cmath>

#include <reclink/synthgen.hpp>

using namespace reclink;

namespace {

double correlation(const class_frequencies &f, bool match_class, int j, int k) {
  const auto &fr = match_class ? f.match_freq : f.nonmatch_freq;
  double pj = 0, pk = 0, pjk = 0;
  for (std::size_t p = 0; p < fr.size(); ++p) {
    bool a = (p >> j) & 1u, b = (p >> k) & 1u;
    pj += a * fr[p];
    pk += b * fr[p];
    pjk += (a && b) * fr[p];
  }
  return (pjk - pj * pk) / std::sqrt(pj * (1 - pj) * pk * (1 - pk));
}

} // namespace

TEST(Synthgen, FullScalePairCount) {
  synth_config cfg;
  auto ds = generate(cfg);
  EXPECT_EQ(ds.total_pairs(), 250000u);
  EXPECT_EQ(ds.blocks.size(), 400u);
  for (auto &b : ds.blocks) {
    EXPECT_NO_THROW(b.validate());
    EXPECT_EQ(b.true_matches(), 25u);
  }
  // FullOneToOne: match fraction 1/block_size, exactly at the cap.
  count_t matches = 0;
  for (auto &b : ds.blocks)
    matches += b.true_matches();
  EXPECT_DOUBLE_EQ(static_cast<double>(matches) / ds.total_pairs(), 0.04);
  EXPECT_DOUBLE_EQ(ds.true_params[0].p_match, 0.04);

  auto fr = empirical_pattern_distribution(ds);
  for (int k = 0; k < 7; ++k)
    EXPECT_NEAR(fr.agreement_rate(true, k), cfg.m_probs[k], 0.02) << "field " << k;
}

TEST(Synthgen, HeterogeneousRanges) {
  synth_config cfg;
  cfg.blocks = 40;
  cfg.kind = scenario::heterogeneous;
  auto ds = generate(cfg);
  bool varies = false;
  for (auto &tp : ds.true_params) {
    for (int k = 0; k < 7; ++k) {
      EXPECT_GE(tp.m_probs[k], 0.60);
      EXPECT_LE(tp.m_probs[k], 0.90);
      EXPECT_GE(tp.u_probs[k], 0.20);
      EXPECT_LE(tp.u_probs[k], 0.50);
    }
    varies |= tp.m_probs[0] != ds.true_params[0].m_probs[0];
  }
  EXPECT_TRUE(varies);
}

TEST(Synthgen, MinimalBlock) {
  synth_config cfg;
  cfg.blocks = 1;
  cfg.block_size = 1;
  auto ds = generate(cfg);
  ASSERT_EQ(ds.total_pairs(), 1u);
  EXPECT_EQ(ds.blocks[0].true_matches(), 1u);
  EXPECT_EQ(ds.pairs[0].truth[0], 1);
}

TEST(Synthgen, DeterministicAcrossWorkerCounts) {
  synth_config cfg;
  cfg.blocks = 30;
  cfg.kind = scenario::heterogeneous;
  cfg.seed = 99;
  auto a = generate(cfg, 1);
  auto b = generate(cfg, 4);
  auto c = generate(cfg, 1);
  for (std::size_t s = 0; s < cfg.blocks; ++s) {
    EXPECT_EQ(a.pairs[s].patterns, b.pairs[s].patterns);
    EXPECT_EQ(a.pairs[s].patterns, c.pairs[s].patterns);
    EXPECT_EQ(a.true_params[s].m_probs, b.true_params[s].m_probs);
  }
  cfg.seed = 100;
  auto d = generate(cfg, 1);
  EXPECT_NE(a.pairs[0].patterns, d.pairs[0].patterns);
}

TEST(Synthgen, ThinnedMatches) {
  synth_config cfg;
  cfg.blocks = 200;
  cfg.matching = match_mode::thinned;
  cfg.rho = 0.5;
  auto ds = generate(cfg);
  count_t matches = 0;
  for (auto &b : ds.blocks) {
    EXPECT_LE(b.true_matches(), 25u);
    matches += b.true_matches();
  }
  // 5000 Bernoulli(0.5) records: sd ~ 35
  EXPECT_NEAR(static_cast<double>(matches), 2500.0, 4 * 35.4);
  EXPECT_DOUBLE_EQ(ds.true_params[0].p_match, 0.02);
}

TEST(Synthgen, InvalidConfigRejected) {
  synth_config cfg;
  cfg.m_probs.pop_back();
  EXPECT_THROW(generate(cfg), error);
  synth_config c2;
  c2.blocks = 0;
  EXPECT_THROW(generate(c2), error);
}

TEST(EmpiricalDistribution, SingleFieldLawOfLargeNumbers) {
  synth_config cfg;
  cfg.fields = 1;
  cfg.m_probs = {0.9};
  cfg.u_probs = {0.3};
  cfg.blocks = 10000;
  cfg.block_size = 10; // 1e5 matches
  auto fr = empirical_pattern_distribution(generate(cfg));
  ASSERT_EQ(fr.matches, 100000u);
  // sd of the frequency is sqrt(0.9 * 0.1 / 1e5) ~ 0.00095
  EXPECT_NEAR(fr.match_freq[1], 0.9, 4 * 0.00095);
  EXPECT_NEAR(fr.nonmatch_freq[1], 0.3, 4 * std::sqrt(0.21 / 900000));
}

TEST(EmpiricalDistribution, EmptyInputGivesEmptyTables) {
  std::vector<block_data> none;
  auto fr = empirical_pattern_distribution(none);
  EXPECT_TRUE(fr.match_freq.empty());
  EXPECT_TRUE(fr.nonmatch_freq.empty());

  std::vector<block_data> zero{block_data(0, 0, 0, 2)};
  zero[0].truth_match_counts = std::vector<count_t>(4, 0);
  auto fz = empirical_pattern_distribution(zero);
  EXPECT_TRUE(fz.match_freq.empty());
}

TEST(EmpiricalDistribution, MissingTruthIsError) {
  std::vector<block_data> b{block_data(0, 1, 1, 1)};
  b[0].pattern_counts = {0, 1};
  EXPECT_THROW(empirical_pattern_distribution(b), error);
}

TEST(EmpiricalDistribution, FieldsConditionallyIndependentWithinClass) {
  synth_config cfg;
  cfg.blocks = 20000;
  cfg.block_size = 5; // 1e5 matches, 4e5 nonmatches
  auto fr = empirical_pattern_distribution(generate(cfg));
  ASSERT_GE(fr.matches, 100000u);
  for (int j = 0; j < 7; ++j) {
    for (int k = j + 1; k < 7; ++k) {
      EXPECT_LT(std::abs(correlation(fr, true, j, k)), 0.02);
      EXPECT_LT(std::abs(correlation(fr, false, j, k)), 0.02);
    }
  }
}
