#include <gtest/gtest.h>

#include <cmath>

#include <reclink/hblcm.hpp>
#include <reclink/synthgen.hpp>

#include "oracles.hpp"

using namespace reclink;

namespace {

hblcm_settings quick(std::size_t chains = 2, std::size_t adapt = 200, std::size_t burn = 200,
                     std::size_t keep = 400) {
  hblcm_settings s;
  s.gibbs.chains = chains;
  s.gibbs.burn_in = burn;
  s.gibbs.n_keep = keep;
  s.adapt_sweeps = adapt;
  return s;
}

std::vector<double> column(const chain_array &draws, std::size_t j) {
  std::vector<double> out;
  for (auto &chain : draws)
    for (auto &row : chain)
      out.push_back(row[j]);
  return out;
}

double mean_of(const std::vector<double> &x) {
  double s = 0;
  for (double v : x)
    s += v;
  return s / static_cast<double>(x.size());
}

} // namespace

TEST(MhLogRatio, IdentityProposalIsZero) {
  hyper_family fam{0.2, 3.0, 0.1, 0.2, 0.01, 0.5};
  std::vector<double> p{0.3, 0.7, 0.55};
  theta_tau x{0.4, 2.5};
  EXPECT_DOUBLE_EQ(mh_log_ratio(x, x, p, fam, mh_mode::full_posterior), 0.0);
  EXPECT_DOUBLE_EQ(mh_log_ratio(x, x, p, fam, mh_mode::literal), 0.0);
}

TEST(MhLogRatio, FullPosteriorFlatHyperprior) {
  // Beta(1,1) -> Beta(2,1) at p = 0.8: density ratio 1.6.
  hyper_family flat{0.0, 0.0, 1e12, 1e12, 0.0, 0.5};
  theta_tau cur = theta_tau_from_alpha_beta({1, 1});
  theta_tau prop = theta_tau_from_alpha_beta({2, 1});
  std::vector<double> p{0.8};
  double r = mh_log_ratio(cur, prop, p, flat, mh_mode::full_posterior);
  EXPECT_NEAR(r, std::log(2.0) + std::log(0.8), 1e-9);
  EXPECT_NEAR(r, 0.470, 1e-3);
}

TEST(MhLogRatio, LiteralRatioWithoutPenalty) {
  hyper_family fam{0.0, 0.0, 1.0, 1.0, 0.0, 0.0};
  theta_tau cur = theta_tau_from_alpha_beta({1, 1});
  theta_tau prop = theta_tau_from_alpha_beta({2, 1});
  std::vector<double> p{0.8};
  EXPECT_NEAR(mh_log_ratio(cur, prop, p, fam, mh_mode::literal), std::log(0.8), 1e-12);
  EXPECT_NEAR(std::log(0.8), -0.223, 1e-3);
}

TEST(MhLogRatio, NanIsNumericalError) {
  hyper_family fam;
  std::vector<double> p{std::nan("")};
  try {
    mh_log_ratio({0, 1}, {0.1, 1}, p, fam, mh_mode::literal);
    FAIL();
  } catch (const error &e) {
    EXPECT_EQ(e.category(), error_category::numerical);
  }
}

TEST(MhStep, TinyProposalsAlmostAlwaysAccepted) {
  hyper_family fam{0.0, 2.0, 0.1, 0.2, 0.0, 1e10};
  std::vector<double> p{0.4, 0.6};
  auto rng = make_stream(11, {1});
  theta_tau x{0.0, 2.0};
  int acc = 0;
  for (int i = 0; i < 2000; ++i) {
    auto res = mh_step(x, p, fam, mh_mode::full_posterior, rng);
    acc += res.accepted;
    x = res.state;
  }
  EXPECT_GT(acc, 1980);
}

TEST(MhStep, ReproducibleSequence) {
  hyper_family fam{0.0, 2.0, 0.1, 0.2, 0.02, 0.5};
  std::vector<double> p{0.4};
  auto run = [&] {
    auto rng = make_stream(12, {3});
    theta_tau x{0.0, 2.0};
    std::vector<double> out;
    for (int i = 0; i < 200; ++i) {
      x = mh_step(x, p, fam, mh_mode::full_posterior, rng).state;
      out.push_back(x.theta);
      out.push_back(x.tau);
    }
    return out;
  };
  EXPECT_EQ(run(), run());
}

TEST(MhStep, AcceptanceIncreasesWithH) {
  std::vector<double> p{0.3, 0.35, 0.25, 0.4};
  double prev = -1.0;
  for (double h : {0.1, 0.5, 2.0, 10.0}) {
    hyper_family fam{-0.8, 2.5, 0.15, 0.23, -0.01, h};
    auto rng = make_stream(13, {7});
    int acc = 0;
    const int n = 20000;
    theta_tau x{-0.8, 2.5};
    for (int i = 0; i < n; ++i)
      acc += mh_step(x, p, fam, mh_mode::full_posterior, rng).accepted;
    double rate = static_cast<double>(acc) / n;
    EXPECT_GT(rate, prev) << "h=" << h;
    prev = rate;
  }
}

TEST(MhStep, ThetaBoundsRejectOutside) {
  hyper_family fam{0.0, 2.0, 1.0, 1.0, 0.0, 0.1};
  std::vector<double> p{0.5};
  auto rng = make_stream(14, {1});
  theta_tau x{0.0, 2.0};
  for (int i = 0; i < 2000; ++i) {
    x = mh_step(x, p, fam, mh_mode::full_posterior, rng, {-0.5, 0.5}).state;
    EXPECT_GE(x.theta, -0.5);
    EXPECT_LE(x.theta, 0.5);
  }
}

TEST(Tune, FixedPointAndDirection) {
  EXPECT_DOUBLE_EQ(tune(0.5, 0.35), 0.5);
  EXPECT_NEAR(tune(0.5, 1.0), 0.5 * std::exp(-0.65), 1e-15);
  EXPECT_NEAR(tune(0.5, 1.0), 0.261, 1e-3);
  EXPECT_GT(tune(0.5, 0.05), 0.5);
  EXPECT_LT(tune(0.5, 0.9), 0.5);
}

TEST(HyperPrior, DefaultsAndMapping) {
  auto spec = make_hyper_prior(3);
  EXPECT_EQ(spec.families(), 7);
  EXPECT_EQ(spec.family_name(0), "M");
  EXPECT_EQ(spec.family_name(1), "M1");
  EXPECT_EQ(spec.family_name(6), "U3");
  for (int f = 0; f < 7; ++f)
    EXPECT_DOUBLE_EQ(spec.family(f).h, 0.5);
  EXPECT_NEAR(inv_logit(spec.match.mu_theta), 0.03, 1e-12);
  EXPECT_NEAR(inv_logit(spec.m_fields[0].mu_theta), 0.80, 1e-12);
  EXPECT_NEAR(inv_logit(spec.u_fields[2].mu_theta), 0.25, 1e-12);
  auto ab = beta_from_moments(0.8, 0.075);
  EXPECT_NEAR(spec.m_fields[1].mu_tau, std::log(ab.alpha + ab.beta), 1e-12);

  hyper_elicitation lit;
  lit.literal_mean_mapping = true;
  auto spec2 = make_hyper_prior(3, lit);
  EXPECT_NEAR(inv_logit(spec2.match.mu_theta), 0.80, 1e-12);
  EXPECT_NEAR(inv_logit(spec2.m_fields[0].mu_theta), 0.25, 1e-12);
  EXPECT_NEAR(inv_logit(spec2.u_fields[0].mu_theta), 0.03, 1e-12);
}

TEST(RunHblcm, FrozenToyMatchesQuadrature) {
  // One block, one field, indicators frozen at 10 matches of 100 pairs.
  block_data b(0, 10, 10, 1);
  b.pattern_counts = {80, 20};
  auto spec = make_hyper_prior(1);
  auto s = quick(1, 500, 1000, 40000);
  s.gibbs.freeze_indicators = true;
  s.gibbs.enforce_cap = false;
  s.gibbs.enforce_ordering = false;
  s.gibbs.initial_indicators = std::vector<match_counts>{{2, 8}};
  s.keep_hyper_draws = true;
  std::vector<block_data> blocks{b};
  auto post = run_hblcm(blocks, spec, s);

  auto &M = spec.match;
  auto exact = oracle::toy_quadrature(10, 100, M.mu_theta, M.mu_tau, M.var_theta, M.var_tau, M.cov);
  auto th = column(post.hyper_draws, 0);
  auto ta = column(post.hyper_draws, 1);
  EXPECT_NEAR(mean_of(th), exact.mean_theta, 4 * oracle::batch_means_se(th));
  EXPECT_NEAR(mean_of(ta), exact.mean_tau, 4 * oracle::batch_means_se(ta));
  EXPECT_NEAR(post.hyper_means[0][0].theta, mean_of(th), 1e-9);
}

TEST(RunHblcm, ZeroPairBlockFollowsHyperprior) {
  std::vector<block_data> blocks{block_data(0, 0, 0, 2)};
  auto spec = make_hyper_prior(2);
  auto s = quick(1, 200, 500, 20000);
  s.gibbs.enforce_ordering = false;
  s.keep_hyper_draws = true;
  auto post = run_hblcm(blocks, spec, s);
  for (int f = 0; f < spec.families(); ++f) {
    auto th = column(post.hyper_draws, 2 * f);
    EXPECT_NEAR(mean_of(th), spec.family(f).mu_theta, 4 * oracle::batch_means_se(th))
        << spec.family_name(f);
  }
}

TEST(RunHblcm, ConstraintsAndDeterminism) {
  synth_config cfg;
  cfg.blocks = 6;
  cfg.kind = scenario::heterogeneous;
  cfg.seed = 5;
  auto ds = generate(cfg);
  auto spec = make_hyper_prior(7);
  auto s = quick(2, 100, 50, 150);
  auto a = run_hblcm(ds.blocks, spec, s, 1);
  auto b = run_hblcm(ds.blocks, spec, s, 2);
  EXPECT_EQ(a.draws, b.draws);
  EXPECT_EQ(a.match_props, b.match_props);
  ASSERT_EQ(a.names.size(), 6u * 15u);
  EXPECT_EQ(a.names[0], "s0.p_M");
  for (auto &chain : a.draws)
    for (auto &row : chain)
      for (std::size_t blk = 0; blk < 6; ++blk) {
        const double *x = row.data() + blk * 15;
        EXPECT_LE(x[0], ds.blocks[blk].match_rate_cap() + 1e-15);
        for (int k = 0; k < 7; ++k)
          EXPECT_GE(x[1 + k], x[8 + k]);
      }
  ASSERT_EQ(a.mh.size(), 2u);
  for (auto &m : a.mh) {
    EXPECT_EQ(m.family_proposals(0), 6u * 200u);
    for (double h : m.h)
      EXPECT_GT(h, 0.0);
  }
}

TEST(RunHblcm, IdenticalBlocksAgree) {
  synth_config cfg;
  cfg.blocks = 1;
  auto ds = generate(cfg);
  block_data copy = ds.blocks[0];
  copy.block_id = 1;
  std::vector<block_data> blocks{ds.blocks[0], copy};
  auto post = run_hblcm(blocks, make_hyper_prior(7), quick(2, 300, 300, 3000));
  for (int k = 0; k < 7; ++k)
    EXPECT_NEAR(post.block_means[0].m_probs[k], post.block_means[1].m_probs[k], 0.03);
  EXPECT_NEAR(post.block_means[0].p_match, post.block_means[1].p_match, 0.005);
}

TEST(RunHblcm, OrderThetaAndLiteralModeRun) {
  synth_config cfg;
  cfg.blocks = 3;
  auto ds = generate(cfg);
  auto s = quick(1, 50, 20, 50);
  s.order_theta = true;
  s.keep_hyper_draws = true;
  auto post = run_hblcm(ds.blocks, make_hyper_prior(7), s);
  for (auto &row : post.hyper_draws[0])
    for (std::size_t blk = 0; blk < 3; ++blk)
      for (int k = 0; k < 7; ++k)
        EXPECT_GE(row[2 * (blk * 15 + 1 + k)], row[2 * (blk * 15 + 8 + k)]);
  s.mode = mh_mode::literal;
  EXPECT_NO_THROW(run_hblcm(ds.blocks, make_hyper_prior(7), s));
}

TEST(RunHblcm, FieldMismatchRejected) {
  synth_config cfg;
  cfg.blocks = 2;
  auto ds = generate(cfg);
  EXPECT_THROW(run_hblcm(ds.blocks, make_hyper_prior(3), quick()), error);
}
