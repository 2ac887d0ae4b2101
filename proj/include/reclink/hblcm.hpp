#ifndef RECLINK_HBLCM_HPP
#define RECLINK_HBLCM_HPP

#include <cmath>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "blcm.hpp"
#include "core.hpp"
#include "parallel.hpp"
#include "random.hpp"

namespace reclink {

enum class mh_mode { full_posterior, literal };

inline const char *to_string(mh_mode m) {
  return m == mh_mode::full_posterior ? "full" : "literal";
}

/// Bivariate normal hyperprior on (theta, tau) for one parameter family, and
/// the tuning constant h of its random-walk proposal N2(current, Sigma / h).
struct hyper_family {
  double mu_theta = 0.0;
  double mu_tau = 0.0;
  double var_theta = 1.0;
  double var_tau = 1.0;
  double cov = 0.0;
  double h = 0.5;

  double det() const { return var_theta * var_tau - cov * cov; }

  void validate(const std::string &name) const {
    require(std::isfinite(mu_theta) && std::isfinite(mu_tau), error_category::config,
            name + ": hyperprior means must be finite");
    require(var_theta > 0.0 && var_tau > 0.0 && det() > 0.0, error_category::config,
            name + ": hyperprior covariance must be positive definite");
    require(h > 0.0, error_category::config, name + ": tuning constant must be positive");
  }

  /// -0.5 (x - mu)' Sigma^{-1} (x - mu)
  double log_density_kernel(theta_tau x) const {
    double a = x.theta - mu_theta, b = x.tau - mu_tau;
    double q = (var_tau * a * a - 2.0 * cov * a * b + var_theta * b * b) / det();
    return -0.5 * q;
  }
};

/// Families are indexed 0 = match rate, 1..K = m fields, K+1..2K = u fields.
struct hyper_prior_spec {
  hyper_family match;
  std::vector<hyper_family> m_fields;
  std::vector<hyper_family> u_fields;

  int fields() const { return static_cast<int>(m_fields.size()); }
  int families() const { return 2 * fields() + 1; }

  const hyper_family &family(int f) const {
    if (f == 0)
      return match;
    int K = fields();
    return f <= K ? m_fields[f - 1] : u_fields[f - 1 - K];
  }
  hyper_family &family(int f) {
    return const_cast<hyper_family &>(std::as_const(*this).family(f));
  }

  void validate() const {
    require(!m_fields.empty() && m_fields.size() == u_fields.size(), error_category::config,
            "hyperprior: need K m-families and K u-families");
    for (int f = 0; f < families(); ++f)
      family(f).validate(family_name(f));
  }

  std::string family_name(int f) const {
    if (f == 0)
      return "M";
    int K = fields();
    return f <= K ? "M" + std::to_string(f) : "U" + std::to_string(f - K);
  }
};

/// Settings used to build the default hyperprior: Beta prior centres expressed
/// as (mean, sd) pairs, and the (theta, tau) variances and covariances.
struct hyper_elicitation {
  double match_mean = 0.03, match_sd = 0.005;
  double m_mean = 0.80, m_sd = 0.075;
  double u_mean = 0.25, u_sd = 0.075;
  double var_theta_match = 0.059, var_tau_match = 0.23, cov_match = 0.03;
  double var_theta_m = 0.1325, var_tau_m = 0.23, cov_m = -0.08;
  double var_theta_u = 0.1492, var_tau_u = 0.23, cov_u = -0.01;
  double h = 0.5;
  /// Assign the means the way they are listed in the original write-up
  /// (match-rate and field means rotated); off by default.
  bool literal_mean_mapping = false;
};

inline hyper_prior_spec make_hyper_prior(int K, const hyper_elicitation &e = {}) {
  auto centre = [](double mean, double sd) {
    auto b = beta_from_moments(mean, sd);
    return theta_tau{logit(mean), std::log(b.alpha + b.beta)};
  };
  theta_tau c_match = centre(e.match_mean, e.match_sd);
  theta_tau c_m = centre(e.m_mean, e.m_sd);
  theta_tau c_u = centre(e.u_mean, e.u_sd);
  if (e.literal_mean_mapping) {
    // match <- m centre, m fields <- u centre, u fields <- match centre
    theta_tau t = c_match;
    c_match = c_m;
    c_m = c_u;
    c_u = t;
  }
  hyper_prior_spec spec;
  spec.match = {c_match.theta, c_match.tau, e.var_theta_match, e.var_tau_match, e.cov_match, e.h};
  spec.m_fields.assign(K, {c_m.theta, c_m.tau, e.var_theta_m, e.var_tau_m, e.cov_m, e.h});
  spec.u_fields.assign(K, {c_u.theta, c_u.tau, e.var_theta_u, e.var_tau_u, e.cov_u, e.h});
  return spec;
}

// ---------------------------------------------------------------------------
// Metropolis-Hastings

/// Log acceptance ratio for moving a family's (theta, tau) from `current` to
/// `proposal` given the Beta-distributed values it governs.
///
/// full_posterior: log Beta densities (with normalizer) plus the log
/// hyperprior density, differenced; the symmetric proposal cancels.
/// literal: sum of (a* - a) log p + (b* - b) log(1 - p) minus
/// (h / var_theta)(theta - theta*)^2 and (h / var_tau)(tau - tau*)^2.
inline double mh_log_ratio(theta_tau current, theta_tau proposal, std::span<const double> p_values,
                           const hyper_family &hyper, mh_mode mode) {
  beta_params cur = alpha_beta_from_theta_tau(current);
  beta_params prop = alpha_beta_from_theta_tau(proposal);
  double r = 0.0;
  if (mode == mh_mode::full_posterior) {
    for (double p : p_values)
      r += log_beta_pdf(p, prop.alpha, prop.beta) - log_beta_pdf(p, cur.alpha, cur.beta);
    r += hyper.log_density_kernel(proposal) - hyper.log_density_kernel(current);
  } else {
    for (double p : p_values)
      r += (prop.alpha - cur.alpha) * std::log(p) + (prop.beta - cur.beta) * std::log1p(-p);
    double dt = current.theta - proposal.theta, du = current.tau - proposal.tau;
    r -= hyper.h / hyper.var_theta * dt * dt;
    r -= hyper.h / hyper.var_tau * du * du;
  }
  if (std::isnan(r))
    throw error(error_category::numerical,
                "MH log ratio is NaN at theta=" + std::to_string(proposal.theta) +
                    " tau=" + std::to_string(proposal.tau));
  return r;
}

struct mh_outcome {
  theta_tau state;
  bool accepted = false;
};

/// Optional bounds on theta, used for the hyper-scale ordering restriction.
struct theta_bounds {
  double lo = -std::numeric_limits<double>::infinity();
  double hi = std::numeric_limits<double>::infinity();
};

/// One random-walk step with proposal covariance Sigma / h. Proposals whose
/// implied alpha or beta is not a positive finite number are rejected.
inline mh_outcome mh_step(theta_tau current, std::span<const double> p_values,
                          const hyper_family &hyper, mh_mode mode, rng_t &rng,
                          theta_bounds bounds = {}) {
  double u = uniform01(rng);
  double z1 = std::sqrt(hyper.var_theta);
  double z2 = hyper.cov / z1;
  double z3 = std::sqrt(hyper.var_tau - z2 * z2);
  double scale = 1.0 / std::sqrt(hyper.h);
  double e1 = std_normal(rng), e2 = std_normal(rng);
  theta_tau prop{current.theta + scale * z1 * e1, current.tau + scale * (z2 * e1 + z3 * e2)};

  if (prop.theta < bounds.lo || prop.theta > bounds.hi)
    return {current, false};
  beta_params ab = alpha_beta_from_theta_tau(prop);
  auto ok = [](double v) { return std::isfinite(v) && v > 0.0; };
  if (!ok(ab.alpha) || !ok(ab.beta))
    return {current, false};

  double r = mh_log_ratio(current, prop, p_values, hyper, mode);
  if (std::log(u) <= r)
    return {prop, true};
  return {current, false};
}

/// Multiplicative tuning update. Larger h means narrower proposals, so h
/// shrinks when acceptance is above target and grows when it is below.
inline double tune(double h, double acceptance_rate, double target = 0.35, double kappa = 1.0) {
  return h * std::exp(-kappa * (acceptance_rate - target));
}

/// Proposal/acceptance counts per (family, block), and the tuning constant
/// of each family.
struct mh_stats {
  int families = 0;
  std::size_t blocks = 0;
  std::vector<count_t> proposals; ///< family-major
  std::vector<count_t> accepts;
  std::vector<double> h;

  mh_stats() = default;
  mh_stats(int F, std::size_t S) : families(F), blocks(S), proposals(F * S, 0), accepts(F * S, 0), h(F, 0.5) {}

  void record(int f, std::size_t s, bool accepted) {
    ++proposals[f * blocks + s];
    accepts[f * blocks + s] += accepted;
  }

  count_t family_proposals(int f) const {
    count_t n = 0;
    for (std::size_t s = 0; s < blocks; ++s)
      n += proposals[f * blocks + s];
    return n;
  }
  count_t family_accepts(int f) const {
    count_t n = 0;
    for (std::size_t s = 0; s < blocks; ++s)
      n += accepts[f * blocks + s];
    return n;
  }

  void reset_counts() {
    std::fill(proposals.begin(), proposals.end(), 0);
    std::fill(accepts.begin(), accepts.end(), 0);
  }

  mh_stats &operator+=(const mh_stats &o) {
    for (std::size_t i = 0; i < proposals.size(); ++i) {
      proposals[i] += o.proposals[i];
      accepts[i] += o.accepts[i];
    }
    return *this;
  }
};

// ---------------------------------------------------------------------------
// Sampler

struct hblcm_settings {
  gibbs_settings gibbs;
  std::size_t adapt_sweeps = 500;
  std::size_t tune_window = 50;
  double target_acceptance = 0.35;
  double kappa = 1.0;
  mh_mode mode = mh_mode::full_posterior;
  bool order_theta = false;      ///< also require theta_Mk >= theta_Uk per block
  bool keep_hyper_draws = false; ///< retain (theta, tau) draws per sweep

  void validate() const {
    gibbs.validate();
    require(tune_window >= 1, error_category::config, "hblcm: tune window must be >= 1");
    require(target_acceptance > 0.0 && target_acceptance < 1.0, error_category::config,
            "hblcm: target acceptance must lie in (0,1)");
  }
};

struct hblcm_summary {
  std::vector<std::string> names; ///< column names of `draws`
  chain_array draws;              ///< p values of every block, per chain and retained sweep
  std::vector<std::string> hyper_names;
  chain_array hyper_draws;        ///< (theta, tau) of every block and family, when kept
  std::vector<mixture_params> block_means;
  std::vector<mixture_params> block_sds;
  /// Posterior means of (theta, tau), indexed [block][family].
  std::vector<std::vector<theta_tau>> hyper_means;
  std::vector<std::vector<double>> match_props;
  std::vector<mh_stats> mh;          ///< per chain, sampling phase (h frozen)
  std::vector<mh_stats> mh_adapt;    ///< per chain, adaptation phase
  std::vector<constraint_stats> block_constraints;

  /// Sampling-phase stats pooled over chains.
  mh_stats pooled_mh() const {
    mh_stats out = mh.front();
    for (std::size_t c = 1; c < mh.size(); ++c)
      out += mh[c];
    return out;
  }
};

inline std::vector<std::string> block_param_names(std::span<const block_data> blocks, int K) {
  std::vector<std::string> names;
  auto base = global_param_names(K);
  for (auto &b : blocks)
    for (auto &n : base)
      names.push_back("s" + std::to_string(b.block_id) + "." + n);
  return names;
}

namespace detail {

struct hblcm_block_state {
  std::vector<theta_tau> tt; ///< per family
  std::vector<beta_params> ab;
  mixture_params params;
  match_counts ind;
};

struct hblcm_chain_output {
  std::vector<std::vector<double>> rows;
  std::vector<std::vector<double>> hyper_rows;
  std::vector<double> sum, sumsq;
  std::vector<double> hyper_sum;
  std::size_t retained = 0;
  std::vector<std::vector<double>> prop_sums;
  mh_stats sampling, adaptation;
  std::vector<constraint_stats> constraints;
};

inline theta_tau draw_from_hyper(const hyper_family &f, rng_t &rng) {
  double z1 = std::sqrt(f.var_theta);
  double z2 = f.cov / z1;
  double z3 = std::sqrt(f.var_tau - z2 * z2);
  double e1 = std_normal(rng), e2 = std_normal(rng);
  return {f.mu_theta + z1 * e1, f.mu_tau + z2 * e1 + z3 * e2};
}

inline hblcm_chain_output run_hblcm_chain(std::span<const block_data> blocks,
                                          const hyper_prior_spec &hyper,
                                          const hblcm_settings &s, std::size_t chain) {
  const int K = hyper.fields();
  const int F = hyper.families();
  const std::size_t S = blocks.size();
  const auto &g = s.gibbs;

  std::vector<rng_t> rng;
  rng.reserve(S);
  for (std::size_t b = 0; b < S; ++b)
    rng.push_back(make_stream(g.seed, {stream::hblcm, chain, b}));

  hblcm_chain_output out;
  out.sampling = mh_stats(F, S);
  out.adaptation = mh_stats(F, S);
  std::vector<double> h(F);
  for (int f = 0; f < F; ++f)
    h[f] = hyper.family(f).h;
  out.constraints.resize(S);
  out.prop_sums.resize(S);

  // Initial state: (theta, tau) from the hyperprior, indicators by the
  // hyperprior-centre rule unless supplied.
  mixture_params centre;
  centre.p_match = inv_logit(hyper.match.mu_theta);
  for (int k = 0; k < K; ++k) {
    centre.m_probs.push_back(inv_logit(hyper.m_fields[k].mu_theta));
    centre.u_probs.push_back(inv_logit(hyper.u_fields[k].mu_theta));
  }
  std::vector<match_counts> init = g.initial_indicators ? *g.initial_indicators
                                                        : threshold_indicators(blocks, centre);
  require(init.size() == S, error_category::config,
          "initial indicators must have one entry per block");

  std::vector<hblcm_block_state> st(S);
  for (std::size_t b = 0; b < S; ++b) {
    auto &x = st[b];
    for (int f = 0; f < F; ++f) {
      // Redraw until the implied Beta parameters are usable.
      theta_tau t;
      beta_params ab;
      do {
        t = draw_from_hyper(hyper.family(f), rng[b]);
        ab = alpha_beta_from_theta_tau(t);
      } while (!(ab.alpha > 0.0 && ab.beta > 0.0 && std::isfinite(ab.alpha) &&
                 std::isfinite(ab.beta)));
      x.tt.push_back(t);
      x.ab.push_back(ab);
    }
    x.params = centre;
    x.ind = init[b];
    out.prop_sums[b].assign(blocks[b].pattern_counts.size(), 0.0);
  }

  std::vector<double> caps(S, 1.0);
  if (g.enforce_cap)
    for (std::size_t b = 0; b < S; ++b)
      caps[b] = g.cap ? *g.cap : blocks[b].match_rate_cap();

  beta_prior_set prior;
  prior.m_fields.resize(K);
  prior.u_fields.resize(K);

  auto sweep_block = [&](std::size_t b, mh_stats &stats) {
    auto &x = st[b];
    auto &r = rng[b];
    class_tallies t(K);
    t.add(blocks[b], x.ind);

    // (a) match rate, (b) field probabilities
    x.params.p_match =
        draw_p_match(t, x.ab[0], caps[b], g.cap_policy(), r, out.constraints[b]);
    prior.match_rate = x.ab[0];
    for (int k = 0; k < K; ++k) {
      prior.m_fields[k] = x.ab[1 + k];
      prior.u_fields[k] = x.ab[1 + K + k];
    }
    auto fp = draw_field_probs(t, prior, g.enforce_ordering, g.ordering_policy(), r,
                               out.constraints[b]);
    x.params.m_probs = std::move(fp.m_probs);
    x.params.u_probs = std::move(fp.u_probs);

    // (c)-(e) hyperparameters
    for (int f = 0; f < F; ++f) {
      double p = f == 0 ? x.params.p_match
                        : (f <= K ? x.params.m_probs[f - 1] : x.params.u_probs[f - 1 - K]);
      p = clamp_probability(p);
      hyper_family fam = hyper.family(f);
      fam.h = h[f];
      theta_bounds bounds;
      if (s.order_theta && f >= 1) {
        if (f <= K)
          bounds.lo = x.tt[f + K].theta;
        else
          bounds.hi = x.tt[f - K].theta;
      }
      auto res = mh_step(x.tt[f], std::span<const double>(&p, 1), fam, s.mode, r, bounds);
      stats.record(f, b, res.accepted);
      if (res.accepted) {
        x.tt[f] = res.state;
        x.ab[f] = alpha_beta_from_theta_tau(res.state);
      }
    }

    // (f) indicators
    if (!g.freeze_indicators)
      x.ind = draw_indicators(blocks[b], pattern_posteriors(x.params), r);
  };

  // Adaptation phase: h is updated after every window from the pooled
  // acceptance rate of each family.
  for (std::size_t it = 0; it < s.adapt_sweeps; ++it) {
    for (std::size_t b = 0; b < S; ++b)
      sweep_block(b, out.adaptation);
    if ((it + 1) % s.tune_window == 0 || it + 1 == s.adapt_sweeps) {
      for (int f = 0; f < F; ++f) {
        count_t n = out.adaptation.family_proposals(f);
        if (n > 0) {
          double rate = static_cast<double>(out.adaptation.family_accepts(f)) / n;
          h[f] = tune(h[f], rate, s.target_acceptance, s.kappa);
        }
      }
      out.adaptation.h = h;
      out.adaptation.reset_counts();
    }
  }
  out.adaptation.h = h;
  out.sampling.h = h;

  const std::size_t sweeps = g.total_sweeps();
  for (std::size_t it = 0; it < sweeps; ++it) {
    for (std::size_t b = 0; b < S; ++b)
      sweep_block(b, out.sampling);
    if (it < g.burn_in || (it - g.burn_in) % g.thin != 0)
      continue;
    std::vector<double> row;
    row.reserve(S * F);
    std::vector<double> hrow;
    hrow.reserve(S * F * 2);
    for (std::size_t b = 0; b < S; ++b) {
      auto flat = flatten(st[b].params);
      row.insert(row.end(), flat.begin(), flat.end());
      for (int f = 0; f < F; ++f) {
        hrow.push_back(st[b].tt[f].theta);
        hrow.push_back(st[b].tt[f].tau);
      }
    }
    if (out.sum.empty()) {
      out.sum.assign(row.size(), 0.0);
      out.sumsq.assign(row.size(), 0.0);
      out.hyper_sum.assign(hrow.size(), 0.0);
    }
    for (std::size_t j = 0; j < row.size(); ++j) {
      out.sum[j] += row[j];
      out.sumsq[j] += row[j] * row[j];
    }
    for (std::size_t j = 0; j < hrow.size(); ++j)
      out.hyper_sum[j] += hrow[j];
    for (std::size_t b = 0; b < S; ++b)
      for (std::size_t p = 0; p < blocks[b].pattern_counts.size(); ++p)
        if (blocks[b].pattern_counts[p] > 0)
          out.prop_sums[b][p] += static_cast<double>(st[b].ind[p]) /
                                 static_cast<double>(blocks[b].pattern_counts[p]);
    if (g.keep_draws)
      out.rows.push_back(std::move(row));
    if (s.keep_hyper_draws)
      out.hyper_rows.push_back(std::move(hrow));
    ++out.retained;
  }
  return out;
}

} // namespace detail

/// Hierarchical model: per-block Beta parameters with bivariate-normal
/// hyperpriors on (theta, tau), sampled by Metropolis-Hastings within Gibbs.
/// Runs `adapt_sweeps` sweeps tuning h, then burn-in and retained sweeps with
/// h frozen.
inline hblcm_summary run_hblcm(std::span<const block_data> blocks, const hyper_prior_spec &hyper,
                               const hblcm_settings &settings,
                               std::size_t workers = default_workers()) {
  settings.validate();
  hyper.validate();
  const int K = common_fields(blocks);
  require(hyper.fields() == K, error_category::dimension, "hyperprior/data field mismatch");
  for (auto &b : blocks)
    b.validate();
  const int F = hyper.families();
  const std::size_t S = blocks.size();

  std::vector<detail::hblcm_chain_output> outs(settings.gibbs.chains);
  parallel_for(outs.size(), workers, [&](std::size_t c) {
    outs[c] = detail::run_hblcm_chain(blocks, hyper, settings, c);
  });

  hblcm_summary sum;
  sum.names = block_param_names(blocks, K);
  for (auto &b : blocks)
    for (int f = 0; f < F; ++f) {
      std::string base = "s" + std::to_string(b.block_id) + "." + hyper.family_name(f);
      sum.hyper_names.push_back(base + ".theta");
      sum.hyper_names.push_back(base + ".tau");
    }

  const std::size_t P = S * F;
  std::vector<double> s1(P, 0.0), s2(P, 0.0), hs(2 * P, 0.0);
  double n = 0.0;
  sum.match_props.resize(S);
  for (std::size_t b = 0; b < S; ++b)
    sum.match_props[b].assign(blocks[b].pattern_counts.size(), 0.0);
  sum.block_constraints.resize(S);
  for (auto &o : outs) {
    for (std::size_t j = 0; j < P; ++j) {
      s1[j] += o.sum[j];
      s2[j] += o.sumsq[j];
    }
    for (std::size_t j = 0; j < 2 * P; ++j)
      hs[j] += o.hyper_sum[j];
    n += static_cast<double>(o.retained);
    for (std::size_t b = 0; b < S; ++b) {
      for (std::size_t p = 0; p < o.prop_sums[b].size(); ++p)
        sum.match_props[b][p] += o.prop_sums[b][p];
      sum.block_constraints[b] += o.constraints[b];
    }
    sum.mh.push_back(std::move(o.sampling));
    sum.mh_adapt.push_back(std::move(o.adaptation));
    if (settings.gibbs.keep_draws)
      sum.draws.push_back(std::move(o.rows));
    if (settings.keep_hyper_draws)
      sum.hyper_draws.push_back(std::move(o.hyper_rows));
  }
  for (auto &row : sum.match_props)
    for (auto &v : row)
      v /= n;

  auto unflatten = [K](const double *v) {
    mixture_params p;
    p.p_match = v[0];
    p.m_probs.assign(v + 1, v + 1 + K);
    p.u_probs.assign(v + 1 + K, v + 1 + 2 * K);
    return p;
  };
  std::vector<double> mean(P), sd(P);
  for (std::size_t j = 0; j < P; ++j) {
    mean[j] = s1[j] / n;
    double var = n > 1 ? (s2[j] - n * mean[j] * mean[j]) / (n - 1.0) : 0.0;
    sd[j] = std::sqrt(std::max(var, 0.0));
  }
  sum.hyper_means.resize(S);
  for (std::size_t b = 0; b < S; ++b) {
    sum.block_means.push_back(unflatten(mean.data() + b * F));
    sum.block_sds.push_back(unflatten(sd.data() + b * F));
    for (int f = 0; f < F; ++f)
      sum.hyper_means[b].push_back(
          {hs[2 * (b * F + f)] / n, hs[2 * (b * F + f) + 1] / n});
  }
  return sum;
}

} // namespace reclink

#endif
