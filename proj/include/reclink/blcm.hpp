#ifndef RECLINK_BLCM_HPP
#define RECLINK_BLCM_HPP

#include <cmath>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "core.hpp"
#include "parallel.hpp"
#include "random.hpp"

namespace reclink {

enum class constraint_mode { reject, rescale };
enum class cap_rule { global_ratio, block_min };

inline const char *to_string(constraint_mode m) {
  return m == constraint_mode::reject ? "reject" : "rescale";
}

/// How a truncated conditional draw is produced. Reject redraws up to
/// `retry_budget` times and then falls back to rescaling unless `strict`.
struct constraint_policy {
  constraint_mode mode = constraint_mode::reject;
  std::size_t retry_budget = 1000;
  bool strict = false;
};

struct constraint_stats {
  count_t cap_fallbacks = 0;
  count_t ordering_fallbacks = 0;

  constraint_stats &operator+=(const constraint_stats &o) {
    cap_fallbacks += o.cap_fallbacks;
    ordering_fallbacks += o.ordering_fallbacks;
    return *this;
  }
};

struct gibbs_settings {
  std::size_t chains = 4;
  std::size_t burn_in = 1000;
  std::size_t n_keep = 2000;
  std::size_t thin = 1;
  std::uint64_t seed = 1;

  bool enforce_cap = true;
  bool enforce_ordering = true;
  constraint_mode cap_mode = constraint_mode::reject;
  constraint_mode ordering_mode = constraint_mode::reject;
  std::size_t retry_budget = 1000;
  bool strict_reject = false;
  std::optional<double> cap;          ///< explicit p_M ceiling; otherwise derived from the data
  cap_rule cap_from = cap_rule::global_ratio;

  /// Starting indicator configuration, one vector per block. When empty the
  /// prior-means rule is used.
  std::optional<std::vector<match_counts>> initial_indicators;
  bool freeze_indicators = false; ///< debug: never resample indicators

  bool keep_draws = true;

  constraint_policy cap_policy() const { return {cap_mode, retry_budget, strict_reject}; }
  constraint_policy ordering_policy() const { return {ordering_mode, retry_budget, strict_reject}; }

  void validate() const {
    require(chains >= 1 && n_keep >= 1 && thin >= 1, error_category::config,
            "gibbs: chains, n_keep and thin must be positive");
    require(!cap || (*cap > 0.0 && *cap <= 1.0), error_category::config,
            "gibbs: cap must lie in (0,1]");
  }

  std::size_t total_sweeps() const { return burn_in + n_keep * thin; }
};

/// Class-conditional counts implied by an indicator configuration.
struct class_tallies {
  count_t matches = 0;
  count_t nonmatches = 0;
  std::vector<count_t> m_agree; ///< agreements on field k among sampled matches
  std::vector<count_t> u_agree;

  explicit class_tallies(int K = 0) : m_agree(K, 0), u_agree(K, 0) {}

  void add(const block_data &b, const match_counts &m) {
    const int K = b.fields;
    for (std::size_t p = 0; p < b.pattern_counts.size(); ++p) {
      count_t n = b.pattern_counts[p];
      if (n == 0)
        continue;
      count_t mm = m[p], uu = n - m[p];
      matches += mm;
      nonmatches += uu;
      for (int k = 0; k < K; ++k) {
        if ((p >> k) & 1u) {
          m_agree[k] += mm;
          u_agree[k] += uu;
        }
      }
    }
  }
};

inline class_tallies tally(std::span<const block_data> blocks,
                           std::span<const match_counts> indicators) {
  class_tallies t(common_fields(blocks));
  for (std::size_t s = 0; s < blocks.size(); ++s)
    t.add(blocks[s], indicators[s]);
  return t;
}

// ---------------------------------------------------------------------------
// Priors

/// Beta prior built from pairs of known status: counts of matches and
/// nonmatches, and of agreements/disagreements per field within each class.
/// Empty cells become 0.5.
inline beta_prior_set training_prior(std::span<const block_data> labeled) {
  int K = common_fields(labeled);
  class_tallies t(K);
  for (auto &b : labeled) {
    require(b.truth_match_counts.has_value(), error_category::data,
            "training_prior: block " + std::to_string(b.block_id) + " has no truth labels");
    t.add(b, *b.truth_match_counts);
  }
  require(t.matches > 0 && t.nonmatches > 0, error_category::data,
          "training_prior: training data needs both matches and nonmatches");
  auto cell = [](count_t c) { return c == 0 ? 0.5 : static_cast<double>(c); };
  beta_prior_set prior;
  prior.match_rate = {cell(t.matches), cell(t.nonmatches)};
  for (int k = 0; k < K; ++k) {
    prior.m_fields.push_back({cell(t.m_agree[k]), cell(t.matches - t.m_agree[k])});
    prior.u_fields.push_back({cell(t.u_agree[k]), cell(t.nonmatches - t.u_agree[k])});
  }
  return prior;
}

/// Prior whose Beta components have the given means and standard deviations.
inline beta_prior_set elicited_prior(int K, double match_mean, double match_sd, double m_mean,
                                     double m_sd, double u_mean, double u_sd) {
  beta_prior_set prior;
  prior.match_rate = beta_from_moments(match_mean, match_sd);
  prior.m_fields.assign(K, beta_from_moments(m_mean, m_sd));
  prior.u_fields.assign(K, beta_from_moments(u_mean, u_sd));
  return prior;
}

// ---------------------------------------------------------------------------
// Conditional draws

/// Number of matches among each pattern's pairs: Binomial(n_p, q_p) with q_p
/// the posterior match probability of the pattern.
inline match_counts draw_indicators(const block_data &block, std::span<const double> q, rng_t &rng) {
  match_counts m(block.pattern_counts.size(), 0);
  for (std::size_t p = 0; p < m.size(); ++p)
    m[p] = binomial_variate(block.pattern_counts[p], q[p], rng);
  return m;
}

inline match_counts draw_indicators(const block_data &block, const mixture_params &params,
                                    rng_t &rng) {
  auto q = pattern_posteriors(params);
  return draw_indicators(block, q, rng);
}

/// Beta(a, b) draw restricted to (0, cap].
inline double draw_capped_beta(double a, double b, double cap, const constraint_policy &policy,
                               rng_t &rng, count_t &fallbacks) {
  if (cap >= 1.0)
    return beta_variate(a, b, rng);
  if (policy.mode == constraint_mode::reject) {
    for (std::size_t i = 0; i < policy.retry_budget; ++i) {
      double x = beta_variate(a, b, rng);
      if (x <= cap)
        return x;
    }
    require(!policy.strict, error_category::constraint,
            "cap rejection budget exhausted (cap " + std::to_string(cap) + ")");
    ++fallbacks;
  }
  return cap * beta_variate(a, b, rng);
}

/// Match-rate draw from Beta(alpha_M + matches, beta_M + nonmatches), capped.
inline double draw_p_match(const class_tallies &t, beta_params prior, double cap,
                           const constraint_policy &policy, rng_t &rng,
                           constraint_stats &stats) {
  require(cap > 0.0 && cap <= 1.0, error_category::config, "cap must lie in (0,1]");
  return draw_capped_beta(prior.alpha + static_cast<double>(t.matches),
                          prior.beta + static_cast<double>(t.nonmatches), cap, policy, rng,
                          stats.cap_fallbacks);
}

struct field_probs {
  std::vector<double> m_probs;
  std::vector<double> u_probs;
};

/// Per-field agreement probabilities for both classes. With `ordered`, each
/// field satisfies m >= u.
inline field_probs draw_field_probs(const class_tallies &t, const beta_prior_set &prior,
                                    bool ordered, const constraint_policy &policy, rng_t &rng,
                                    constraint_stats &stats) {
  const int K = static_cast<int>(t.m_agree.size());
  require(prior.fields() == K, error_category::dimension, "prior/tally field mismatch");
  field_probs out{std::vector<double>(K), std::vector<double>(K)};
  for (int k = 0; k < K; ++k) {
    double am = prior.m_fields[k].alpha + static_cast<double>(t.m_agree[k]);
    double bm = prior.m_fields[k].beta + static_cast<double>(t.matches - t.m_agree[k]);
    double au = prior.u_fields[k].alpha + static_cast<double>(t.u_agree[k]);
    double bu = prior.u_fields[k].beta + static_cast<double>(t.nonmatches - t.u_agree[k]);
    if (!ordered) {
      out.m_probs[k] = beta_variate(am, bm, rng);
      out.u_probs[k] = beta_variate(au, bu, rng);
      continue;
    }
    bool done = false;
    if (policy.mode == constraint_mode::reject) {
      for (std::size_t i = 0; i < policy.retry_budget && !done; ++i) {
        double m = beta_variate(am, bm, rng);
        double u = beta_variate(au, bu, rng);
        if (m >= u) {
          out.m_probs[k] = m;
          out.u_probs[k] = u;
          done = true;
        }
      }
      if (!done) {
        require(!policy.strict, error_category::constraint,
                "ordering rejection budget exhausted for field " + std::to_string(k + 1));
        ++stats.ordering_fallbacks;
      }
    }
    if (!done) {
      out.m_probs[k] = beta_variate(am, bm, rng);
      out.u_probs[k] = out.m_probs[k] * beta_variate(au, bu, rng);
    }
  }
  return out;
}

/// Indicators that put every pair of a pattern in the match class when the
/// pattern's posterior under `params` is at least 0.5.
inline std::vector<match_counts> threshold_indicators(std::span<const block_data> blocks,
                                                      const mixture_params &params) {
  auto q = pattern_posteriors(params);
  std::vector<match_counts> out;
  out.reserve(blocks.size());
  for (auto &b : blocks) {
    match_counts m(b.pattern_counts.size(), 0);
    for (std::size_t p = 0; p < m.size(); ++p)
      m[p] = q[p] >= 0.5 ? b.pattern_counts[p] : 0;
    out.push_back(std::move(m));
  }
  return out;
}

inline double resolve_cap(std::span<const block_data> blocks, const gibbs_settings &s) {
  if (!s.enforce_cap)
    return 1.0;
  if (s.cap)
    return *s.cap;
  if (s.cap_from == cap_rule::block_min) {
    double cap = 1.0;
    for (auto &b : blocks)
      if (b.pairs() > 0)
        cap = std::min(cap, b.match_rate_cap());
    return cap;
  }
  count_t na = 0, nb = 0, pairs = 0;
  for (auto &b : blocks) {
    na += b.n_a;
    nb += b.n_b;
    pairs += b.pairs();
  }
  if (pairs == 0)
    return 1.0;
  return std::min(1.0, static_cast<double>(std::min(na, nb)) / static_cast<double>(pairs));
}

// ---------------------------------------------------------------------------
// Sampler

inline std::vector<std::string> global_param_names(int K) {
  std::vector<std::string> names{"p_M"};
  for (int k = 1; k <= K; ++k)
    names.push_back("p_M" + std::to_string(k));
  for (int k = 1; k <= K; ++k)
    names.push_back("p_U" + std::to_string(k));
  return names;
}

inline std::vector<double> flatten(const mixture_params &p) {
  std::vector<double> row{p.p_match};
  row.insert(row.end(), p.m_probs.begin(), p.m_probs.end());
  row.insert(row.end(), p.u_probs.begin(), p.u_probs.end());
  return row;
}

/// Retained draws per chain: chains x sweeps x parameters.
using chain_array = std::vector<std::vector<std::vector<double>>>;

struct posterior_summary {
  std::vector<std::string> names;
  std::vector<double> mean;
  std::vector<double> sd;
  chain_array draws;
  /// Fraction of retained sweeps in which a pair with pattern p in block s was
  /// a match; indexed [s][p].
  std::vector<std::vector<double>> match_props;
  constraint_stats constraints;
  double cap = 1.0;

  mixture_params mean_params() const {
    int K = static_cast<int>((mean.size() - 1) / 2);
    mixture_params p;
    p.p_match = mean[0];
    p.m_probs.assign(mean.begin() + 1, mean.begin() + 1 + K);
    p.u_probs.assign(mean.begin() + 1 + K, mean.end());
    return p;
  }
};

namespace detail {

struct chain_output {
  std::vector<std::vector<double>> rows;
  std::vector<double> sum, sumsq;
  std::size_t retained = 0;
  std::vector<std::vector<double>> prop_sums;
  constraint_stats constraints;
};

inline void accumulate_moments(chain_output &out, const std::vector<double> &row, bool keep) {
  if (out.sum.empty()) {
    out.sum.assign(row.size(), 0.0);
    out.sumsq.assign(row.size(), 0.0);
  }
  for (std::size_t j = 0; j < row.size(); ++j) {
    out.sum[j] += row[j];
    out.sumsq[j] += row[j] * row[j];
  }
  if (keep)
    out.rows.push_back(row);
}

inline void accumulate_props(chain_output &out, std::span<const block_data> blocks,
                             std::span<const match_counts> ind) {
  for (std::size_t s = 0; s < blocks.size(); ++s)
    for (std::size_t p = 0; p < blocks[s].pattern_counts.size(); ++p)
      if (blocks[s].pattern_counts[p] > 0)
        out.prop_sums[s][p] += static_cast<double>(ind[s][p]) /
                               static_cast<double>(blocks[s].pattern_counts[p]);
}

inline chain_output run_blcm_chain(std::span<const block_data> blocks, const beta_prior_set &prior,
                                   const gibbs_settings &s, double cap, std::size_t chain) {
  auto rng = make_stream(s.seed, {stream::blcm, chain});
  std::vector<rng_t> block_rng;
  block_rng.reserve(blocks.size());
  for (std::size_t b = 0; b < blocks.size(); ++b)
    block_rng.push_back(make_stream(s.seed, {stream::blcm, chain, b + 1}));

  chain_output out;
  out.prop_sums.resize(blocks.size());
  for (std::size_t b = 0; b < blocks.size(); ++b)
    out.prop_sums[b].assign(blocks[b].pattern_counts.size(), 0.0);

  mixture_params params = prior.means();
  params.p_match = std::min(params.p_match, cap);
  std::vector<match_counts> ind = s.initial_indicators ? *s.initial_indicators
                                                       : threshold_indicators(blocks, params);
  require(ind.size() == blocks.size(), error_category::config,
          "initial indicators must have one entry per block");

  auto update_params = [&] {
    auto t = tally(blocks, ind);
    params.p_match = draw_p_match(t, prior.match_rate, cap, s.cap_policy(), rng, out.constraints);
    auto f = draw_field_probs(t, prior, s.enforce_ordering, s.ordering_policy(), rng,
                              out.constraints);
    params.m_probs = std::move(f.m_probs);
    params.u_probs = std::move(f.u_probs);
  };
  update_params();

  const std::size_t sweeps = s.total_sweeps();
  for (std::size_t it = 0; it < sweeps; ++it) {
    if (!s.freeze_indicators) {
      auto q = pattern_posteriors(params);
      for (std::size_t b = 0; b < blocks.size(); ++b)
        ind[b] = draw_indicators(blocks[b], q, block_rng[b]);
    }
    update_params();
    if (it >= s.burn_in && (it - s.burn_in) % s.thin == 0) {
      accumulate_moments(out, flatten(params), s.keep_draws);
      accumulate_props(out, blocks, ind);
      ++out.retained;
    }
  }
  return out;
}

} // namespace detail

/// Bayesian latent class model with global parameters, sampled by Gibbs.
/// Each sweep draws indicators, then p_M, then the per-field probabilities.
inline posterior_summary run_blcm(std::span<const block_data> blocks, const beta_prior_set &prior,
                                  const gibbs_settings &settings,
                                  std::size_t workers = default_workers()) {
  settings.validate();
  prior.validate();
  int K = common_fields(blocks);
  require(prior.fields() == K, error_category::dimension, "prior/data field mismatch");
  for (auto &b : blocks)
    b.validate();
  double cap = resolve_cap(blocks, settings);

  std::vector<detail::chain_output> outs(settings.chains);
  parallel_for(settings.chains, workers, [&](std::size_t c) {
    outs[c] = detail::run_blcm_chain(blocks, prior, settings, cap, c);
  });

  posterior_summary sum;
  sum.names = global_param_names(K);
  sum.cap = cap;
  const std::size_t P = sum.names.size();
  std::vector<double> s1(P, 0.0), s2(P, 0.0);
  double n = 0.0;
  sum.match_props.resize(blocks.size());
  for (std::size_t b = 0; b < blocks.size(); ++b)
    sum.match_props[b].assign(blocks[b].pattern_counts.size(), 0.0);
  for (auto &o : outs) {
    for (std::size_t j = 0; j < P; ++j) {
      s1[j] += o.sum[j];
      s2[j] += o.sumsq[j];
    }
    n += static_cast<double>(o.retained);
    for (std::size_t b = 0; b < blocks.size(); ++b)
      for (std::size_t p = 0; p < o.prop_sums[b].size(); ++p)
        sum.match_props[b][p] += o.prop_sums[b][p];
    sum.constraints += o.constraints;
    if (settings.keep_draws)
      sum.draws.push_back(std::move(o.rows));
  }
  sum.mean.resize(P);
  sum.sd.resize(P);
  for (std::size_t j = 0; j < P; ++j) {
    sum.mean[j] = s1[j] / n;
    double var = n > 1 ? (s2[j] - n * sum.mean[j] * sum.mean[j]) / (n - 1.0) : 0.0;
    sum.sd[j] = std::sqrt(std::max(var, 0.0));
  }
  for (auto &row : sum.match_props)
    for (auto &v : row)
      v /= n;
  return sum;
}

} // namespace reclink

#endif
