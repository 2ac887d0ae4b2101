#ifndef RECLINK_LCA_HPP
#define RECLINK_LCA_HPP

#include <cmath>
#include <optional>
#include <span>
#include <vector>

#include "core.hpp"
#include "random.hpp"

namespace reclink {

struct em_settings {
  int max_iter = 1000;
  double tol = 1e-8; ///< on the change in mean log-likelihood per pair
  std::optional<mixture_params> init;
  bool identify_by_ordering = true;

  // Default start, used when `init` is empty.
  double init_p_match = 0.04;
  double init_m = 0.8;
  double init_u = 0.3;
  double jitter = 0.01;
  std::uint64_t seed = 1;
};

struct em_result {
  mixture_params params;
  std::vector<double> loglik_trace; ///< mean log-likelihood per pair, one per iteration
  int iterations = 0;
  bool converged = false;
};

namespace detail {

inline mixture_params em_default_start(int K, const em_settings &s) {
  auto rng = make_stream(s.seed, {stream::em_init});
  std::uniform_real_distribution<double> jit(-s.jitter, s.jitter);
  mixture_params p;
  p.p_match = s.init_p_match;
  p.m_probs.resize(K);
  p.u_probs.resize(K);
  for (int k = 0; k < K; ++k)
    p.m_probs[k] = s.init_m + jit(rng);
  for (int k = 0; k < K; ++k)
    p.u_probs[k] = s.init_u + jit(rng);
  return p;
}

inline double mean(std::span<const double> v) {
  double s = 0.0;
  for (double x : v)
    s += x;
  return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

} // namespace detail

/// Mean log-likelihood per pair of pooled pattern counts under `params`.
inline double mean_loglik(std::span<const count_t> counts, const mixture_params &params) {
  auto lm = pattern_log_likelihoods(params.m_probs);
  auto lu = pattern_log_likelihoods(params.u_probs);
  double pm = clamp_probability(params.p_match);
  double lpm = std::log(pm), lpu = std::log1p(-pm);
  double ll = 0.0, n = 0.0;
  for (std::size_t p = 0; p < counts.size(); ++p) {
    if (counts[p] == 0)
      continue;
    ll += static_cast<double>(counts[p]) * log_sum_exp(lpm + lm[p], lpu + lu[p]);
    n += static_cast<double>(counts[p]);
  }
  return ll / n;
}

/// Two-class conditional-independence mixture fitted by EM on pooled
/// pattern counts (length 2^K).
inline em_result em_fit(std::span<const count_t> counts, int K, const em_settings &settings) {
  require(K >= 1 && K <= max_fields, error_category::dimension, "em: bad field count");
  require(counts.size() == pattern_count(K), error_category::dimension,
          "em: counts must have 2^K entries");
  require(settings.tol > 0.0 && settings.max_iter >= 1, error_category::config,
          "em: tol must be positive and max_iter >= 1");
  double total = 0.0;
  std::size_t distinct = 0;
  for (auto c : counts) {
    total += static_cast<double>(c);
    distinct += c > 0;
  }
  require(total >= 2.0, error_category::data, "em: need at least two pairs");
  require(distinct >= 2, error_category::data,
          "em: all pairs share one pattern; the mixture is not identifiable");

  em_result res;
  res.params = settings.init ? *settings.init : detail::em_default_start(K, settings);
  res.params.validate();
  require(res.params.fields() == K, error_category::dimension, "em: init has wrong field count");

  const std::size_t P = counts.size();
  double prev = 0.0;
  for (int it = 0; it < settings.max_iter; ++it) {
    double ll = mean_loglik(counts, res.params);
    require(std::isfinite(ll), error_category::numerical, "em: non-finite log-likelihood");
    res.loglik_trace.push_back(ll);
    res.iterations = it + 1;
    if (it > 0 && std::abs(ll - prev) < settings.tol) {
      res.converged = true;
      break;
    }
    prev = ll;

    auto q = pattern_posteriors(res.params);
    double wm = 0.0;
    std::vector<double> am(K, 0.0), au(K, 0.0);
    double wu = 0.0;
    for (std::size_t p = 0; p < P; ++p) {
      if (counts[p] == 0)
        continue;
      double n = static_cast<double>(counts[p]);
      double rm = n * q[p], ru = n * (1.0 - q[p]);
      wm += rm;
      wu += ru;
      for (int k = 0; k < K; ++k) {
        if ((p >> k) & 1u) {
          am[k] += rm;
          au[k] += ru;
        }
      }
    }
    res.params.p_match = clamp_probability(wm / total);
    for (int k = 0; k < K; ++k) {
      res.params.m_probs[k] = clamp_probability(wm > 0 ? am[k] / wm : 0.5);
      res.params.u_probs[k] = clamp_probability(wu > 0 ? au[k] / wu : 0.5);
    }
  }

  if (settings.identify_by_ordering &&
      detail::mean(res.params.m_probs) < detail::mean(res.params.u_probs)) {
    std::swap(res.params.m_probs, res.params.u_probs);
    res.params.p_match = 1.0 - res.params.p_match;
  }
  return res;
}

inline em_result em_fit(std::span<const block_data> blocks, const em_settings &settings) {
  int K = common_fields(blocks);
  auto pooled = pool_counts(blocks);
  return em_fit(pooled, K, settings);
}

enum class link_decision { link, undecided, nonlink };

inline const char *to_string(link_decision d) {
  switch (d) {
  case link_decision::link: return "link";
  case link_decision::undecided: return "undecided";
  case link_decision::nonlink: return "nonlink";
  }
  return "?";
}

/// Three-way rule: link at or above `upper`, nonlink at or below `lower`.
inline link_decision classify(double posterior, double upper, double lower) {
  if (posterior >= upper)
    return link_decision::link;
  if (posterior <= lower)
    return link_decision::nonlink;
  return link_decision::undecided;
}

inline std::vector<link_decision> classify(std::span<const comparison_pattern> patterns,
                                           const mixture_params &params, double upper,
                                           double lower) {
  require(0.0 <= lower && lower <= upper && upper <= 1.0, error_category::config,
          "classify: need 0 <= lower <= upper <= 1");
  std::vector<link_decision> out;
  out.reserve(patterns.size());
  for (auto &g : patterns)
    out.push_back(classify(posterior_match_prob(g, params), upper, lower));
  return out;
}

} // namespace reclink

#endif
