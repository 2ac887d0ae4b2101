#ifndef RECLINK_CORE_HPP
#define RECLINK_CORE_HPP

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "errors.hpp"

namespace reclink {

using pattern_t = std::uint32_t;
using count_t = std::uint64_t;

// Dense 2^K pattern tables are used everywhere, which bounds K.
inline constexpr int max_fields = 20;

inline constexpr double prob_floor = 1e-9;

inline std::size_t pattern_count(int fields) { return std::size_t{1} << fields; }

/// Agreement vector for one record pair. Field k (0-based) is bit k of the
/// packed index.
class comparison_pattern {
public:
  comparison_pattern(pattern_t index, int fields) : index_(index), fields_(fields) {
    require(fields >= 1 && fields <= max_fields, error_category::dimension,
            "field count must be in [1, " + std::to_string(max_fields) + "]");
    require(index < pattern_count(fields), error_category::dimension,
            "pattern index out of range for field count");
  }

  static comparison_pattern from_bits(std::span<const int> bits) {
    require(!bits.empty() && bits.size() <= max_fields, error_category::dimension,
            "pattern length must be in [1, " + std::to_string(max_fields) + "]");
    pattern_t idx = 0;
    for (std::size_t k = 0; k < bits.size(); ++k) {
      require(bits[k] == 0 || bits[k] == 1, error_category::domain,
              "pattern entries must be 0 or 1");
      idx |= static_cast<pattern_t>(bits[k]) << k;
    }
    return {idx, static_cast<int>(bits.size())};
  }
  static comparison_pattern from_bits(std::initializer_list<int> bits) {
    std::vector<int> v(bits);
    return from_bits(std::span<const int>(v));
  }

  pattern_t index() const noexcept { return index_; }
  int fields() const noexcept { return fields_; }
  bool agrees(int k) const noexcept { return (index_ >> k) & 1u; }

  std::vector<int> bits() const {
    std::vector<int> out(fields_);
    for (int k = 0; k < fields_; ++k)
      out[k] = agrees(k) ? 1 : 0;
    return out;
  }

private:
  pattern_t index_;
  int fields_;
};

// ---------------------------------------------------------------------------
// Probability clamping

namespace detail {
inline std::atomic<std::uint64_t> &clamp_counter() {
  static std::atomic<std::uint64_t> c{0};
  return c;
}
} // namespace detail

/// Number of times a probability was pulled into [1e-9, 1-1e-9] since start.
inline std::uint64_t clamp_events() { return detail::clamp_counter().load(std::memory_order_relaxed); }

inline double clamp_probability(double p) {
  if (p < prob_floor || p > 1.0 - prob_floor) {
    detail::clamp_counter().fetch_add(1, std::memory_order_relaxed);
    return std::clamp(p, prob_floor, 1.0 - prob_floor);
  }
  return p;
}

inline double logit(double p) { return std::log(p) - std::log1p(-p); }
inline double inv_logit(double x) {
  return x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
}

inline double log_sum_exp(double a, double b) {
  double m = std::max(a, b);
  if (m == -INFINITY)
    return m;
  return m + std::log(std::exp(a - m) + std::exp(b - m));
}

// ---------------------------------------------------------------------------
// Parameters

struct mixture_params {
  double p_match = 0.0;
  std::vector<double> m_probs; ///< Pr(agree on field k | match)
  std::vector<double> u_probs; ///< Pr(agree on field k | nonmatch)

  int fields() const { return static_cast<int>(m_probs.size()); }

  void validate() const {
    require(!m_probs.empty() && m_probs.size() <= max_fields, error_category::dimension,
            "mixture params need 1.." + std::to_string(max_fields) + " fields");
    require(m_probs.size() == u_probs.size(), error_category::dimension,
            "m and u probability vectors differ in length");
    auto open = [](double p) { return p > 0.0 && p < 1.0; };
    require(open(p_match), error_category::domain, "p_match must lie in (0,1)");
    require(std::all_of(m_probs.begin(), m_probs.end(), open) &&
                std::all_of(u_probs.begin(), u_probs.end(), open),
            error_category::domain, "field probabilities must lie in (0,1)");
  }

  bool ordered() const {
    for (std::size_t k = 0; k < m_probs.size(); ++k)
      if (m_probs[k] < u_probs[k])
        return false;
    return true;
  }
};

struct beta_params {
  double alpha = 1.0;
  double beta = 1.0;

  double mean() const { return alpha / (alpha + beta); }
  double sd() const {
    double s = alpha + beta;
    return std::sqrt(alpha * beta / (s * s * (s + 1.0)));
  }
};

struct beta_prior_set {
  beta_params match_rate;
  std::vector<beta_params> m_fields;
  std::vector<beta_params> u_fields;

  int fields() const { return static_cast<int>(m_fields.size()); }

  void validate() const {
    require(!m_fields.empty() && m_fields.size() == u_fields.size(), error_category::dimension,
            "prior needs matching, nonempty m/u field lists");
    auto pos = [](const beta_params &b) { return b.alpha > 0.0 && b.beta > 0.0; };
    require(pos(match_rate) && std::all_of(m_fields.begin(), m_fields.end(), pos) &&
                std::all_of(u_fields.begin(), u_fields.end(), pos),
            error_category::domain, "Beta prior parameters must be positive");
  }

  /// Prior means as a mixture parameter set.
  mixture_params means() const {
    mixture_params p;
    p.p_match = match_rate.mean();
    for (auto &b : m_fields)
      p.m_probs.push_back(b.mean());
    for (auto &b : u_fields)
      p.u_probs.push_back(b.mean());
    return p;
  }
};

/// Mean/size coordinates of a Beta(alpha, beta): theta = logit of the mean,
/// tau = log(alpha + beta).
struct theta_tau {
  double theta = 0.0;
  double tau = 0.0;
};

inline theta_tau theta_tau_from_alpha_beta(beta_params b) {
  require(b.alpha > 0.0 && b.beta > 0.0, error_category::domain,
          "alpha and beta must be positive");
  return {std::log(b.alpha) - std::log(b.beta), std::log(b.alpha + b.beta)};
}

inline beta_params alpha_beta_from_theta_tau(theta_tau t) {
  require(std::isfinite(t.theta) && std::isfinite(t.tau), error_category::domain,
          "theta and tau must be finite");
  double size = std::exp(t.tau);
  return {size * inv_logit(t.theta), size * inv_logit(-t.theta)};
}

/// Method-of-moments Beta with the given mean and standard deviation.
inline beta_params beta_from_moments(double mean, double sd) {
  require(mean > 0.0 && mean < 1.0, error_category::domain, "Beta mean must lie in (0,1)");
  require(sd > 0.0, error_category::domain, "Beta sd must be positive");
  double v = mean * (1.0 - mean);
  require(sd * sd < v, error_category::domain,
          "infeasible Beta moments: sd^2 must be below mean*(1-mean)");
  double size = v / (sd * sd) - 1.0;
  return {mean * size, (1.0 - mean) * size};
}

inline double log_beta_fn(double a, double b) {
  return std::lgamma(a) + std::lgamma(b) - std::lgamma(a + b);
}

inline double log_beta_pdf(double x, double a, double b) {
  return (a - 1.0) * std::log(x) + (b - 1.0) * std::log1p(-x) - log_beta_fn(a, b);
}

// ---------------------------------------------------------------------------
// Likelihood kernels

inline double log_pattern_likelihood(const comparison_pattern &g, std::span<const double> probs) {
  require(static_cast<std::size_t>(g.fields()) == probs.size(), error_category::dimension,
          "pattern has " + std::to_string(g.fields()) + " fields but " +
              std::to_string(probs.size()) + " probabilities were given");
  double ll = 0.0;
  for (int k = 0; k < g.fields(); ++k) {
    double p = clamp_probability(probs[k]);
    ll += g.agrees(k) ? std::log(p) : std::log1p(-p);
  }
  return ll;
}

inline double pattern_likelihood(const comparison_pattern &g, std::span<const double> probs) {
  return std::exp(log_pattern_likelihood(g, probs));
}

inline double posterior_match_prob(const comparison_pattern &g, const mixture_params &params) {
  double pm = clamp_probability(params.p_match);
  double lm = std::log(pm) + log_pattern_likelihood(g, params.m_probs);
  double lu = std::log1p(-pm) + log_pattern_likelihood(g, params.u_probs);
  return std::exp(lm - log_sum_exp(lm, lu));
}

/// Per-pattern log Pr(gamma | class) for every pattern of a K-field model.
inline std::vector<double> pattern_log_likelihoods(std::span<const double> probs) {
  int K = static_cast<int>(probs.size());
  std::vector<double> la(K), ld(K);
  for (int k = 0; k < K; ++k) {
    double p = clamp_probability(probs[k]);
    la[k] = std::log(p);
    ld[k] = std::log1p(-p);
  }
  std::size_t n = pattern_count(K);
  std::vector<double> out(n);
  for (std::size_t idx = 0; idx < n; ++idx) {
    double ll = 0.0;
    for (int k = 0; k < K; ++k)
      ll += ((idx >> k) & 1u) ? la[k] : ld[k];
    out[idx] = ll;
  }
  return out;
}

/// Posterior match probability of every pattern index under `params`.
inline std::vector<double> pattern_posteriors(const mixture_params &params) {
  auto lm = pattern_log_likelihoods(params.m_probs);
  auto lu = pattern_log_likelihoods(params.u_probs);
  double pm = clamp_probability(params.p_match);
  double lpm = std::log(pm), lpu = std::log1p(-pm);
  std::vector<double> q(lm.size());
  for (std::size_t i = 0; i < q.size(); ++i) {
    double a = lpm + lm[i], b = lpu + lu[i];
    q[i] = std::exp(a - log_sum_exp(a, b));
  }
  return q;
}

// ---------------------------------------------------------------------------
// Data

/// Sufficient statistics for one block: pair counts by pattern index, plus
/// the true-match counts when truth is known.
struct block_data {
  std::size_t block_id = 0;
  count_t n_a = 0;
  count_t n_b = 0;
  int fields = 1;
  std::vector<count_t> pattern_counts;
  std::optional<std::vector<count_t>> truth_match_counts;

  block_data() = default;
  block_data(std::size_t id, count_t na, count_t nb, int K)
      : block_id(id), n_a(na), n_b(nb), fields(K), pattern_counts(pattern_count(K), 0) {}

  count_t pairs() const { return n_a * n_b; }

  count_t true_matches() const {
    require(truth_match_counts.has_value(), error_category::data, "block has no truth labels");
    return std::accumulate(truth_match_counts->begin(), truth_match_counts->end(), count_t{0});
  }

  /// Largest admissible match rate, min(n_a, n_b) / (n_a n_b).
  double match_rate_cap() const {
    if (pairs() == 0)
      return 1.0;
    return static_cast<double>(std::min(n_a, n_b)) / static_cast<double>(pairs());
  }

  void validate() const {
    require(fields >= 1 && fields <= max_fields, error_category::dimension, "bad field count");
    require(pattern_counts.size() == pattern_count(fields), error_category::dimension,
            "pattern_counts must have 2^K entries");
    count_t total = std::accumulate(pattern_counts.begin(), pattern_counts.end(), count_t{0});
    require(total == pairs(), error_category::data,
            "block " + std::to_string(block_id) + ": pattern counts sum to " +
                std::to_string(total) + " but n_a*n_b = " + std::to_string(pairs()));
    if (truth_match_counts) {
      require(truth_match_counts->size() == pattern_counts.size(), error_category::dimension,
              "truth counts must have 2^K entries");
      for (std::size_t p = 0; p < pattern_counts.size(); ++p)
        require((*truth_match_counts)[p] <= pattern_counts[p], error_category::data,
                "truth count exceeds pattern count");
    }
  }
};

inline int common_fields(std::span<const block_data> blocks) {
  require(!blocks.empty(), error_category::data, "no blocks supplied");
  int K = blocks.front().fields;
  for (auto &b : blocks)
    require(b.fields == K, error_category::dimension, "blocks disagree on field count");
  return K;
}

/// Pattern counts summed over blocks.
inline std::vector<count_t> pool_counts(std::span<const block_data> blocks) {
  int K = common_fields(blocks);
  std::vector<count_t> out(pattern_count(K), 0);
  for (auto &b : blocks)
    for (std::size_t p = 0; p < out.size(); ++p)
      out[p] += b.pattern_counts[p];
  return out;
}

/// Sampled number of matches per pattern, one vector per block.
using match_counts = std::vector<count_t>;

} // namespace reclink

#endif
