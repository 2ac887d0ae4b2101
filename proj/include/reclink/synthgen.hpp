#ifndef RECLINK_SYNTHGEN_HPP
#define RECLINK_SYNTHGEN_HPP

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "core.hpp"
#include "parallel.hpp"
#include "random.hpp"

namespace reclink {

enum class scenario { homogeneous, heterogeneous };
enum class match_mode { full_one_to_one, thinned };

inline const char *to_string(scenario s) {
  return s == scenario::homogeneous ? "homogeneous" : "heterogeneous";
}
inline const char *to_string(match_mode m) {
  return m == match_mode::full_one_to_one ? "full" : "thinned";
}

/// Simulation design for two files split into equal-size blocks.
struct synth_config {
  std::size_t blocks = 400;
  count_t block_size = 25; ///< records per file per block
  int fields = 7;
  scenario kind = scenario::homogeneous;
  // homogeneous scenario
  std::vector<double> m_probs{0.90, 0.85, 0.80, 0.75, 0.70, 0.65, 0.60};
  std::vector<double> u_probs{0.5, 0.5, 0.33, 0.33, 0.33, 0.25, 0.25};
  // heterogeneous scenario: per block and field, uniform on these ranges
  double m_lo = 0.60, m_hi = 0.90;
  double u_lo = 0.20, u_hi = 0.50;
  match_mode matching = match_mode::full_one_to_one;
  double rho = 1.0; ///< probability that record i of A matches record i of B when thinned
  std::uint64_t seed = 1;

  void validate() const {
    require(blocks >= 1, error_category::config, "synth: block count must be >= 1");
    require(block_size >= 1, error_category::config, "synth: block size must be >= 1");
    require(fields >= 1 && fields <= max_fields, error_category::config,
            "synth: field count out of range");
    auto open = [](double p) { return p > 0.0 && p < 1.0; };
    if (kind == scenario::homogeneous) {
      require(m_probs.size() == static_cast<std::size_t>(fields) &&
                  u_probs.size() == static_cast<std::size_t>(fields),
              error_category::config, "synth: m/u probability lists must have K entries");
      for (int k = 0; k < fields; ++k)
        require(open(m_probs[k]) && open(u_probs[k]), error_category::config,
                "synth: probabilities must lie in (0,1)");
    } else {
      require(open(m_lo) && open(m_hi) && m_lo <= m_hi, error_category::config,
              "synth: bad m range");
      require(open(u_lo) && open(u_hi) && u_lo <= u_hi, error_category::config,
              "synth: bad u range");
    }
    if (matching == match_mode::thinned)
      require(rho > 0.0 && rho <= 1.0, error_category::config, "synth: rho must lie in (0,1]");
  }
};

/// Pair-level record of one block, row-major over (a, b).
struct block_pairs {
  count_t n_a = 0, n_b = 0;
  std::vector<pattern_t> patterns;
  std::vector<std::uint8_t> truth;
};

struct synth_dataset {
  synth_config config;
  std::vector<block_data> blocks;
  std::vector<block_pairs> pairs;
  /// Generating parameters of every block. In the homogeneous scenario all
  /// entries are equal.
  std::vector<mixture_params> true_params;

  count_t total_pairs() const {
    count_t n = 0;
    for (auto &b : blocks)
      n += b.pairs();
    return n;
  }
};

namespace detail {

inline void synth_block(const synth_config &cfg, std::size_t s, block_data &out,
                        block_pairs &pairs, mixture_params &truth) {
  auto rng = make_stream(cfg.seed, {stream::synth, s});
  const int K = cfg.fields;
  const count_t n = cfg.block_size;

  truth.m_probs.resize(K);
  truth.u_probs.resize(K);
  if (cfg.kind == scenario::homogeneous) {
    truth.m_probs = cfg.m_probs;
    truth.u_probs = cfg.u_probs;
  } else {
    std::uniform_real_distribution<double> um(cfg.m_lo, cfg.m_hi), uu(cfg.u_lo, cfg.u_hi);
    for (int k = 0; k < K; ++k)
      truth.m_probs[k] = um(rng);
    for (int k = 0; k < K; ++k)
      truth.u_probs[k] = uu(rng);
  }
  double rate = cfg.matching == match_mode::thinned ? cfg.rho : 1.0;
  truth.p_match = rate / static_cast<double>(n);

  std::vector<std::uint8_t> matched(n, 1);
  if (cfg.matching == match_mode::thinned)
    for (auto &m : matched)
      m = uniform01(rng) < cfg.rho ? 1 : 0;

  out = block_data(s, n, n, K);
  out.truth_match_counts.emplace(pattern_count(K), 0);
  pairs.n_a = n;
  pairs.n_b = n;
  pairs.patterns.resize(n * n);
  pairs.truth.resize(n * n);

  for (count_t a = 0; a < n; ++a) {
    for (count_t b = 0; b < n; ++b) {
      bool is_match = a == b && matched[a];
      const auto &probs = is_match ? truth.m_probs : truth.u_probs;
      pattern_t g = 0;
      for (int k = 0; k < K; ++k)
        if (uniform01(rng) < probs[k])
          g |= pattern_t{1} << k;
      pairs.patterns[a * n + b] = g;
      pairs.truth[a * n + b] = is_match;
      ++out.pattern_counts[g];
      if (is_match)
        ++(*out.truth_match_counts)[g];
    }
  }
}

} // namespace detail

/// Simulates comparison vectors for every within-block pair. Each block uses
/// its own stream keyed on (seed, block), so output does not depend on the
/// worker count.
inline synth_dataset generate(const synth_config &cfg, std::size_t workers = default_workers()) {
  cfg.validate();
  synth_dataset ds;
  ds.config = cfg;
  ds.blocks.resize(cfg.blocks);
  ds.pairs.resize(cfg.blocks);
  ds.true_params.resize(cfg.blocks);
  parallel_for(cfg.blocks, workers, [&](std::size_t s) {
    detail::synth_block(cfg, s, ds.blocks[s], ds.pairs[s], ds.true_params[s]);
  });
  return ds;
}

/// Relative pattern frequencies among true matches and among true nonmatches.
struct class_frequencies {
  count_t matches = 0;
  count_t nonmatches = 0;
  std::vector<double> match_freq;
  std::vector<double> nonmatch_freq;

  /// Fraction of class members agreeing on field k.
  double agreement_rate(bool match_class, int k) const {
    const auto &f = match_class ? match_freq : nonmatch_freq;
    double r = 0.0;
    for (std::size_t p = 0; p < f.size(); ++p)
      if ((p >> k) & 1u)
        r += f[p];
    return r;
  }
};

inline class_frequencies empirical_pattern_distribution(std::span<const block_data> blocks) {
  class_frequencies out;
  if (blocks.empty())
    return out;
  int K = common_fields(blocks);
  std::vector<count_t> m(pattern_count(K), 0), u(pattern_count(K), 0);
  for (auto &b : blocks) {
    require(b.truth_match_counts.has_value(), error_category::data,
            "block " + std::to_string(b.block_id) + " has no truth labels");
    for (std::size_t p = 0; p < m.size(); ++p) {
      m[p] += (*b.truth_match_counts)[p];
      u[p] += b.pattern_counts[p] - (*b.truth_match_counts)[p];
    }
  }
  for (auto c : m)
    out.matches += c;
  for (auto c : u)
    out.nonmatches += c;
  if (out.matches + out.nonmatches == 0)
    return out;
  auto normalize = [](const std::vector<count_t> &c, count_t total) {
    std::vector<double> f(c.size(), 0.0);
    if (total > 0)
      for (std::size_t p = 0; p < c.size(); ++p)
        f[p] = static_cast<double>(c[p]) / static_cast<double>(total);
    return f;
  };
  out.match_freq = normalize(m, out.matches);
  out.nonmatch_freq = normalize(u, out.nonmatches);
  return out;
}

inline class_frequencies empirical_pattern_distribution(const synth_dataset &ds) {
  return empirical_pattern_distribution(std::span<const block_data>(ds.blocks));
}

} // namespace reclink

#endif
