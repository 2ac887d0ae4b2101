#ifndef RECLINK_EVALUATION_HPP
#define RECLINK_EVALUATION_HPP

#include <cmath>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "core.hpp"
#include "lca.hpp"

namespace reclink {

/// Decisions indexed [block][pattern].
using decision_table = std::vector<std::vector<link_decision>>;

/// Two-way rule: link iff proportion >= cutoff.
inline decision_table link_decide(const std::vector<std::vector<double>> &props, double cutoff) {
  decision_table out(props.size());
  for (std::size_t s = 0; s < props.size(); ++s) {
    out[s].reserve(props[s].size());
    for (double v : props[s])
      out[s].push_back(v >= cutoff ? link_decision::link : link_decision::nonlink);
  }
  return out;
}

/// Three-way rule with an undecided band (lower, upper).
inline decision_table link_decide(const std::vector<std::vector<double>> &props, double upper,
                                  double lower) {
  require(0.0 <= lower && lower <= upper && upper <= 1.0, error_category::config,
          "link_decide: need 0 <= lower <= upper <= 1");
  decision_table out(props.size());
  for (std::size_t s = 0; s < props.size(); ++s)
    for (double v : props[s])
      out[s].push_back(classify(v, upper, lower));
  return out;
}

/// Broadcasts a per-pattern posterior to every block.
inline std::vector<std::vector<double>> broadcast(std::span<const double> q, std::size_t blocks) {
  return std::vector<std::vector<double>>(blocks, std::vector<double>(q.begin(), q.end()));
}

/// Confusion counts for one method on one dataset.
struct error_row {
  std::string method;
  std::size_t replication = 0;
  count_t pairs = 0;
  count_t true_matches = 0;
  count_t declared_links = 0;
  count_t false_matches = 0;    ///< links that are true nonmatches
  count_t false_nonmatches = 0; ///< true matches not declared links
  count_t undecided = 0;
  double fmr = 0.0;        ///< false matches / true nonmatches
  double fnr = 0.0;        ///< false nonmatches / true matches
  double link_error = 0.0; ///< false matches / declared links
  std::optional<double> recovery_mae;
  std::string failure; ///< nonempty when the method failed
};

/// Exact confusion counts over the blocks with include[s] set (all blocks
/// when `include` is empty).
inline error_row error_rates(std::span<const block_data> blocks, const decision_table &decisions,
                             const std::vector<bool> &include = {}) {
  require(decisions.size() == blocks.size(), error_category::dimension,
          "error_rates: one decision row per block required");
  error_row r;
  for (std::size_t s = 0; s < blocks.size(); ++s) {
    if (!include.empty() && !include[s])
      continue;
    const auto &b = blocks[s];
    require(b.truth_match_counts.has_value(), error_category::data,
            "error_rates: block " + std::to_string(b.block_id) + " has no truth labels");
    require(decisions[s].size() == b.pattern_counts.size(), error_category::dimension,
            "error_rates: decision row has wrong length");
    for (std::size_t p = 0; p < b.pattern_counts.size(); ++p) {
      count_t n = b.pattern_counts[p], t = (*b.truth_match_counts)[p];
      r.pairs += n;
      r.true_matches += t;
      switch (decisions[s][p]) {
      case link_decision::link:
        r.declared_links += n;
        r.false_matches += n - t;
        break;
      case link_decision::undecided:
        r.undecided += n;
        r.false_nonmatches += t;
        break;
      case link_decision::nonlink:
        r.false_nonmatches += t;
        break;
      }
    }
  }
  count_t nonmatches = r.pairs - r.true_matches;
  r.fmr = nonmatches ? static_cast<double>(r.false_matches) / nonmatches : 0.0;
  r.fnr = r.true_matches ? static_cast<double>(r.false_nonmatches) / r.true_matches : 0.0;
  r.link_error = r.declared_links ? static_cast<double>(r.false_matches) / r.declared_links : 0.0;
  return r;
}

/// Mean absolute error of estimated against true parameters, averaged over
/// the 2K+1 parameters of each included block and then over blocks.
inline double recovery_error(const std::vector<mixture_params> &estimates,
                             const std::vector<mixture_params> &truth,
                             const std::vector<bool> &include = {}) {
  require(estimates.size() == truth.size(), error_category::dimension,
          "recovery_error: estimate/truth block count mismatch");
  double total = 0.0;
  std::size_t blocks = 0;
  for (std::size_t s = 0; s < truth.size(); ++s) {
    if (!include.empty() && !include[s])
      continue;
    const auto &e = estimates[s];
    const auto &t = truth[s];
    double err = std::abs(e.p_match - t.p_match);
    for (std::size_t k = 0; k < t.m_probs.size(); ++k)
      err += std::abs(e.m_probs[k] - t.m_probs[k]) + std::abs(e.u_probs[k] - t.u_probs[k]);
    total += err / static_cast<double>(2 * t.m_probs.size() + 1);
    ++blocks;
  }
  return blocks ? total / static_cast<double>(blocks) : 0.0;
}

/// Declared-link counts for each cutoff.
inline std::vector<count_t> cutoff_sweep(std::span<const block_data> blocks,
                                         const std::vector<std::vector<double>> &props,
                                         std::span<const double> cutoffs) {
  std::vector<count_t> out;
  for (double c : cutoffs) {
    count_t links = 0;
    for (std::size_t s = 0; s < blocks.size(); ++s)
      for (std::size_t p = 0; p < props[s].size(); ++p)
        if (props[s][p] >= c)
          links += blocks[s].pattern_counts[p];
    out.push_back(links);
  }
  return out;
}

} // namespace reclink

#endif
