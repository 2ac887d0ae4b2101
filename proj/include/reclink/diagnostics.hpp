#ifndef RECLINK_DIAGNOSTICS_HPP
#define RECLINK_DIAGNOSTICS_HPP

#include <cmath>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "blcm.hpp"
#include "core.hpp"
#include "hblcm.hpp"

namespace reclink {

/// Draws of one scalar: chains x draws.
using chain_set = std::vector<std::vector<double>>;

/// Potential scale reduction factor (Gelman-Rubin) of one scalar.
inline double psrf(const chain_set &chains) {
  const std::size_t m = chains.size();
  require(m >= 2, error_category::data, "psrf: need at least two chains");
  const std::size_t n = chains.front().size();
  require(n >= 2, error_category::data, "psrf: need at least two draws per chain");
  std::vector<double> means(m), vars(m);
  for (std::size_t c = 0; c < m; ++c) {
    require(chains[c].size() == n, error_category::data, "psrf: chains differ in length");
    double s = 0.0;
    for (double x : chains[c]) {
      require(std::isfinite(x), error_category::numerical, "psrf: non-finite draw");
      s += x;
    }
    means[c] = s / n;
    double ss = 0.0;
    for (double x : chains[c])
      ss += (x - means[c]) * (x - means[c]);
    vars[c] = ss / (n - 1.0);
  }
  double grand = 0.0;
  for (double x : means)
    grand += x;
  grand /= m;
  double bm = 0.0;
  for (double x : means)
    bm += (x - grand) * (x - grand);
  const double B = n * bm / (m - 1.0);
  double W = 0.0;
  for (double v : vars)
    W += v;
  W /= m;

  if (W == 0.0) {
    require(B == 0.0, error_category::numerical,
            "psrf: chains are individually constant but disagree");
    return 1.0;
  }
  double nn = static_cast<double>(n);
  return std::sqrt(((nn - 1.0) / nn * W + B / nn) / W);
}

struct psrf_report {
  std::vector<std::string> names;
  std::vector<double> rhat;
  double max_rhat = 1.0;
  std::string worst;

  bool converged(double threshold = 1.1) const { return max_rhat < threshold; }
};

/// R-hat per column of chain draws (chains x sweeps x parameters).
inline psrf_report psrf(const chain_array &draws, const std::vector<std::string> &names) {
  require(draws.size() >= 2, error_category::data, "psrf: need at least two chains");
  const std::size_t P = names.size();
  psrf_report rep;
  rep.names = names;
  rep.rhat.resize(P);
  for (std::size_t j = 0; j < P; ++j) {
    chain_set cs(draws.size());
    for (std::size_t c = 0; c < draws.size(); ++c) {
      cs[c].reserve(draws[c].size());
      for (auto &row : draws[c]) {
        require(row.size() == P, error_category::dimension, "psrf: ragged draw rows");
        cs[c].push_back(row[j]);
      }
    }
    rep.rhat[j] = psrf(cs);
    if (j == 0 || rep.rhat[j] > rep.max_rhat) {
      rep.max_rhat = rep.rhat[j];
      rep.worst = names[j];
    }
  }
  return rep;
}

struct acceptance_entry {
  std::string family;
  count_t proposals = 0;
  count_t accepts = 0;
  std::optional<double> rate; ///< empty when there were no proposals
  double h = 0.0;
  bool flagged = false;
};

struct acceptance_report {
  std::vector<acceptance_entry> families;
  double lo = 0.2, hi = 0.5;

  std::vector<std::string> flagged() const {
    std::vector<std::string> out;
    for (auto &e : families)
      if (e.flagged)
        out.push_back(e.family);
    return out;
  }
};

/// Per-family acceptance rates pooled over blocks; families outside
/// [lo, hi] or without proposals are flagged.
inline acceptance_report make_acceptance_report(const mh_stats &stats,
                                                const std::vector<std::string> &family_names,
                                                double lo = 0.2, double hi = 0.5) {
  acceptance_report rep;
  rep.lo = lo;
  rep.hi = hi;
  for (int f = 0; f < stats.families; ++f) {
    acceptance_entry e;
    e.family = f < static_cast<int>(family_names.size()) ? family_names[f] : std::to_string(f);
    e.proposals = stats.family_proposals(f);
    e.accepts = stats.family_accepts(f);
    e.h = stats.h.empty() ? 0.0 : stats.h[f];
    if (e.proposals > 0)
      e.rate = static_cast<double>(e.accepts) / static_cast<double>(e.proposals);
    e.flagged = !e.rate || *e.rate < lo || *e.rate > hi;
    rep.families.push_back(e);
  }
  return rep;
}

inline acceptance_report make_acceptance_report(const mh_stats &stats,
                                                const hyper_prior_spec &hyper) {
  std::vector<std::string> names;
  for (int f = 0; f < hyper.families(); ++f)
    names.push_back(hyper.family_name(f));
  return make_acceptance_report(stats, names);
}

} // namespace reclink

#endif
