#ifndef RECLINK_EXPERIMENT_HPP
#define RECLINK_EXPERIMENT_HPP

#include <cmath>
#include <map>
#include <ostream>
#include <string>
#include <vector>

#include "blcm.hpp"
#include "evaluation.hpp"
#include "formats.hpp"
#include "hblcm.hpp"
#include "lca.hpp"
#include "parallel.hpp"
#include "synthgen.hpp"

namespace reclink {

enum class method { lca, blcm_elicited, blcm_training, hblcm };

inline const char *to_string(method m) {
  switch (m) {
  case method::lca: return "LCA";
  case method::blcm_elicited: return "BLCM_Elicited";
  case method::blcm_training: return "BLCM_Training";
  case method::hblcm: return "HBLCM";
  }
  return "?";
}

inline method parse_method(const std::string &s) {
  if (s == "LCA") return method::lca;
  if (s == "BLCM_Elicited") return method::blcm_elicited;
  if (s == "BLCM_Training") return method::blcm_training;
  if (s == "HBLCM") return method::hblcm;
  throw error(error_category::config, "unknown method '" + s + "'");
}

/// (mean, sd) of each elicited Beta prior component.
struct prior_elicitation {
  double match_mean = 0.03, match_sd = 0.005;
  double m_mean = 0.80, m_sd = 0.075;
  double u_mean = 0.25, u_sd = 0.075;

  beta_prior_set build(int K) const {
    return elicited_prior(K, match_mean, match_sd, m_mean, m_sd, u_mean, u_sd);
  }
};

struct experiment_config {
  std::size_t replications = 20;
  synth_config synth;
  std::vector<method> methods{method::lca, method::blcm_elicited, method::blcm_training,
                              method::hblcm};
  double cutoff = 0.90;
  std::optional<double> lower_cutoff; ///< enables a three-way rule when set
  std::size_t training_blocks = 2;
  std::uint64_t seed = 1;

  em_settings em;
  prior_elicitation prior;
  gibbs_settings blcm;
  hblcm_settings hblcm;
  hyper_elicitation hyper;

  void validate() const {
    require(replications >= 1, error_category::config, "experiment: replications must be >= 1");
    require(cutoff > 0.0 && cutoff < 1.0, error_category::config,
            "experiment: cutoff must lie in (0,1)");
    require(!lower_cutoff || (*lower_cutoff >= 0.0 && *lower_cutoff <= cutoff),
            error_category::config, "experiment: lower cutoff must lie in [0, cutoff]");
    require(!methods.empty(), error_category::config, "experiment: no methods selected");
    synth.validate();
    for (auto m : methods)
      if (m == method::blcm_training)
        require(training_blocks >= 1 && training_blocks < synth.blocks, error_category::config,
                "experiment: training blocks must leave at least one block to fit");
  }
};

struct method_summary {
  std::string method;
  std::size_t runs = 0;
  std::size_t failures = 0;
  double fmr_mean = 0, fmr_sd = 0;
  double fnr_mean = 0, fnr_sd = 0;
  double links_mean = 0;
  std::optional<double> recovery_mean, recovery_sd;
};

struct experiment_result {
  std::vector<error_row> rows; ///< replication-major, methods in config order
  std::vector<method_summary> summaries;
  /// Replications where both LCA and HBLCM ran, and those where HBLCM's
  /// per-block recovery error was no larger than LCA's.
  std::size_t paired_runs = 0;
  std::size_t hblcm_not_worse = 0;
};

namespace detail {

struct method_fit {
  std::vector<std::vector<double>> props;
  std::vector<mixture_params> block_estimates;
};

inline method_fit fit_method(method m, const experiment_config &cfg, const synth_dataset &ds,
                             std::uint64_t seed, std::vector<bool> &include) {
  const int K = ds.config.fields;
  const std::size_t S = ds.blocks.size();
  method_fit fit;
  std::span<const block_data> all(ds.blocks);
  include.assign(S, true);
  switch (m) {
  case method::lca: {
    em_settings es = cfg.em;
    es.seed = seed;
    auto res = em_fit(all, es);
    fit.props = broadcast(pattern_posteriors(res.params), S);
    fit.block_estimates.assign(S, res.params);
    break;
  }
  case method::blcm_elicited:
  case method::blcm_training: {
    gibbs_settings gs = cfg.blcm;
    gs.seed = seed;
    beta_prior_set prior;
    std::span<const block_data> fit_blocks = all;
    std::size_t offset = 0;
    if (m == method::blcm_elicited) {
      prior = cfg.prior.build(K);
    } else {
      offset = cfg.training_blocks;
      prior = training_prior(all.subspan(0, offset));
      fit_blocks = all.subspan(offset);
      for (std::size_t s = 0; s < offset; ++s)
        include[s] = false;
    }
    auto post = run_blcm(fit_blocks, prior, gs, 1);
    auto est = post.mean_params();
    fit.props.assign(S, std::vector<double>(pattern_count(K), 0.0));
    for (std::size_t s = 0; s < fit_blocks.size(); ++s)
      fit.props[offset + s] = post.match_props[s];
    fit.block_estimates.assign(S, est);
    break;
  }
  case method::hblcm: {
    hblcm_settings hs = cfg.hblcm;
    hs.gibbs.seed = seed;
    auto hyper = make_hyper_prior(K, cfg.hyper);
    auto post = run_hblcm(all, hyper, hs, 1);
    fit.props = post.match_props;
    fit.block_estimates = post.block_means;
    break;
  }
  }
  return fit;
}

inline std::vector<error_row> run_replication(const experiment_config &cfg, std::size_t r) {
  synth_config sc = cfg.synth;
  sc.seed = cfg.seed + r;
  auto ds = generate(sc, 1);
  std::vector<error_row> rows;
  for (auto m : cfg.methods) {
    std::vector<bool> include;
    error_row row;
    try {
      auto fit = fit_method(m, cfg, ds, cfg.seed + r, include);
      auto dec = cfg.lower_cutoff ? link_decide(fit.props, cfg.cutoff, *cfg.lower_cutoff)
                                  : link_decide(fit.props, cfg.cutoff);
      row = error_rates(ds.blocks, dec, include);
      row.recovery_mae = recovery_error(fit.block_estimates, ds.true_params, include);
    } catch (const std::exception &e) {
      row.failure = e.what();
    }
    row.method = to_string(m);
    row.replication = r;
    rows.push_back(std::move(row));
  }
  return rows;
}

inline void mean_sd(const std::vector<double> &v, double &mean, double &sd) {
  mean = 0.0;
  sd = 0.0;
  if (v.empty())
    return;
  for (double x : v)
    mean += x;
  mean /= static_cast<double>(v.size());
  if (v.size() < 2)
    return;
  double ss = 0.0;
  for (double x : v)
    ss += (x - mean) * (x - mean);
  sd = std::sqrt(ss / static_cast<double>(v.size() - 1));
}

} // namespace detail

/// Runs every replication (data generation, each method's fit, link
/// decisions, scoring). Replications are independent and seeded from
/// seed + replication index, so results do not depend on `workers`.
inline experiment_result run_experiment(const experiment_config &cfg,
                                        std::size_t workers = default_workers()) {
  cfg.validate();
  std::vector<std::vector<error_row>> per_rep(cfg.replications);
  parallel_for(cfg.replications, workers,
               [&](std::size_t r) { per_rep[r] = detail::run_replication(cfg, r); });

  experiment_result res;
  for (auto &rows : per_rep)
    for (auto &row : rows)
      res.rows.push_back(row);

  for (auto m : cfg.methods) {
    method_summary ms;
    ms.method = to_string(m);
    std::vector<double> fmr, fnr, links, rec;
    for (auto &row : res.rows) {
      if (row.method != ms.method)
        continue;
      if (!row.failure.empty()) {
        ++ms.failures;
        continue;
      }
      ++ms.runs;
      fmr.push_back(row.fmr);
      fnr.push_back(row.fnr);
      links.push_back(static_cast<double>(row.declared_links));
      if (row.recovery_mae)
        rec.push_back(*row.recovery_mae);
    }
    double dummy;
    detail::mean_sd(fmr, ms.fmr_mean, ms.fmr_sd);
    detail::mean_sd(fnr, ms.fnr_mean, ms.fnr_sd);
    detail::mean_sd(links, ms.links_mean, dummy);
    if (!rec.empty()) {
      double a, b;
      detail::mean_sd(rec, a, b);
      ms.recovery_mean = a;
      ms.recovery_sd = b;
    }
    res.summaries.push_back(ms);
  }

  for (auto &rows : per_rep) {
    const error_row *lca = nullptr, *h = nullptr;
    for (auto &row : rows) {
      if (row.method == "LCA" && row.failure.empty())
        lca = &row;
      if (row.method == "HBLCM" && row.failure.empty())
        h = &row;
    }
    if (lca && h) {
      ++res.paired_runs;
      if (*h->recovery_mae <= *lca->recovery_mae)
        ++res.hblcm_not_worse;
    }
  }
  return res;
}

inline void write_error_rows_csv(std::ostream &os, const std::vector<error_row> &rows) {
  os << "replication,method,pairs,true_matches,declared_links,false_matches,false_nonmatches,"
        "undecided,fmr,fnr,link_error,recovery_mae,failure\n";
  for (auto &r : rows) {
    os << r.replication << ',' << r.method << ',' << r.pairs << ',' << r.true_matches << ','
       << r.declared_links << ',' << r.false_matches << ',' << r.false_nonmatches << ','
       << r.undecided << ',' << fmt_double(r.fmr) << ',' << fmt_double(r.fnr) << ','
       << fmt_double(r.link_error) << ','
       << (r.recovery_mae ? fmt_double(*r.recovery_mae) : std::string()) << ',';
    std::string f = r.failure;
    for (auto &c : f)
      if (c == ',' || c == '\n')
        c = ';';
    os << f << '\n';
  }
}

/// key = value summary, one block per method.
inline void write_summary(std::ostream &os, const experiment_config &cfg,
                          const experiment_result &res) {
  os << "replications = " << cfg.replications << '\n'
     << "scenario = " << to_string(cfg.synth.kind) << '\n'
     << "blocks = " << cfg.synth.blocks << '\n'
     << "block_size = " << cfg.synth.block_size << '\n'
     << "cutoff = " << fmt_double(cfg.cutoff) << '\n'
     << "seed = " << cfg.seed << '\n';
  for (auto &m : res.summaries) {
    os << '\n' << '[' << m.method << "]\n"
       << "runs = " << m.runs << '\n'
       << "failures = " << m.failures << '\n'
       << "fmr_mean = " << fmt_double(m.fmr_mean) << '\n'
       << "fmr_sd = " << fmt_double(m.fmr_sd) << '\n'
       << "fnr_mean = " << fmt_double(m.fnr_mean) << '\n'
       << "fnr_sd = " << fmt_double(m.fnr_sd) << '\n'
       << "declared_links_mean = " << fmt_double(m.links_mean) << '\n';
    if (m.recovery_mean)
      os << "recovery_mae_mean = " << fmt_double(*m.recovery_mean) << '\n'
         << "recovery_mae_sd = " << fmt_double(*m.recovery_sd) << '\n';
  }
  if (res.paired_runs > 0)
    os << "\n[HBLCM_vs_LCA]\n"
       << "paired_runs = " << res.paired_runs << '\n'
       << "hblcm_recovery_not_worse = " << res.hblcm_not_worse << '\n';
}

} // namespace reclink

#endif
