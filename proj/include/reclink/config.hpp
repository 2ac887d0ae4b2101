#ifndef RECLINK_CONFIG_HPP
#define RECLINK_CONFIG_HPP

#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "experiment.hpp"

namespace reclink {

enum class profile { desk, paper };

inline profile parse_profile(const std::string &s) {
  if (s == "desk")
    return profile::desk;
  if (s == "paper")
    return profile::paper;
  throw error(error_category::config, "unknown profile '" + s + "' (expected desk or paper)");
}

/// Scale settings of a profile: desk keeps the full-scale layout at 1/10 of the
/// blocks and 1/50 of the replications.
inline void apply_profile(experiment_config &cfg, profile p) {
  cfg.synth.block_size = 25;
  if (p == profile::desk) {
    cfg.synth.blocks = 40;
    cfg.replications = 20;
  } else {
    cfg.synth.blocks = 400;
    cfg.replications = 1000;
  }
}

namespace detail {

using ptree = boost::property_tree::ptree;

inline std::vector<double> parse_list(const std::string &key, const std::string &s) {
  std::vector<double> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (item.empty())
      continue;
    try {
      std::size_t used = 0;
      out.push_back(std::stod(item, &used));
      require(used == item.size(), error_category::config, "");
    } catch (...) {
      throw error(error_category::config, key + ": cannot parse list entry '" + item + "'");
    }
  }
  return out;
}

class reader {
public:
  explicit reader(const ptree &pt) : pt_(pt) {}

  template <class T> void get(const std::string &key, T &out) {
    auto v = pt_.get_optional<std::string>(key);
    if (!v)
      return;
    used_.insert(key);
    std::string s = trim(*v);
    if constexpr (std::is_same_v<T, bool>) {
      if (s == "true" || s == "1" || s == "yes")
        out = true;
      else if (s == "false" || s == "0" || s == "no")
        out = false;
      else
        throw error(error_category::config, key + ": expected a boolean, got '" + s + "'");
    } else if constexpr (std::is_same_v<T, std::string>) {
      out = s;
    } else {
      std::istringstream is(s);
      T tmp{};
      is >> tmp;
      require(!is.fail() && is.peek() == EOF, error_category::config,
              key + ": cannot parse '" + s + "'");
      out = tmp;
    }
  }

  void get_list(const std::string &key, std::vector<double> &out) {
    std::string s;
    get(key, s);
    if (!s.empty())
      out = parse_list(key, s);
  }

  void get_range(const std::string &key, double &lo, double &hi) {
    std::vector<double> v;
    get_list(key, v);
    if (v.empty())
      return;
    require(v.size() == 2, error_category::config, key + ": expected 'lo, hi'");
    lo = v[0];
    hi = v[1];
  }

  void check_all_used() const {
    for (auto &[section, tree] : pt_) {
      require(!tree.empty() || used_.count(section) > 0, error_category::config,
              "unknown config key " + section + " (keys must be inside a section)");
      for (auto &[key, _] : tree) {
        std::string full = section + "." + key;
        require(used_.count(full) > 0, error_category::config, "unknown config key " + full);
      }
    }
  }

private:
  const ptree &pt_;
  std::set<std::string> used_;
};

inline constraint_mode parse_constraint_mode(const std::string &s) {
  if (s == "reject")
    return constraint_mode::reject;
  if (s == "rescale")
    return constraint_mode::rescale;
  throw error(error_category::config, "constraint mode must be reject or rescale, got '" + s + "'");
}

inline void read_gibbs(reader &r, const std::string &sec, gibbs_settings &g) {
  r.get(sec + ".chains", g.chains);
  r.get(sec + ".burn_in", g.burn_in);
  r.get(sec + ".n_keep", g.n_keep);
  r.get(sec + ".thin", g.thin);
  r.get(sec + ".enforce_cap", g.enforce_cap);
  r.get(sec + ".enforce_ordering", g.enforce_ordering);
  r.get(sec + ".retry_budget", g.retry_budget);
  r.get(sec + ".strict_reject", g.strict_reject);
  std::string s;
  r.get(sec + ".cap_mode", s);
  if (!s.empty())
    g.cap_mode = parse_constraint_mode(s);
  s.clear();
  r.get(sec + ".ordering_mode", s);
  if (!s.empty())
    g.ordering_mode = parse_constraint_mode(s);
  s.clear();
  r.get(sec + ".cap_rule", s);
  if (s == "global")
    g.cap_from = cap_rule::global_ratio;
  else if (s == "block_min")
    g.cap_from = cap_rule::block_min;
  else if (!s.empty())
    throw error(error_category::config, sec + ".cap_rule must be global or block_min");
  double cap = 0.0;
  r.get(sec + ".cap", cap);
  if (cap > 0.0)
    g.cap = cap;
}

} // namespace detail

/// Applies an INI file on top of `cfg`. Unknown keys are rejected.
inline void apply_config(experiment_config &cfg, const boost::property_tree::ptree &pt) {
  detail::reader r(pt);
  std::string s;

  r.get("experiment.replications", cfg.replications);
  r.get("experiment.cutoff", cfg.cutoff);
  double lower = -1.0;
  r.get("experiment.lower_cutoff", lower);
  if (lower >= 0.0)
    cfg.lower_cutoff = lower;
  r.get("experiment.training_blocks", cfg.training_blocks);
  r.get("experiment.seed", cfg.seed);
  s.clear();
  r.get("experiment.methods", s);
  if (!s.empty()) {
    cfg.methods.clear();
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ','))
      if (!detail::trim(item).empty())
        cfg.methods.push_back(parse_method(detail::trim(item)));
  }

  auto &sc = cfg.synth;
  r.get("synth.blocks", sc.blocks);
  r.get("synth.block_size", sc.block_size);
  r.get("synth.fields", sc.fields);
  s.clear();
  r.get("synth.scenario", s);
  if (s == "homogeneous")
    sc.kind = scenario::homogeneous;
  else if (s == "heterogeneous")
    sc.kind = scenario::heterogeneous;
  else if (!s.empty())
    throw error(error_category::config, "synth.scenario must be homogeneous or heterogeneous");
  r.get_list("synth.m_probs", sc.m_probs);
  r.get_list("synth.u_probs", sc.u_probs);
  r.get_range("synth.m_range", sc.m_lo, sc.m_hi);
  r.get_range("synth.u_range", sc.u_lo, sc.u_hi);
  s.clear();
  r.get("synth.matching", s);
  if (s == "full")
    sc.matching = match_mode::full_one_to_one;
  else if (s == "thinned")
    sc.matching = match_mode::thinned;
  else if (!s.empty())
    throw error(error_category::config, "synth.matching must be full or thinned");
  r.get("synth.rho", sc.rho);

  r.get("em.max_iter", cfg.em.max_iter);
  r.get("em.tol", cfg.em.tol);
  r.get("em.init_p_match", cfg.em.init_p_match);
  r.get("em.init_m", cfg.em.init_m);
  r.get("em.init_u", cfg.em.init_u);
  r.get("em.jitter", cfg.em.jitter);

  auto &pr = cfg.prior;
  r.get("prior.match_mean", pr.match_mean);
  r.get("prior.match_sd", pr.match_sd);
  r.get("prior.m_mean", pr.m_mean);
  r.get("prior.m_sd", pr.m_sd);
  r.get("prior.u_mean", pr.u_mean);
  r.get("prior.u_sd", pr.u_sd);

  detail::read_gibbs(r, "blcm", cfg.blcm);

  auto &h = cfg.hblcm;
  detail::read_gibbs(r, "hblcm", h.gibbs);
  r.get("hblcm.adapt_sweeps", h.adapt_sweeps);
  r.get("hblcm.tune_window", h.tune_window);
  r.get("hblcm.target_acceptance", h.target_acceptance);
  r.get("hblcm.kappa", h.kappa);
  r.get("hblcm.order_theta", h.order_theta);
  s.clear();
  r.get("hblcm.mode", s);
  if (s == "full")
    h.mode = mh_mode::full_posterior;
  else if (s == "literal")
    h.mode = mh_mode::literal;
  else if (!s.empty())
    throw error(error_category::config, "hblcm.mode must be full or literal");

  auto &e = cfg.hyper;
  e.match_mean = pr.match_mean;
  e.match_sd = pr.match_sd;
  e.m_mean = pr.m_mean;
  e.m_sd = pr.m_sd;
  e.u_mean = pr.u_mean;
  e.u_sd = pr.u_sd;
  r.get("hyper.var_theta_match", e.var_theta_match);
  r.get("hyper.var_tau_match", e.var_tau_match);
  r.get("hyper.cov_match", e.cov_match);
  r.get("hyper.var_theta_m", e.var_theta_m);
  r.get("hyper.var_tau_m", e.var_tau_m);
  r.get("hyper.cov_m", e.cov_m);
  r.get("hyper.var_theta_u", e.var_theta_u);
  r.get("hyper.var_tau_u", e.var_tau_u);
  r.get("hyper.cov_u", e.cov_u);
  r.get("hyper.h", e.h);
  r.get("hyper.literal_mean_mapping", e.literal_mean_mapping);

  r.check_all_used();
}

inline void load_config_file(experiment_config &cfg, const std::string &path) {
  boost::property_tree::ptree pt;
  try {
    boost::property_tree::ini_parser::read_ini(path, pt);
  } catch (const boost::property_tree::ini_parser_error &e) {
    throw error(error_category::config, e.what());
  }
  apply_config(cfg, pt);
}

inline void load_config_string(experiment_config &cfg, const std::string &text) {
  boost::property_tree::ptree pt;
  std::istringstream is(text);
  try {
    boost::property_tree::ini_parser::read_ini(is, pt);
  } catch (const boost::property_tree::ini_parser_error &e) {
    throw error(error_category::config, e.what());
  }
  apply_config(cfg, pt);
}

} // namespace reclink

#endif
