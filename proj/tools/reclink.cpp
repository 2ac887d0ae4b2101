#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <reclink/reclink.hpp>

using namespace reclink;
namespace fs = std::filesystem;

namespace {

struct common_opts {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out_dir = ".";
  std::string profile = "desk";
};

void add_common(CLI::App *app, common_opts &o) {
  app->add_option("--config", o.config, "INI configuration file")->check(CLI::ExistingFile);
  app->add_option("--seed", o.seed, "base random seed");
  app->add_option("--out-dir", o.out_dir, "directory for output files");
  app->add_option("--profile", o.profile, "scale profile")
      ->check(CLI::IsMember({"desk", "paper"}));
}

experiment_config resolve(const common_opts &o) {
  experiment_config cfg;
  apply_profile(cfg, parse_profile(o.profile));
  if (!o.config.empty())
    load_config_file(cfg, o.config);
  if (o.seed)
    cfg.seed = *o.seed;
  cfg.synth.seed = cfg.seed;
  cfg.em.seed = cfg.seed;
  cfg.blcm.seed = cfg.seed;
  cfg.hblcm.gibbs.seed = cfg.seed;
  return cfg;
}

fs::path out_path(const common_opts &o, const std::string &name) {
  fs::path dir(o.out_dir);
  std::error_code ec;
  fs::create_directories(dir, ec);
  require(!ec, error_category::data, "cannot create " + dir.string() + ": " + ec.message());
  return dir / name;
}

std::ofstream open_out(const fs::path &p) {
  std::ofstream os(p);
  require(os.good(), error_category::data, "cannot write " + p.string());
  return os;
}

void write_json(const fs::path &p, const nlohmann::json &j) {
  auto os = open_out(p);
  os << j.dump(2) << '\n';
}

void write_chains(const common_opts &o, const std::string &stem,
                  const std::vector<std::string> &names, const chain_array &draws) {
  for (std::size_t c = 0; c < draws.size(); ++c) {
    auto os = open_out(out_path(o, stem + "_chain" + std::to_string(c + 1) + ".csv"));
    write_chain_csv(os, names, draws[c]);
  }
}

void write_props(const common_opts &o, std::span<const block_data> blocks,
                 const std::vector<std::vector<double>> &props) {
  auto os = open_out(out_path(o, "match_props.csv"));
  write_match_props_csv(os, blocks, props);
}

nlohmann::json param_table(const std::vector<std::string> &names, const std::vector<double> &mean,
                           const std::vector<double> &sd) {
  nlohmann::json j = nlohmann::json::object();
  for (std::size_t i = 0; i < names.size(); ++i)
    j[names[i]] = {{"mean", mean[i]}, {"sd", sd[i]}};
  return j;
}

void print_acceptance(std::ostream &os, const acceptance_report &rep) {
  for (auto &e : rep.families) {
    os << e.family << ".proposals = " << e.proposals << '\n'
       << e.family << ".accepts = " << e.accepts << '\n'
       << e.family << ".rate = " << (e.rate ? fmt_double(*e.rate) : std::string("undefined"))
       << '\n'
       << e.family << ".h = " << fmt_double(e.h) << '\n'
       << e.family << ".flagged = " << (e.flagged ? "yes" : "no") << '\n';
  }
}

int cmd_synth(const common_opts &o, const std::string &scen, bool no_truth) {
  auto cfg = resolve(o);
  if (!scen.empty())
    cfg.synth.kind = scen == "heterogeneous" ? scenario::heterogeneous : scenario::homogeneous;
  auto ds = generate(cfg.synth);
  auto p = out_path(o, "pairs.csv");
  {
    auto os = open_out(p);
    write_pairs_csv(os, ds, !no_truth);
  }
  write_json(out_path(o, "synth.json"), synth_sidecar(ds));
  std::cout << "wrote " << ds.total_pairs() << " pairs in " << ds.blocks.size() << " blocks to "
            << p.string() << '\n';
  return 0;
}

int cmd_em(const common_opts &o, const std::string &pairs) {
  auto cfg = resolve(o);
  auto blocks = read_pairs_csv(pairs);
  auto res = em_fit(blocks, cfg.em);
  nlohmann::json j = to_json(res.params);
  j["iterations"] = res.iterations;
  j["converged"] = res.converged;
  j["loglik_trace"] = res.loglik_trace;
  j["clamp_events"] = clamp_events();
  write_json(out_path(o, "em.json"), j);
  write_props(o, blocks, broadcast(pattern_posteriors(res.params), blocks.size()));
  std::cout << "EM " << (res.converged ? "converged" : "did not converge") << " after "
            << res.iterations << " iterations; p_M = " << fmt_double(res.params.p_match) << '\n';
  return 0;
}

int cmd_blcm(const common_opts &o, const std::string &pairs, const std::string &prior_kind) {
  auto cfg = resolve(o);
  auto blocks = read_pairs_csv(pairs);
  const int K = common_fields(blocks);
  beta_prior_set prior;
  std::span<const block_data> fit = blocks;
  if (prior_kind == "training") {
    require(cfg.training_blocks < blocks.size(), error_category::config,
            "training blocks must leave at least one block to fit");
    prior = training_prior(std::span<const block_data>(blocks).subspan(0, cfg.training_blocks));
    fit = std::span<const block_data>(blocks).subspan(cfg.training_blocks);
  } else {
    prior = cfg.prior.build(K);
  }
  auto post = run_blcm(fit, prior, cfg.blcm);
  write_chains(o, "blcm", post.names, post.draws);
  write_props(o, fit, post.match_props);
  auto rhat = post.draws.size() >= 2 ? std::optional(psrf(post.draws, post.names)) : std::nullopt;
  nlohmann::json j;
  j["prior"] = to_json(prior);
  j["params"] = param_table(post.names, post.mean, post.sd);
  j["cap"] = post.cap;
  j["cap_fallbacks"] = post.constraints.cap_fallbacks;
  j["ordering_fallbacks"] = post.constraints.ordering_fallbacks;
  if (rhat)
    j["max_rhat"] = rhat->max_rhat;
  write_json(out_path(o, "blcm.json"), j);
  std::cout << "BLCM: " << post.draws.size() << " chains, p_M mean " << fmt_double(post.mean[0]);
  if (rhat)
    std::cout << ", max Rhat " << fmt_double(rhat->max_rhat) << " (" << rhat->worst << ')';
  std::cout << '\n';
  return 0;
}

int cmd_hblcm(const common_opts &o, const std::string &pairs, bool keep_hyper) {
  auto cfg = resolve(o);
  auto blocks = read_pairs_csv(pairs);
  auto hyper = make_hyper_prior(common_fields(blocks), cfg.hyper);
  cfg.hblcm.keep_hyper_draws = keep_hyper;
  auto post = run_hblcm(blocks, hyper, cfg.hblcm);
  write_chains(o, "hblcm", post.names, post.draws);
  if (keep_hyper)
    write_chains(o, "hblcm_hyper", post.hyper_names, post.hyper_draws);
  write_props(o, blocks, post.match_props);

  nlohmann::json j;
  nlohmann::json blk = nlohmann::json::array();
  for (std::size_t s = 0; s < blocks.size(); ++s) {
    auto e = to_json(post.block_means[s]);
    e["block"] = blocks[s].block_id;
    e["sd"] = to_json(post.block_sds[s]);
    blk.push_back(e);
  }
  j["blocks"] = blk;
  auto rep = make_acceptance_report(post.pooled_mh(), hyper);
  nlohmann::json acc = nlohmann::json::object();
  for (auto &e : rep.families)
    acc[e.family] = {{"proposals", e.proposals},
                     {"accepts", e.accepts},
                     {"rate", e.rate ? nlohmann::json(*e.rate) : nlohmann::json()},
                     {"h", e.h},
                     {"flagged", e.flagged}};
  j["acceptance"] = acc;
  write_json(out_path(o, "hblcm.json"), j);
  {
    auto os = open_out(out_path(o, "acceptance.txt"));
    print_acceptance(os, rep);
  }
  auto flagged = rep.flagged();
  std::cout << "HBLCM: " << blocks.size() << " blocks, " << post.mh.size() << " chains, "
            << flagged.size() << " families outside [" << rep.lo << ", " << rep.hi
            << "] acceptance\n";
  return 0;
}

int cmd_diag(const common_opts &o, const std::vector<std::string> &files, double threshold) {
  require(files.size() >= 2, error_category::config, "diag needs at least two chain files");
  chain_array draws;
  std::vector<std::string> names;
  std::size_t n = 0;
  for (auto &f : files) {
    std::ifstream in(f);
    require(in.good(), error_category::data, "cannot open " + f);
    auto t = read_chain_csv(in);
    if (names.empty()) {
      names = t.names;
      n = t.rows.size();
    }
    require(t.names == names, error_category::dimension, f + ": parameter names differ");
    n = std::min(n, t.rows.size());
    draws.push_back(std::move(t.rows));
  }
  for (auto &c : draws)
    c.resize(n);
  auto rep = psrf(draws, names);
  auto os = open_out(out_path(o, "diag.txt"));
  for (std::size_t i = 0; i < names.size(); ++i)
    os << names[i] << ".rhat = " << fmt_double(rep.rhat[i]) << '\n';
  os << "max_rhat = " << fmt_double(rep.max_rhat) << '\n'
     << "worst = " << rep.worst << '\n'
     << "converged = " << (rep.max_rhat < threshold ? "yes" : "no") << '\n';
  std::cout << "max Rhat " << fmt_double(rep.max_rhat) << " (" << rep.worst << ") over "
            << draws.size() << " chains of " << n << " draws: "
            << (rep.max_rhat < threshold ? "converged" : "not converged") << '\n';
  return 0;
}

int cmd_eval(const common_opts &o, const std::string &pairs, const std::string &props_file,
             std::optional<double> cutoff, std::optional<double> lower) {
  auto cfg = resolve(o);
  double upper = cutoff.value_or(cfg.cutoff);
  if (!lower)
    lower = cfg.lower_cutoff;
  auto blocks = read_pairs_csv(pairs);
  std::ifstream in(props_file);
  require(in.good(), error_category::data, "cannot open " + props_file);
  std::vector<bool> include;
  auto props = read_match_props_csv(in, blocks, &include);
  auto dec = lower ? link_decide(props, upper, *lower) : link_decide(props, upper);
  auto r = error_rates(blocks, dec, include);
  auto os = open_out(out_path(o, "eval.txt"));
  os << "cutoff = " << fmt_double(upper) << '\n';
  if (lower)
    os << "lower_cutoff = " << fmt_double(*lower) << '\n';
  os << "pairs = " << r.pairs << '\n'
     << "true_matches = " << r.true_matches << '\n'
     << "declared_links = " << r.declared_links << '\n'
     << "false_matches = " << r.false_matches << '\n'
     << "false_nonmatches = " << r.false_nonmatches << '\n'
     << "undecided = " << r.undecided << '\n'
     << "fmr = " << fmt_double(r.fmr) << '\n'
     << "fnr = " << fmt_double(r.fnr) << '\n'
     << "link_error = " << fmt_double(r.link_error) << '\n';
  std::cout << "links " << r.declared_links << ", FMR " << fmt_double(r.fmr) << ", FNR "
            << fmt_double(r.fnr) << '\n';
  return 0;
}

int cmd_experiment(const common_opts &o) {
  auto cfg = resolve(o);
  auto res = run_experiment(cfg);
  {
    auto os = open_out(out_path(o, "error_rows.csv"));
    write_error_rows_csv(os, res.rows);
  }
  auto os = open_out(out_path(o, "summary.txt"));
  write_summary(os, cfg, res);
  write_summary(std::cout, cfg, res);
  return 0;
}

} // namespace

int main(int argc, char **argv) {
  CLI::App app{"Probabilistic record linkage with latent class models"};
  app.require_subcommand(1);

  common_opts o;
  std::string pairs, scen, prior_kind = "elicited", props;
  bool no_truth = false, keep_hyper = false;
  std::vector<std::string> chain_files;
  double threshold = 1.1;
  std::optional<double> cutoff, lower;

  auto *synth = app.add_subcommand("synth", "generate a synthetic pair dataset");
  add_common(synth, o);
  synth->add_option("--scenario", scen, "homogeneous or heterogeneous")
      ->check(CLI::IsMember({"homogeneous", "heterogeneous"}));
  synth->add_flag("--no-truth", no_truth, "omit the truth column");

  auto *em = app.add_subcommand("em", "fit the two-class mixture by EM");
  add_common(em, o);
  em->add_option("--pairs", pairs, "pair CSV")->required()->check(CLI::ExistingFile);

  auto *blcm = app.add_subcommand("blcm", "Gibbs sampler for the Bayesian latent class model");
  add_common(blcm, o);
  blcm->add_option("--pairs", pairs, "pair CSV")->required()->check(CLI::ExistingFile);
  blcm->add_option("--prior", prior_kind, "elicited or training")
      ->check(CLI::IsMember({"elicited", "training"}));

  auto *hblcm = app.add_subcommand("hblcm", "hierarchical model with per-block parameters");
  add_common(hblcm, o);
  hblcm->add_option("--pairs", pairs, "pair CSV")->required()->check(CLI::ExistingFile);
  hblcm->add_flag("--keep-hyper", keep_hyper, "also write (theta, tau) chains");

  auto *diag = app.add_subcommand("diag", "potential scale reduction over chain CSV files");
  add_common(diag, o);
  diag->add_option("--chains", chain_files, "chain CSV files")->required()->check(CLI::ExistingFile);
  diag->add_option("--threshold", threshold, "convergence threshold on max Rhat");

  auto *eval = app.add_subcommand("eval", "score link decisions against truth");
  add_common(eval, o);
  eval->add_option("--pairs", pairs, "pair CSV with truth")->required()->check(CLI::ExistingFile);
  eval->add_option("--props", props, "match proportion CSV")->required()->check(CLI::ExistingFile);
  eval->add_option("--cutoff", cutoff, "link if proportion >= cutoff");
  eval->add_option("--lower", lower, "nonlink if proportion <= lower");

  auto *exp = app.add_subcommand("experiment", "replicated simulation comparing the methods");
  add_common(exp, o);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError &e) {
    int rc = app.exit(e);
    return rc == 0 ? 0 : exit_code(error_category::config);
  }

  try {
    if (*synth)
      return cmd_synth(o, scen, no_truth);
    if (*em)
      return cmd_em(o, pairs);
    if (*blcm)
      return cmd_blcm(o, pairs, prior_kind);
    if (*hblcm)
      return cmd_hblcm(o, pairs, keep_hyper);
    if (*diag)
      return cmd_diag(o, chain_files, threshold);
    if (*eval)
      return cmd_eval(o, pairs, props, cutoff, lower);
    if (*exp)
      return cmd_experiment(o);
  } catch (const error &e) {
    std::cerr << "reclink: " << e.what() << '\n';
    return exit_code(e.category());
  } catch (const std::exception &e) {
    std::cerr << "reclink: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
