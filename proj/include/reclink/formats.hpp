#ifndef RECLINK_FORMATS_HPP
#define RECLINK_FORMATS_HPP

#include <charconv>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "blcm.hpp"
#include "core.hpp"
#include "synthgen.hpp"

namespace reclink {

/// Shortest decimal representation that round-trips.
inline std::string fmt_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

namespace detail {

inline std::vector<std::string_view> split_csv(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (;;) {
    auto pos = line.find(',', start);
    out.push_back(line.substr(start, pos == std::string_view::npos ? pos : pos - start));
    if (pos == std::string_view::npos)
      break;
    start = pos + 1;
  }
  return out;
}

template <class T> T parse_number(std::string_view s, std::size_t line_no) {
  while (!s.empty() && (s.back() == '\r' || s.back() == ' '))
    s.remove_suffix(1);
  while (!s.empty() && s.front() == ' ')
    s.remove_prefix(1);
  T v{};
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  require(res.ec == std::errc{} && res.ptr == s.data() + s.size(), error_category::data,
          "line " + std::to_string(line_no) + ": cannot parse '" + std::string(s) + "'");
  return v;
}

inline std::string trim(std::string s) {
  while (!s.empty() && (s.back() == '\r' || s.back() == ' '))
    s.pop_back();
  while (!s.empty() && s.front() == ' ')
    s.erase(s.begin());
  return s;
}

} // namespace detail

// ---------------------------------------------------------------------------
// Pair CSV: block,a,b,g1,...,gK[,truth]

inline void write_pairs_csv(std::ostream &os, const synth_dataset &ds, bool with_truth = true) {
  const int K = ds.config.fields;
  os << "block,a,b";
  for (int k = 1; k <= K; ++k)
    os << ",g" << k;
  if (with_truth)
    os << ",truth";
  os << '\n';
  for (std::size_t s = 0; s < ds.pairs.size(); ++s) {
    const auto &bp = ds.pairs[s];
    for (count_t a = 0; a < bp.n_a; ++a) {
      for (count_t b = 0; b < bp.n_b; ++b) {
        auto i = a * bp.n_b + b;
        os << ds.blocks[s].block_id << ',' << a << ',' << b;
        for (int k = 0; k < K; ++k)
          os << ',' << ((bp.patterns[i] >> k) & 1u);
        if (with_truth)
          os << ',' << static_cast<int>(bp.truth[i]);
        os << '\n';
      }
    }
  }
}

/// Reads a pair CSV into per-block pattern counts. Every block must contain
/// the full cross product of its A and B records exactly once. Blocks are
/// returned in increasing block id.
inline std::vector<block_data> read_pairs_csv(std::istream &is) {
  std::string line;
  require(static_cast<bool>(std::getline(is, line)), error_category::data, "pair CSV is empty");
  auto header = detail::split_csv(line);
  require(header.size() >= 4 && detail::trim(std::string(header[0])) == "block" &&
              detail::trim(std::string(header[1])) == "a" &&
              detail::trim(std::string(header[2])) == "b",
          error_category::data, "pair CSV header must start with block,a,b");
  bool has_truth = detail::trim(std::string(header.back())) == "truth";
  const int K = static_cast<int>(header.size()) - 3 - (has_truth ? 1 : 0);
  require(K >= 1 && K <= max_fields, error_category::data, "pair CSV: bad number of fields");
  for (int k = 0; k < K; ++k)
    require(detail::trim(std::string(header[3 + k])) == "g" + std::to_string(k + 1),
            error_category::data, "pair CSV: expected column g" + std::to_string(k + 1));

  struct acc {
    std::set<count_t> as, bs;
    std::set<std::pair<count_t, count_t>> seen;
    std::vector<count_t> counts, truth;
  };
  std::map<std::size_t, acc> blocks;
  std::size_t line_no = 1;
  while (std::getline(is, line)) {
    ++line_no;
    if (detail::trim(line).empty())
      continue;
    auto cols = detail::split_csv(line);
    require(cols.size() == header.size(), error_category::data,
            "line " + std::to_string(line_no) + ": expected " + std::to_string(header.size()) +
                " columns");
    auto id = detail::parse_number<std::size_t>(cols[0], line_no);
    auto a = detail::parse_number<count_t>(cols[1], line_no);
    auto b = detail::parse_number<count_t>(cols[2], line_no);
    auto &blk = blocks[id];
    if (blk.counts.empty()) {
      blk.counts.assign(pattern_count(K), 0);
      blk.truth.assign(pattern_count(K), 0);
    }
    require(blk.seen.emplace(a, b).second, error_category::data,
            "line " + std::to_string(line_no) + ": duplicate pair");
    blk.as.insert(a);
    blk.bs.insert(b);
    pattern_t g = 0;
    for (int k = 0; k < K; ++k) {
      int v = detail::parse_number<int>(cols[3 + k], line_no);
      require(v == 0 || v == 1, error_category::data,
              "line " + std::to_string(line_no) + ": comparison values must be 0 or 1");
      g |= static_cast<pattern_t>(v) << k;
    }
    ++blk.counts[g];
    if (has_truth) {
      int t = detail::parse_number<int>(cols.back(), line_no);
      require(t == 0 || t == 1, error_category::data,
              "line " + std::to_string(line_no) + ": truth must be 0 or 1");
      blk.truth[g] += t;
    }
  }
  std::vector<block_data> out;
  for (auto &[id, blk] : blocks) {
    block_data bd(id, blk.as.size(), blk.bs.size(), K);
    bd.pattern_counts = std::move(blk.counts);
    if (has_truth)
      bd.truth_match_counts = std::move(blk.truth);
    require(blk.seen.size() == bd.pairs(), error_category::data,
            "block " + std::to_string(id) + " does not contain all n_a*n_b pairs");
    bd.validate();
    out.push_back(std::move(bd));
  }
  return out;
}

inline std::vector<block_data> read_pairs_csv(const std::string &path) {
  std::ifstream in(path);
  require(in.good(), error_category::data, "cannot open " + path);
  return read_pairs_csv(in);
}

// ---------------------------------------------------------------------------
// Chain CSV: header of parameter names, one row per retained sweep.

inline void write_chain_csv(std::ostream &os, const std::vector<std::string> &names,
                            const std::vector<std::vector<double>> &rows) {
  for (std::size_t j = 0; j < names.size(); ++j)
    os << (j ? "," : "") << names[j];
  os << '\n';
  for (auto &row : rows) {
    for (std::size_t j = 0; j < row.size(); ++j)
      os << (j ? "," : "") << fmt_double(row[j]);
    os << '\n';
  }
}

struct chain_table {
  std::vector<std::string> names;
  std::vector<std::vector<double>> rows;
};

inline chain_table read_chain_csv(std::istream &is) {
  chain_table t;
  std::string line;
  require(static_cast<bool>(std::getline(is, line)), error_category::data, "chain CSV is empty");
  for (auto c : detail::split_csv(line))
    t.names.push_back(detail::trim(std::string(c)));
  std::size_t line_no = 1;
  while (std::getline(is, line)) {
    ++line_no;
    if (detail::trim(line).empty())
      continue;
    auto cols = detail::split_csv(line);
    require(cols.size() == t.names.size(), error_category::data,
            "chain CSV line " + std::to_string(line_no) + ": wrong column count");
    std::vector<double> row;
    for (auto c : cols)
      row.push_back(detail::parse_number<double>(c, line_no));
    t.rows.push_back(std::move(row));
  }
  return t;
}

// ---------------------------------------------------------------------------
// Match proportions: block,pattern,g1..gK,pairs,proportion

inline void write_match_props_csv(std::ostream &os, std::span<const block_data> blocks,
                                  const std::vector<std::vector<double>> &props) {
  const int K = common_fields(blocks);
  os << "block,pattern";
  for (int k = 1; k <= K; ++k)
    os << ",g" << k;
  os << ",pairs,proportion\n";
  for (std::size_t s = 0; s < blocks.size(); ++s) {
    for (std::size_t p = 0; p < props[s].size(); ++p) {
      if (blocks[s].pattern_counts[p] == 0)
        continue;
      os << blocks[s].block_id << ',' << p;
      for (int k = 0; k < K; ++k)
        os << ',' << ((p >> k) & 1u);
      os << ',' << blocks[s].pattern_counts[p] << ',' << fmt_double(props[s][p]) << '\n';
    }
  }
}

/// Reads match proportions aligned to `blocks` (by block id). Patterns not
/// listed get proportion 0. `present`, when given, marks the blocks that
/// appear in the file.
inline std::vector<std::vector<double>> read_match_props_csv(std::istream &is,
                                                             std::span<const block_data> blocks,
                                                             std::vector<bool> *present = nullptr) {
  const int K = common_fields(blocks);
  std::map<std::size_t, std::size_t> index;
  for (std::size_t s = 0; s < blocks.size(); ++s)
    index[blocks[s].block_id] = s;
  std::vector<std::vector<double>> props(blocks.size(),
                                         std::vector<double>(pattern_count(K), 0.0));
  if (present)
    present->assign(blocks.size(), false);
  std::string line;
  require(static_cast<bool>(std::getline(is, line)), error_category::data,
          "match proportion CSV is empty");
  auto header = detail::split_csv(line);
  require(header.size() == static_cast<std::size_t>(K) + 4, error_category::data,
          "match proportion CSV does not match the pair data field count");
  std::size_t line_no = 1;
  while (std::getline(is, line)) {
    ++line_no;
    if (detail::trim(line).empty())
      continue;
    auto cols = detail::split_csv(line);
    require(cols.size() == header.size(), error_category::data,
            "proportion CSV line " + std::to_string(line_no) + ": wrong column count");
    auto id = detail::parse_number<std::size_t>(cols[0], line_no);
    auto p = detail::parse_number<std::size_t>(cols[1], line_no);
    auto it = index.find(id);
    require(it != index.end(), error_category::data,
            "proportion CSV refers to unknown block " + std::to_string(id));
    require(p < pattern_count(K), error_category::data, "pattern index out of range");
    double v = detail::parse_number<double>(cols.back(), line_no);
    require(v >= 0.0 && v <= 1.0, error_category::data, "proportions must lie in [0,1]");
    props[it->second][p] = v;
    if (present)
      (*present)[it->second] = true;
  }
  return props;
}

// ---------------------------------------------------------------------------
// JSON helpers

inline nlohmann::json to_json(const mixture_params &p) {
  return {{"p_M", p.p_match}, {"p_M_k", p.m_probs}, {"p_U_k", p.u_probs}};
}

inline nlohmann::json to_json(const synth_config &c) {
  return {{"blocks", c.blocks},       {"block_size", c.block_size},
          {"fields", c.fields},       {"scenario", to_string(c.kind)},
          {"m_probs", c.m_probs},     {"u_probs", c.u_probs},
          {"m_range", {c.m_lo, c.m_hi}}, {"u_range", {c.u_lo, c.u_hi}},
          {"matching", to_string(c.matching)}, {"rho", c.rho},
          {"seed", c.seed}};
}

/// Sidecar describing a generated dataset: its config and generating values.
inline nlohmann::json synth_sidecar(const synth_dataset &ds) {
  nlohmann::json j;
  j["config"] = to_json(ds.config);
  j["pairs"] = ds.total_pairs();
  nlohmann::json tp = nlohmann::json::array();
  for (std::size_t s = 0; s < ds.true_params.size(); ++s) {
    auto e = to_json(ds.true_params[s]);
    e["block"] = ds.blocks[s].block_id;
    tp.push_back(e);
  }
  j["true_params"] = tp;
  return j;
}

inline nlohmann::json to_json(const beta_prior_set &p) {
  auto pairs = [](const std::vector<beta_params> &v) {
    nlohmann::json a = nlohmann::json::array();
    for (auto &b : v)
      a.push_back({b.alpha, b.beta});
    return a;
  };
  return {{"match_rate", {p.match_rate.alpha, p.match_rate.beta}},
          {"m_fields", pairs(p.m_fields)},
          {"u_fields", pairs(p.u_fields)}};
}

} // namespace reclink

#endif
