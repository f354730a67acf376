#pragma once

// File formats: datasets and splits as CSV, traces as JSON lines, network
// parameters and configurations as JSON.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include <nlohmann/json.hpp>

#include "lsplit/dataset.hpp"
#include "lsplit/debias.hpp"
#include "lsplit/errors.hpp"
#include "lsplit/ls_engine.hpp"
#include "lsplit/metrics.hpp"
#include "lsplit/nn.hpp"

namespace lsplit {

using Json = nlohmann::json;

// 17 significant digits: every double survives a text round trip.
inline std::string format_double(double v) {
  char buf[32];
  const int n = std::snprintf(buf, sizeof buf, "%.17g", v);
  return std::string(buf, static_cast<std::size_t>(n));
}

namespace detail {

inline std::vector<std::string_view> split_csv_line(std::string_view line) {
  std::vector<std::string_view> cells;
  std::size_t start = 0;
  while (true) {
    const auto comma = line.find(',', start);
    if (comma == std::string_view::npos) {
      cells.push_back(line.substr(start));
      break;
    }
    cells.push_back(line.substr(start, comma - start));
    start = comma + 1;
  }
  return cells;
}

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) {
    s.remove_suffix(1);
  }
  return s;
}

[[noreturn]] inline void parse_fail(const std::string& path, std::size_t line,
                                    const std::string& what) {
  throw ParseError(path + ":" + std::to_string(line) + ": " + what);
}

inline double parse_double(std::string_view cell, const std::string& path, std::size_t line,
                           std::string_view column) {
  cell = trim(cell);
  if (cell.empty()) parse_fail(path, line, "missing value in column '" + std::string(column) + "'");
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
  if (ec != std::errc() || ptr != cell.data() + cell.size() || !std::isfinite(v)) {
    parse_fail(path, line, "non-numeric value '" + std::string(cell) + "' in column '" +
                               std::string(column) + "'");
  }
  return v;
}

template <typename Int>
Int parse_int(std::string_view cell, const std::string& path, std::size_t line,
              std::string_view column) {
  cell = trim(cell);
  if (cell.empty()) parse_fail(path, line, "missing value in column '" + std::string(column) + "'");
  Int v{};
  const auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
  if (ec != std::errc() || ptr != cell.data() + cell.size()) {
    parse_fail(path, line, "invalid integer '" + std::string(cell) + "' in column '" +
                               std::string(column) + "'");
  }
  return v;
}

inline std::ifstream open_in(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open '" + path + "' for reading");
  return in;
}

inline std::ofstream open_out(const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ContractError("cannot open '" + path + "' for writing");
  return out;
}

}  // namespace detail

// Reads `id,f0,...,f{d-1},label[,spurious][,polluted]`. num_classes defaults
// to max label + 1.
inline LabeledData load_dataset(const std::string& path,
                                std::optional<std::size_t> num_classes = std::nullopt) {
  auto in = detail::open_in(path);
  std::string line;
  if (!std::getline(in, line)) throw ParseError(path + ": empty file (no header row)");
  const auto header = detail::split_csv_line(line);
  std::vector<std::string> cols;
  for (auto h : header) cols.emplace_back(detail::trim(h));
  if (cols.size() < 3 || cols.front() != "id") {
    detail::parse_fail(path, 1, "header must start with 'id' and contain features and 'label'");
  }
  std::optional<std::size_t> label_col, spurious_col, polluted_col;
  std::size_t d = 0;
  for (std::size_t c = 1; c < cols.size(); ++c) {
    if (cols[c] == "label") {
      label_col = c;
    } else if (cols[c] == "spurious") {
      spurious_col = c;
    } else if (cols[c] == "polluted") {
      polluted_col = c;
    } else if (cols[c] == "f" + std::to_string(d) && !label_col) {
      ++d;
    } else {
      detail::parse_fail(path, 1, "unexpected column '" + cols[c] + "'");
    }
  }
  if (!label_col) detail::parse_fail(path, 1, "missing 'label' column");
  if (d == 0) detail::parse_fail(path, 1, "no feature columns f0..f{d-1}");

  LabeledData out;
  Dataset& ds = out.dataset;
  std::vector<double> feats;
  if (spurious_col) out.truth.spurious.emplace();
  if (polluted_col) out.truth.polluted.emplace();
  std::size_t line_no = 1;
  std::size_t max_label = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (detail::trim(line).empty()) continue;
    const auto cells = detail::split_csv_line(line);
    if (cells.size() != cols.size()) {
      detail::parse_fail(path, line_no,
                         "expected " + std::to_string(cols.size()) + " cells, found " +
                             std::to_string(cells.size()));
    }
    ds.ids.push_back(detail::parse_int<std::int64_t>(cells[0], path, line_no, "id"));
    for (std::size_t c = 1; c <= d; ++c) {
      feats.push_back(detail::parse_double(cells[c], path, line_no, cols[c]));
    }
    const auto y = detail::parse_int<std::size_t>(cells[*label_col], path, line_no, "label");
    if (num_classes && y >= *num_classes) {
      detail::parse_fail(path, line_no,
                         "label " + std::to_string(y) + " >= number of classes " +
                             std::to_string(*num_classes));
    }
    max_label = std::max(max_label, y);
    ds.labels.push_back(y);
    if (spurious_col) {
      const int a = detail::parse_int<int>(cells[*spurious_col], path, line_no, "spurious");
      out.truth.spurious->push_back(a);
    }
    if (polluted_col) {
      const int p = detail::parse_int<int>(cells[*polluted_col], path, line_no, "polluted");
      if (p != 0 && p != 1) detail::parse_fail(path, line_no, "polluted must be 0 or 1");
      out.truth.polluted->push_back(static_cast<std::uint8_t>(p));
    }
  }
  if (ds.labels.empty()) throw ContractError(path + ": dataset has no examples");
  ds.num_classes = num_classes ? *num_classes : max_label + 1;
  ds.features = Matrix(ds.labels.size(), d);
  ds.features.data = std::move(feats);
  ds.validate();
  return out;
}

inline void save_dataset(const Dataset& ds, const GroundTruth& truth, const std::string& path) {
  ds.validate();
  auto out = detail::open_out(path);
  out << "id";
  for (std::size_t c = 0; c < ds.dim(); ++c) out << ",f" << c;
  out << ",label";
  if (truth.spurious) out << ",spurious";
  if (truth.polluted) out << ",polluted";
  out << '\n';
  for (std::size_t i = 0; i < ds.size(); ++i) {
    out << ds.ids[i];
    for (double v : ds.row(i)) out << ',' << format_double(v);
    out << ',' << ds.labels[i];
    if (truth.spurious) out << ',' << (*truth.spurious)[i];
    if (truth.polluted) out << ',' << static_cast<int>((*truth.polluted)[i]);
    out << '\n';
  }
  if (!out) throw ContractError("failed writing '" + path + "'");
}

inline void save_dataset(const LabeledData& data, const std::string& path) {
  save_dataset(data.dataset, data.truth, path);
}

// `id,prob,z`
inline void save_split(const SplitState& split, const std::string& path) {
  if (split.ids.size() != split.probs.size() || split.ids.size() != split.assignment.size()) {
    throw ContractError("split columns have inconsistent lengths");
  }
  auto out = detail::open_out(path);
  out << "id,prob,z\n";
  for (std::size_t i = 0; i < split.ids.size(); ++i) {
    out << split.ids[i] << ',' << format_double(split.probs[i]) << ','
        << static_cast<int>(split.assignment[i]) << '\n';
  }
  if (!out) throw ContractError("failed writing '" + path + "'");
}

inline SplitState load_split(const std::string& path) {
  auto in = detail::open_in(path);
  std::string line;
  if (!std::getline(in, line) || detail::trim(line) != "id,prob,z") {
    throw ParseError(path + ":1: split header must be 'id,prob,z'");
  }
  SplitState s;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (detail::trim(line).empty()) continue;
    const auto cells = detail::split_csv_line(line);
    if (cells.size() != 3) detail::parse_fail(path, line_no, "expected 3 cells");
    s.ids.push_back(detail::parse_int<std::int64_t>(cells[0], path, line_no, "id"));
    const double p = detail::parse_double(cells[1], path, line_no, "prob");
    if (!(p > 0.0 && p < 1.0)) detail::parse_fail(path, line_no, "prob must lie in (0, 1)");
    s.probs.push_back(p);
    const int z = detail::parse_int<int>(cells[2], path, line_no, "z");
    if (z != 0 && z != 1) detail::parse_fail(path, line_no, "z must be 0 or 1");
    s.assignment.push_back(static_cast<std::uint8_t>(z));
  }
  if (s.ids.empty()) throw ContractError(path + ": split has no rows");
  return s;
}

// Split rows reordered to follow the dataset's ids.
inline SplitState align_split(const Dataset& ds, const SplitState& split) {
  std::unordered_map<std::int64_t, std::size_t> row_of;
  for (std::size_t r = 0; r < split.ids.size(); ++r) {
    if (!row_of.emplace(split.ids[r], r).second) {
      throw ContractError("split lists id " + std::to_string(split.ids[r]) + " twice");
    }
  }
  const std::unordered_set<std::int64_t> known(ds.ids.begin(), ds.ids.end());
  for (auto id : split.ids) {
    if (!known.count(id)) throw ContractError("split references unknown id " + std::to_string(id));
  }
  SplitState out;
  out.seed = split.seed;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const auto it = row_of.find(ds.ids[i]);
    if (it == row_of.end()) {
      throw ContractError("dataset id " + std::to_string(ds.ids[i]) + " is missing from the split");
    }
    out.ids.push_back(ds.ids[i]);
    out.probs.push_back(split.probs[it->second]);
    out.assignment.push_back(split.assignment[it->second]);
  }
  return out;
}

// ---------------------------------------------------------------------------
// JSON

inline Json to_json(const LabelMarginals& m) {
  return Json{{"p_y_given_train", m.given_train},
              {"p_y_given_test", m.given_test},
              {"p_y", m.overall}};
}

inline Json to_json(const IterationTrace& t) {
  return Json{{"outer_iter", t.outer_iter},
              {"gap_stats",
               {{"train_accuracy", t.gap_stats.train_accuracy},
                {"test_accuracy", t.gap_stats.test_accuracy},
                {"gap", t.gap_stats.gap},
                {"test_size", t.gap_stats.test_indices.size()}}},
              {"heldout_accuracy", t.heldout_accuracy},
              {"omega1", t.omega1},
              {"omega2", t.omega2},
              {"gap_loss", t.gap_loss},
              {"total_loss", t.total_loss},
              {"split_ratio", t.split_ratio},
              {"label_marginals", to_json(t.label_marginals)},
              {"inner_epochs", t.inner_epochs}};
}

inline void write_trace_jsonl(std::span<const IterationTrace> traces, const std::string& path) {
  auto out = detail::open_out(path);
  for (const auto& t : traces) out << to_json(t).dump() << '\n';
  if (!out) throw ContractError("failed writing '" + path + "'");
}

inline std::vector<Json> read_jsonl(const std::string& path) {
  auto in = detail::open_in(path);
  std::vector<Json> rows;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (detail::trim(line).empty()) continue;
    try {
      rows.push_back(Json::parse(line));
    } catch (const Json::exception& e) {
      detail::parse_fail(path, line_no, e.what());
    }
  }
  return rows;
}

inline Json to_json(const MlpParams& p) {
  Json layers = Json::array();
  for (const auto& l : p.layers) {
    layers.push_back({{"rows", l.weight.rows},
                      {"cols", l.weight.cols},
                      {"weight", l.weight.data},
                      {"bias", l.bias}});
  }
  return Json{{"activation", "relu"}, {"layers", layers}};
}

inline MlpParams mlp_from_json(const Json& j) {
  try {
    MlpParams p;
    for (const auto& jl : j.at("layers")) {
      Layer l;
      l.weight.rows = jl.at("rows").get<std::size_t>();
      l.weight.cols = jl.at("cols").get<std::size_t>();
      l.weight.data = jl.at("weight").get<std::vector<double>>();
      l.bias = jl.at("bias").get<std::vector<double>>();
      p.layers.push_back(std::move(l));
    }
    validate(p);
    return p;
  } catch (const Json::exception& e) {
    throw ParseError(std::string("malformed network JSON: ") + e.what());
  }
}

template <typename Key>
Json group_stats_json(const GroupStats<Key>& g) {
  Json per_group = Json::object();
  for (const auto& [key, e] : g.groups) {
    Json entry{{"count", e.count}, {"accuracy", e.accuracy}};
    if (e.mean_loss) entry["mean_loss"] = *e.mean_loss;
    per_group[key.to_string()] = entry;
  }
  return Json{{"average_accuracy", g.average_accuracy},
              {"worst_group_accuracy", g.worst_group_accuracy},
              {"worst_group", g.worst_group_key.to_string()},
              {"per_group", per_group}};
}

inline Json to_json(const NoiseReport& r) {
  return Json{{"n_polluted", r.n_polluted},
              {"n_test_split", r.n_test_split},
              {"precision", r.precision},
              {"recall", r.recall},
              {"oracle_precision", r.oracle_precision},
              {"oracle_recall", r.oracle_recall},
              {"recall_undefined", r.recall_undefined}};
}

// Config (de)serialization. Unknown keys are rejected so that typos surface
// as configuration errors instead of silently using defaults.
namespace detail {

template <typename T>
void read_field(const Json& j, const char* key, T& field, std::vector<std::string>& seen) {
  if (!j.contains(key)) return;
  seen.emplace_back(key);
  try {
    field = j.at(key).get<T>();
  } catch (const Json::exception& e) {
    throw ConfigError(std::string("config field '") + key + "': " + e.what());
  }
}

inline void reject_unknown(const Json& j, const std::vector<std::string>& seen) {
  for (const auto& [k, v] : j.items()) {
    if (std::find(seen.begin(), seen.end(), k) == seen.end()) {
      throw ConfigError("unknown config field '" + k + "'");
    }
  }
}

}  // namespace detail

inline Json to_json(const LsConfig& c) {
  return Json{{"delta", c.delta},
              {"splitter_lr", c.splitter_lr},
              {"predictor_lr", c.predictor_lr},
              {"batch_size", c.batch_size},
              {"predictor_patience", c.predictor_patience},
              {"predictor_max_epochs", c.predictor_max_epochs},
              {"inner_stop_tol", c.inner_stop_tol},
              {"inner_window", c.inner_window},
              {"inner_max_epochs", c.inner_max_epochs},
              {"outer_patience", c.outer_patience},
              {"max_outer_iters", c.max_outer_iters},
              {"heldout_fraction", c.heldout_fraction},
              {"prob_epsilon", c.prob_epsilon},
              {"seed", c.seed},
              {"splitter_hidden", c.splitter_hidden},
              {"predictor_hidden", c.predictor_hidden},
              {"dropout", c.dropout},
              {"gap_weight", c.gap_weight},
              {"omega1_weight", c.omega1_weight},
              {"omega2_weight", c.omega2_weight}};
}

// Overrides the fields present in `j` on top of `base`, then validates.
inline LsConfig ls_config_from_json(const Json& j, LsConfig base = {}) {
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  std::vector<std::string> seen;
  detail::read_field(j, "delta", base.delta, seen);
  detail::read_field(j, "splitter_lr", base.splitter_lr, seen);
  detail::read_field(j, "predictor_lr", base.predictor_lr, seen);
  detail::read_field(j, "batch_size", base.batch_size, seen);
  detail::read_field(j, "predictor_patience", base.predictor_patience, seen);
  detail::read_field(j, "predictor_max_epochs", base.predictor_max_epochs, seen);
  detail::read_field(j, "inner_stop_tol", base.inner_stop_tol, seen);
  detail::read_field(j, "inner_window", base.inner_window, seen);
  detail::read_field(j, "inner_max_epochs", base.inner_max_epochs, seen);
  detail::read_field(j, "outer_patience", base.outer_patience, seen);
  detail::read_field(j, "max_outer_iters", base.max_outer_iters, seen);
  detail::read_field(j, "heldout_fraction", base.heldout_fraction, seen);
  detail::read_field(j, "prob_epsilon", base.prob_epsilon, seen);
  detail::read_field(j, "seed", base.seed, seen);
  detail::read_field(j, "splitter_hidden", base.splitter_hidden, seen);
  detail::read_field(j, "predictor_hidden", base.predictor_hidden, seen);
  detail::read_field(j, "dropout", base.dropout, seen);
  detail::read_field(j, "gap_weight", base.gap_weight, seen);
  detail::read_field(j, "omega1_weight", base.omega1_weight, seen);
  detail::read_field(j, "omega2_weight", base.omega2_weight, seen);
  detail::reject_unknown(j, seen);
  base.validate();
  return base;
}

inline Json to_json(const DroConfig& c) {
  return Json{{"group_step_size", c.group_step_size},
              {"lr", c.lr},
              {"batch_size", c.batch_size},
              {"max_epochs", c.max_epochs},
              {"patience", c.patience},
              {"weight_decay", c.weight_decay},
              {"hidden", c.hidden},
              {"dropout", c.dropout},
              {"seed", c.seed}};
}

inline DroConfig dro_config_from_json(const Json& j, DroConfig base = {}) {
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  std::vector<std::string> seen;
  detail::read_field(j, "group_step_size", base.group_step_size, seen);
  detail::read_field(j, "lr", base.lr, seen);
  detail::read_field(j, "batch_size", base.batch_size, seen);
  detail::read_field(j, "max_epochs", base.max_epochs, seen);
  detail::read_field(j, "patience", base.patience, seen);
  detail::read_field(j, "weight_decay", base.weight_decay, seen);
  detail::read_field(j, "hidden", base.hidden, seen);
  detail::read_field(j, "dropout", base.dropout, seen);
  detail::read_field(j, "seed", base.seed, seen);
  detail::reject_unknown(j, seen);
  base.validate();
  return base;
}

inline Json read_json_file(const std::string& path) {
  auto in = detail::open_in(path);
  try {
    return Json::parse(in);
  } catch (const Json::exception& e) {
    throw ParseError(path + ": " + e.what());
  }
}

inline void write_json_file(const Json& j, const std::string& path) {
  auto out = detail::open_out(path);
  out << j.dump(2) << '\n';
  if (!out) throw ContractError("failed writing '" + path + "'");
}

}  // namespace lsplit
