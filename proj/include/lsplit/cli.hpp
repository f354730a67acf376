#pragma once

// The `lsplit` command-line tool. Every command is a pure function of its
// input files, flags and seed; machine outputs go to files, logs to stderr.
//
//   lsplit gen spurious|blobs|noise ...
//   lsplit split      --data D --out O [--config C] [--seed S | --seeds a,b,c]
//   lsplit debias     --data D --split S --out O [...]
//   lsplit noise-eval --data D --split S --out O

#include <chrono>
#include <cstdint>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <iterator>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <openssl/evp.h>

#include "CLI11.hpp"
#include "lsplit/datagen.hpp"
#include "lsplit/debias.hpp"
#include "lsplit/errors.hpp"
#include "lsplit/io.hpp"
#include "lsplit/ls_engine.hpp"
#include "lsplit/metrics.hpp"

namespace lsplit::cli {

inline constexpr const char* kToolVersion = "0.1.0";
inline constexpr const char* kOutDirEnv = "LSPLIT_OUT_DIR";
inline constexpr const char* kLogLevelEnv = "LSPLIT_LOG_LEVEL";
inline constexpr const char* kManifestName = "manifest.json";

enum class LogLevel { kError = 0, kWarn = 1, kInfo = 2, kDebug = 3 };

class Logger {
 public:
  explicit Logger(std::ostream& sink) : sink_(sink) {
    if (const char* env = std::getenv(kLogLevelEnv)) {
      const std::string v(env);
      if (v == "error") level_ = LogLevel::kError;
      if (v == "warn") level_ = LogLevel::kWarn;
      if (v == "info") level_ = LogLevel::kInfo;
      if (v == "debug") level_ = LogLevel::kDebug;
    }
  }

  void log(LogLevel level, const std::string& msg) const {
    if (level > level_) return;
    static constexpr const char* kNames[] = {"error", "warn", "info", "debug"};
    sink_ << "[lsplit " << kNames[static_cast<int>(level)] << "] " << msg << '\n';
  }
  void error(const std::string& m) const { log(LogLevel::kError, m); }
  void warn(const std::string& m) const { log(LogLevel::kWarn, m); }
  void info(const std::string& m) const { log(LogLevel::kInfo, m); }
  void debug(const std::string& m) const { log(LogLevel::kDebug, m); }

 private:
  std::ostream& sink_;
  LogLevel level_ = LogLevel::kInfo;
};

inline std::string sha256_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open '" + path + "' for hashing");
  const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
    throw ContractError("sha256 failed for '" + path + "'");
  }
  std::ostringstream hex;
  for (unsigned int i = 0; i < len; ++i) {
    hex << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(digest[i]);
  }
  return hex.str();
}

inline std::string utc_now() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

// One per output directory. Records how the outputs were produced and the
// SHA-256 of every input and output file.
class Manifest {
 public:
  Manifest(std::string command, std::vector<std::string> argv)
      : command_(std::move(command)), argv_(std::move(argv)), started_(utc_now()) {}

  void set_config(Json config) { config_ = std::move(config); }
  void set_seed(std::uint64_t seed) { seed_ = seed; }
  void add_input(const std::string& path) { inputs_.push_back(path); }
  void add_output(const std::string& path) { outputs_.push_back(path); }

  void write(const std::filesystem::path& dir) const {
    Json inputs = Json::array();
    for (const auto& p : inputs_) inputs.push_back({{"path", p}, {"sha256", sha256_file(p)}});
    Json outputs = Json::array();
    for (const auto& p : outputs_) {
      outputs.push_back({{"path", std::filesystem::path(p).filename().string()},
                         {"sha256", sha256_file(p)}});
    }
    Json j{{"command", command_},
           {"argv", argv_},
           {"config", config_},
           {"inputs", inputs},
           {"outputs", outputs},
           {"tool_version", kToolVersion},
           {"started_at", started_},
           {"finished_at", utc_now()}};
    if (seed_) j["seed"] = *seed_;
    write_json_file(j, (dir / kManifestName).string());
  }

 private:
  std::string command_;
  std::vector<std::string> argv_;
  Json config_ = Json::object();
  std::optional<std::uint64_t> seed_;
  std::vector<std::string> inputs_;
  std::vector<std::string> outputs_;
  std::string started_;
};

// If `path` sits next to a manifest that lists it as an output, its digest
// must still match.
inline void verify_against_manifest(const std::string& path) {
  namespace fs = std::filesystem;
  const fs::path manifest = fs::path(path).parent_path() / kManifestName;
  if (!fs::exists(manifest)) return;
  const Json j = read_json_file(manifest.string());
  if (!j.contains("outputs")) return;
  const std::string name = fs::path(path).filename().string();
  for (const auto& o : j.at("outputs")) {
    if (o.value("path", "") == name) {
      if (o.value("sha256", "") != sha256_file(path)) {
        throw ContractError("'" + path + "' does not match the digest recorded in " +
                            manifest.string());
      }
      return;
    }
  }
}

struct Context {
  std::vector<std::string> argv;
  Logger log;
};

inline std::filesystem::path resolve_out(const std::string& flag) {
  std::string out = flag;
  if (out.empty()) {
    if (const char* env = std::getenv(kOutDirEnv)) out = env;
  }
  if (out.empty()) {
    throw CLI::RequiredError("--out (or set " + std::string(kOutDirEnv) + ")");
  }
  std::filesystem::create_directories(out);
  return out;
}

// ---------------------------------------------------------------------------
// gen

struct GenSpuriousArgs {
  SpuriousSpec spec;
  std::string out;
};

inline void cmd_gen_spurious(const GenSpuriousArgs& a, const Context& ctx) {
  const auto dir = resolve_out(a.out);
  const auto data = gen_spurious(a.spec);
  const auto path = (dir / "dataset.csv").string();
  save_dataset(data, path);
  Manifest m("gen spurious", ctx.argv);
  m.set_config({{"n", a.spec.n},
                {"d_core", a.spec.d_core},
                {"d_spurious", a.spec.d_spurious},
                {"d_noise", a.spec.d_noise},
                {"rho", a.spec.rho},
                {"core_noise_std", a.spec.core_noise_std},
                {"spurious_noise_std", a.spec.spurious_noise_std}});
  m.set_seed(a.spec.seed);
  m.add_output(path);
  m.write(dir);
  ctx.log.info("wrote " + std::to_string(data.dataset.size()) + " rows to " + path);
}

struct GenBlobsArgs {
  BlobSpec spec;
  std::string out;
};

inline void cmd_gen_blobs(const GenBlobsArgs& a, const Context& ctx) {
  const auto dir = resolve_out(a.out);
  const auto data = gen_blobs(a.spec);
  const auto path = (dir / "dataset.csv").string();
  save_dataset(data, path);
  Manifest m("gen blobs", ctx.argv);
  m.set_config({{"n", a.spec.n},
                {"num_classes", a.spec.num_classes},
                {"dim", a.spec.dim},
                {"separation", a.spec.separation},
                {"noise_std", a.spec.noise_std}});
  m.set_seed(a.spec.seed);
  m.add_output(path);
  m.write(dir);
  ctx.log.info("wrote " + std::to_string(data.dataset.size()) + " rows to " + path);
}

struct GenNoiseArgs {
  std::string data;
  double eta = 0.1;
  std::size_t classes = 10;
  std::uint64_t seed = 0;
  std::string out;
};

inline void cmd_gen_noise(const GenNoiseArgs& a, const Context& ctx) {
  if (!(a.eta >= 0.0 && a.eta < 1.0)) throw ConfigError("--eta must lie in [0, 1)");
  const auto dir = resolve_out(a.out);
  const auto clean = load_dataset(a.data, a.classes);
  auto noisy = inject_label_noise(clean.dataset, a.eta, a.classes, a.seed);
  GroundTruth truth = clean.truth;
  truth.polluted = noisy.polluted;
  const auto path = (dir / "dataset.csv").string();
  save_dataset(noisy.dataset, truth, path);
  Manifest m("gen noise", ctx.argv);
  m.set_config({{"eta", a.eta}, {"classes", a.classes}});
  m.set_seed(a.seed);
  m.add_input(a.data);
  m.add_output(path);
  m.write(dir);
  std::size_t n_polluted = 0;
  for (auto p : noisy.polluted) n_polluted += p;
  ctx.log.info("polluted " + std::to_string(n_polluted) + " of " +
               std::to_string(noisy.polluted.size()) + " labels -> " + path);
}

// ---------------------------------------------------------------------------
// split

struct SplitArgs {
  std::string data;
  std::string config;
  std::optional<std::uint64_t> seed;
  std::vector<std::uint64_t> seeds;
  std::string out;
};

inline LsConfig resolve_ls_config(const SplitArgs& a) {
  LsConfig cfg;
  if (!a.config.empty()) cfg = ls_config_from_json(read_json_file(a.config));
  if (a.seed) cfg.seed = *a.seed;
  cfg.validate();
  return cfg;
}

struct SplitRunOutputs {
  std::vector<std::string> files;
  LsResult result;
};

inline SplitRunOutputs run_split_once(const Dataset& ds, const LsConfig& cfg,
                                      const std::filesystem::path& dir, const Context& ctx) {
  auto result = run_ls(ds, cfg, [&](const IterationTrace& t) {
    std::ostringstream s;
    s << "seed " << cfg.seed << " iter " << t.outer_iter << ": gap " << t.gap_stats.gap
      << " (train " << t.gap_stats.train_accuracy << ", test " << t.gap_stats.test_accuracy
      << ") ratio " << t.split_ratio << " omega1 " << t.omega1 << " omega2 " << t.omega2
      << " inner epochs " << t.inner_epochs;
    ctx.log.info(s.str());
  });
  SplitRunOutputs out;
  const auto split_path = (dir / "split.csv").string();
  const auto thr_path = (dir / "split_thresholded.csv").string();
  const auto trace_path = (dir / "trace.jsonl").string();
  const auto splitter_path = (dir / "splitter.json").string();
  save_split(result.split, split_path);
  SplitState thresholded = result.split;
  thresholded.assignment = result.split.thresholded();
  save_split(thresholded, thr_path);
  write_trace_jsonl(result.traces, trace_path);
  write_json_file(to_json(result.splitter), splitter_path);
  out.files = {split_path, thr_path, trace_path, splitter_path};
  ctx.log.info("seed " + std::to_string(cfg.seed) + ": best gap " +
               std::to_string(result.best_gap) + " at iteration " +
               std::to_string(result.best_iteration));
  out.result = std::move(result);
  return out;
}

inline void cmd_split(const SplitArgs& a, const Context& ctx) {
  const LsConfig base = resolve_ls_config(a);
  const auto dir = resolve_out(a.out);
  verify_against_manifest(a.data);
  const auto data = load_dataset(a.data);

  if (a.seeds.empty()) {
    auto run = run_split_once(data.dataset, base, dir, ctx);
    Manifest m("split", ctx.argv);
    m.set_config(to_json(base));
    m.set_seed(base.seed);
    m.add_input(a.data);
    if (!a.config.empty()) m.add_input(a.config);
    for (const auto& f : run.files) m.add_output(f);
    m.write(dir);
    return;
  }

  // Seed sweep: one subdirectory per seed plus mean/std of the gap per outer
  // iteration across seeds.
  std::map<std::size_t, std::vector<double>> gaps_by_iter;
  std::vector<double> final_gaps;
  std::vector<double> final_ratios;
  Json per_seed = Json::array();
  for (auto seed : a.seeds) {
    LsConfig cfg = base;
    cfg.seed = seed;
    const auto sub = dir / ("seed_" + std::to_string(seed));
    std::filesystem::create_directories(sub);
    auto run = run_split_once(data.dataset, cfg, sub, ctx);
    Manifest m("split", ctx.argv);
    m.set_config(to_json(cfg));
    m.set_seed(seed);
    m.add_input(a.data);
    if (!a.config.empty()) m.add_input(a.config);
    for (const auto& f : run.files) m.add_output(f);
    m.write(sub);
    for (const auto& t : run.result.traces) gaps_by_iter[t.outer_iter].push_back(t.gap_stats.gap);
    final_gaps.push_back(run.result.best_gap);
    final_ratios.push_back(run.result.split.split_ratio());
    per_seed.push_back({{"seed", seed},
                        {"best_gap", run.result.best_gap},
                        {"best_iteration", run.result.best_iteration},
                        {"split_ratio", run.result.split.split_ratio()},
                        {"outer_iterations", run.result.traces.size()}});
  }
  Json per_iter = Json::array();
  for (const auto& [iter, gaps] : gaps_by_iter) {
    per_iter.push_back({{"outer_iter", iter},
                        {"n_seeds", gaps.size()},
                        {"mean_gap", mean(gaps)},
                        {"std_gap", stddev(gaps)}});
  }
  const auto summary_path = (dir / "summary.json").string();
  write_json_file({{"seeds", a.seeds},
                   {"per_seed", per_seed},
                   {"per_iteration", per_iter},
                   {"final", {{"mean_gap", mean(final_gaps)},
                              {"std_gap", stddev(final_gaps)},
                              {"mean_split_ratio", mean(final_ratios)}}}},
                  summary_path);
  Manifest m("split", ctx.argv);
  m.set_config(to_json(base));
  m.add_input(a.data);
  if (!a.config.empty()) m.add_input(a.config);
  m.add_output(summary_path);
  m.write(dir);
}

// ---------------------------------------------------------------------------
// debias

struct DebiasArgs {
  std::string data;
  std::string split;
  std::string splitter;
  std::string val_data;
  double val_fraction = 0.2;
  std::string eval_data;
  std::string config;
  std::optional<std::uint64_t> seed;
  bool thresholded = false;
  bool wd_grid = false;
  std::string out;
};

inline std::vector<std::uint8_t> materialize(const SplitState& s, bool thresholded) {
  return thresholded ? s.thresholded() : s.assignment;
}

inline void cmd_debias(const DebiasArgs& a, const Context& ctx) {
  DroConfig cfg;
  if (!a.config.empty()) cfg = dro_config_from_json(read_json_file(a.config));
  if (a.seed) cfg.seed = *a.seed;
  cfg.validate();
  if (!a.val_data.empty() && a.splitter.empty()) {
    throw ConfigError("--val-data needs --splitter to split the validation data");
  }
  if (a.val_data.empty() && !(a.val_fraction > 0.0 && a.val_fraction < 1.0)) {
    throw ConfigError("--val-fraction must lie in (0, 1)");
  }
  const auto dir = resolve_out(a.out);

  verify_against_manifest(a.data);
  verify_against_manifest(a.split);
  const auto data = load_dataset(a.data);
  const SplitState split = align_split(data.dataset, load_split(a.split));
  const auto z = materialize(split, a.thresholded);
  const auto keys = assign_groups(data.dataset, split.ids, z);

  Dataset train;
  std::vector<GroupKey> train_keys;
  Dataset val;
  std::vector<GroupKey> val_keys;
  GroundTruth val_truth;
  if (!a.val_data.empty()) {
    verify_against_manifest(a.splitter);
    train = data.dataset;
    train_keys = keys;
    auto v = load_dataset(a.val_data, data.dataset.num_classes);
    const auto splitter = mlp_from_json(read_json_file(a.splitter));
    SplitState vs;
    vs.ids = v.dataset.ids;
    vs.probs = splitter_probabilities(splitter, v.dataset);
    vs.assignment = a.thresholded ? vs.thresholded()
                                  : sample_split(vs.probs, derive_seed(cfg.seed, "validation-split"));
    val_keys = assign_groups(v.dataset, vs.ids, vs.assignment);
    val = std::move(v.dataset);
    val_truth = std::move(v.truth);
  } else {
    Rng rng(derive_seed(cfg.seed, "validation-partition"));
    const auto order = shuffled_indices(data.dataset.size(), rng);
    auto n_val = static_cast<std::size_t>(
        std::llround(a.val_fraction * static_cast<double>(order.size())));
    n_val = std::clamp<std::size_t>(n_val, 1, order.size() - 1);
    std::vector<std::size_t> tr(order.begin(), order.end() - static_cast<std::ptrdiff_t>(n_val));
    std::vector<std::size_t> va(order.end() - static_cast<std::ptrdiff_t>(n_val), order.end());
    std::sort(tr.begin(), tr.end());
    std::sort(va.begin(), va.end());
    train = data.dataset.subset(tr);
    val = data.dataset.subset(va);
    for (auto i : tr) train_keys.push_back(keys[i]);
    for (auto i : va) val_keys.push_back(keys[i]);
    val_truth = data.truth.subset(va);
  }

  // Reporting set: --eval-data when given, otherwise the validation set.
  // Groups come from the ground-truth attribute when the file carries one.
  Dataset eval_set;
  GroundTruth eval_truth;
  std::string eval_name;
  if (!a.eval_data.empty()) {
    verify_against_manifest(a.eval_data);
    auto e = load_dataset(a.eval_data, data.dataset.num_classes);
    eval_set = std::move(e.dataset);
    eval_truth = std::move(e.truth);
    eval_name = a.eval_data;
  } else {
    eval_set = val;
    eval_truth = val_truth;
    eval_name = "validation";
  }
  const bool by_attribute = eval_truth.spurious.has_value();
  const auto eval_keys = by_attribute ? attribute_groups(eval_set, *eval_truth.spurious)
                                      : (a.eval_data.empty() ? val_keys
                                                             : std::vector<GroupKey>{});
  if (eval_keys.empty()) {
    throw ContractError("--eval-data needs a 'spurious' column to define evaluation groups");
  }

  ctx.log.info("training ERM baseline");
  const auto erm = erm_train(train, cfg, val);
  ctx.log.info("training group DRO over " + std::to_string(train.size()) + " examples");
  DroResult dro;
  Json grid = nullptr;
  double chosen_wd = cfg.weight_decay;
  if (a.wd_grid) {
    auto choice = grid_search_weight_decay(train, train_keys, cfg, val, val_keys,
                                           default_weight_decay_grid());
    dro = std::move(choice.result);
    chosen_wd = choice.weight_decay;
    grid = Json::array();
    for (const auto& [wd, s] : choice.scores) {
      grid.push_back({{"weight_decay", wd}, {"validation_worst_group_accuracy", s}});
    }
  } else {
    dro = group_dro_train(train, train_keys, cfg, val, val_keys);
  }
  for (const auto& w : dro.warnings) ctx.log.warn(w);

  const auto erm_eval = evaluate_groups(erm.params, eval_set, eval_keys);
  const auto dro_eval = evaluate_groups(dro.params, eval_set, eval_keys);
  Json weights = Json::object();
  for (std::size_t g = 0; g < dro.train_groups.size(); ++g) {
    weights[dro.train_groups[g].to_string()] = dro.group_weights[g];
  }
  Json metrics{{"erm", group_stats_json(erm_eval)},
               {"group_dro", group_stats_json(dro_eval)},
               {"evaluation", {{"set", eval_name},
                               {"groups", by_attribute ? "label,spurious" : "label,z"}}},
               {"group_dro_validation", group_stats_json(dro.validation)},
               {"erm_validation_accuracy", erm.validation_accuracy},
               {"group_weights", weights},
               {"weight_decay", chosen_wd},
               {"warnings", dro.warnings}};
  if (!grid.is_null()) metrics["weight_decay_grid"] = grid;
  const auto path = (dir / "metrics.json").string();
  write_json_file(metrics, path);

  Manifest m("debias", ctx.argv);
  Json c = to_json(cfg);
  c["thresholded"] = a.thresholded;
  c["val_fraction"] = a.val_data.empty() ? Json(a.val_fraction) : Json(nullptr);
  c["wd_grid"] = a.wd_grid;
  m.set_config(c);
  m.set_seed(cfg.seed);
  for (const auto& in : {a.data, a.split, a.splitter, a.val_data, a.eval_data, a.config}) {
    if (!in.empty()) m.add_input(in);
  }
  m.add_output(path);
  m.write(dir);
  ctx.log.info("worst-group accuracy: ERM " + std::to_string(erm_eval.worst_group_accuracy) +
               ", group DRO " + std::to_string(dro_eval.worst_group_accuracy));
}

// ---------------------------------------------------------------------------
// noise-eval

struct NoiseEvalArgs {
  std::string data;
  std::string split;
  bool thresholded = false;
  std::string out;
};

inline void cmd_noise_eval(const NoiseEvalArgs& a, const Context& ctx) {
  const auto dir = resolve_out(a.out);
  verify_against_manifest(a.data);
  verify_against_manifest(a.split);
  const auto data = load_dataset(a.data);
  if (!data.truth.polluted) {
    throw ContractError("'" + a.data + "' has no 'polluted' column");
  }
  const SplitState split = align_split(data.dataset, load_split(a.split));
  const auto report = noise_report(materialize(split, a.thresholded), *data.truth.polluted);
  if (report.recall_undefined) ctx.log.warn("no polluted labels; recall reported as 1");
  const auto path = (dir / "noise_report.json").string();
  write_json_file(to_json(report), path);
  Manifest m("noise-eval", ctx.argv);
  m.set_config({{"thresholded", a.thresholded}});
  m.add_input(a.data);
  m.add_input(a.split);
  m.add_output(path);
  m.write(dir);
  ctx.log.info("precision " + std::to_string(report.precision) + " (oracle " +
               std::to_string(report.oracle_precision) + "), recall " +
               std::to_string(report.recall) + " (oracle " +
               std::to_string(report.oracle_recall) + ")");
}

// ---------------------------------------------------------------------------
// entry point

// Parses `args` (without the program name) and runs the selected command.
// Returns the process exit code.
inline int run(const std::vector<std::string>& args, std::ostream& out = std::cout,
               std::ostream& err = std::cerr) {
  Context ctx{args, Logger(err)};
  CLI::App app{"lsplit: learn train/test splits that predictors cannot generalize across"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kToolVersion);

  auto* gen = app.add_subcommand("gen", "generate synthetic datasets");
  gen->require_subcommand(1);

  GenSpuriousArgs spurious;
  auto* gs = gen->add_subcommand("spurious", "binary task with a spurious shortcut feature");
  gs->add_option("--n", spurious.spec.n, "number of examples");
  gs->add_option("--rho", spurious.spec.rho, "P(spurious attribute == label)");
  gs->add_option("--d-core", spurious.spec.d_core);
  gs->add_option("--d-spurious", spurious.spec.d_spurious);
  gs->add_option("--d-noise", spurious.spec.d_noise);
  gs->add_option("--core-noise-std", spurious.spec.core_noise_std);
  gs->add_option("--spurious-noise-std", spurious.spec.spurious_noise_std);
  gs->add_option("--seed", spurious.spec.seed);
  gs->add_option("--out", spurious.out, "output directory");

  GenBlobsArgs blobs;
  auto* gb = gen->add_subcommand("blobs", "Gaussian class blobs");
  gb->add_option("--n", blobs.spec.n);
  gb->add_option("--classes", blobs.spec.num_classes);
  gb->add_option("--dim", blobs.spec.dim);
  gb->add_option("--separation", blobs.spec.separation);
  gb->add_option("--noise-std", blobs.spec.noise_std);
  gb->add_option("--seed", blobs.spec.seed);
  gb->add_option("--out", blobs.out, "output directory");

  GenNoiseArgs noise;
  auto* gn = gen->add_subcommand("noise", "inject symmetric label noise into a dataset");
  gn->add_option("--data", noise.data, "input dataset CSV")->required();
  gn->add_option("--eta", noise.eta, "noise rate in [0, 1)");
  gn->add_option("--classes", noise.classes, "number of classes");
  gn->add_option("--seed", noise.seed);
  gn->add_option("--out", noise.out, "output directory");

  SplitArgs split;
  auto* sp = app.add_subcommand("split", "learn a non-generalizable train/test split");
  sp->add_option("--data", split.data, "dataset CSV")->required();
  sp->add_option("--config", split.config, "JSON overrides for the splitting config");
  auto* seed_opt = sp->add_option("--seed", split.seed, "random seed");
  sp->add_option("--seeds", split.seeds, "comma-separated seed sweep")
      ->delimiter(',')
      ->excludes(seed_opt);
  sp->add_option("--out", split.out, "output directory");

  DebiasArgs debias;
  auto* db = app.add_subcommand("debias", "group DRO over groups defined by a learned split");
  db->add_option("--data", debias.data, "training dataset CSV")->required();
  db->add_option("--split", debias.split, "split.csv from `lsplit split`")->required();
  db->add_option("--splitter", debias.splitter, "splitter.json, needed with --val-data");
  auto* val_data = db->add_option("--val-data", debias.val_data, "validation dataset CSV");
  db->add_option("--val-fraction", debias.val_fraction,
                 "fraction of --data held out for validation when --val-data is absent")
      ->excludes(val_data);
  db->add_option("--eval-data", debias.eval_data, "evaluation dataset CSV");
  db->add_option("--config", debias.config, "JSON overrides for the group DRO config");
  db->add_option("--seed", debias.seed);
  db->add_flag("--thresholded", debias.thresholded, "use z = 1[prob >= 0.5] instead of z");
  db->add_flag("--wd-grid", debias.wd_grid, "grid-search weight decay over {1,0.1,0.01,0.001,0}");
  db->add_option("--out", debias.out, "output directory");

  NoiseEvalArgs neval;
  auto* ne = app.add_subcommand("noise-eval", "score a split as a label-noise detector");
  ne->add_option("--data", neval.data, "dataset CSV with a 'polluted' column")->required();
  ne->add_option("--split", neval.split, "split.csv")->required();
  ne->add_flag("--thresholded", neval.thresholded, "use z = 1[prob >= 0.5] instead of z");
  ne->add_option("--out", neval.out, "output directory");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
    if (gs->parsed()) cmd_gen_spurious(spurious, ctx);
    if (gb->parsed()) cmd_gen_blobs(blobs, ctx);
    if (gn->parsed()) cmd_gen_noise(noise, ctx);
    if (sp->parsed()) cmd_split(split, ctx);
    if (db->parsed()) cmd_debias(debias, ctx);
    if (ne->parsed()) cmd_noise_eval(neval, ctx);
    return 0;
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForVersion&) {
    out << kToolVersion << '\n';
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "usage error: " << e.what() << '\n';
    return 2;
  } catch (const Error& e) {
    ctx.log.error(e.what());
    return exit_code(e.kind());
  } catch (const std::filesystem::filesystem_error& e) {
    ctx.log.error(e.what());
    return 3;
  }
}

}  // namespace lsplit::cli
