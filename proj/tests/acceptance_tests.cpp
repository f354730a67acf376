// End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
// exits nonzero if any criterion fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "lsplit/datagen.hpp"
#include "lsplit/debias.hpp"
#include "lsplit/ls_engine.hpp"
#include "lsplit/metrics.hpp"
#include "lsplit/nn.hpp"

using namespace lsplit;

namespace {

struct Outcome {
  bool pass = true;
  std::ostringstream detail;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail << " [failed: " << what << "]";
    }
  }
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

// ---------------------------------------------------------------------------

Outcome gradient_suite() {
  Outcome o;
  const auto t0 = Clock::now();
  Rng rng(20240611);
  std::uniform_int_distribution<std::size_t> in_dim(1, 5), hid_dim(1, 8), out_dim(2, 3);
  std::uniform_int_distribution<int> depth(0, 1);
  std::normal_distribution<double> normal(0.0, 1.0);
  const double h = 1e-5;
  double worst = 0.0;
  std::size_t checked = 0;
  for (int net = 0; net < 100; ++net) {
    std::vector<std::size_t> dims{in_dim(rng)};
    if (depth(rng)) dims.push_back(hid_dim(rng));
    dims.push_back(out_dim(rng));
    auto p = init_params(dims, static_cast<std::uint64_t>(net));
    for (auto& l : p.layers) {
      for (auto& b : l.bias) b = 0.1 * normal(rng);
    }
    std::vector<double> x(dims[0]);
    for (auto& v : x) v = normal(rng);
    const std::size_t y = static_cast<std::size_t>(net) % dims.back();
    Rng fwd_rng(0);
    const auto f = forward(p, x, Mode::kTrain, {0.0}, fwd_rng);
    const auto g = backward(p, f.cache, softmax_cross_entropy(f.logits, y).dlogits);
    auto loss = [&] { return softmax_cross_entropy(predict_logits(p, x), y).loss; };
    for (std::size_t k = 0; k < p.layers.size(); ++k) {
      auto check = [&](std::vector<double>& vals, const std::vector<double>& grads) {
        for (std::size_t i = 0; i < vals.size(); ++i) {
          const double orig = vals[i];
          vals[i] = orig + h;
          const double up = loss();
          vals[i] = orig - h;
          const double down = loss();
          vals[i] = orig;
          const double numeric = (up - down) / (2 * h);
          const double denom = std::max({std::abs(numeric), std::abs(grads[i]), 1e-8});
          worst = std::max(worst, std::abs(numeric - grads[i]) / denom);
          ++checked;
        }
      };
      check(p.layers[k].weight.data, g.layers[k].weight.data);
      check(p.layers[k].bias, g.layers[k].bias);
    }
  }
  const double secs = seconds_since(t0);
  o.detail << "100 nets, " << checked << " partials, max relative error " << worst << ", "
           << secs << " s";
  o.require(worst <= 1e-4, "relative error <= 1e-4");
  o.require(secs < 10.0, "runtime < 10 s");
  return o;
}

// ---------------------------------------------------------------------------

Outcome closed_forms() {
  Outcome o;
  const double kb = kl_bernoulli(0.5, 0.75);
  const double kc = kl_categorical(std::vector<double>{0.6, 0.4}, std::vector<double>{0.5, 0.5});
  const auto m = conditional_label_marginals(std::vector<double>{0.8, 0.8, 0.2, 0.2},
                                             std::vector<std::size_t>{1, 1, 0, 0}, 2);
  const auto a = oracle_precision_recall(6000, 15000);
  const auto b = oracle_precision_recall(20000, 15000);
  // independent evaluations of the same closed forms
  const double kb_ref = 0.5 * std::log(0.5 / 0.75) + 0.5 * std::log(0.5 / 0.25);
  const double kc_ref = 0.6 * std::log(0.6 / 0.5) + 0.4 * std::log(0.4 / 0.5);
  o.detail << "kl_bernoulli " << kb << ", kl_categorical " << kc << ", P(y=1|z=1) "
           << m.given_train[1] << ", oracle (" << a.precision << "," << a.recall << ") ("
           << b.precision << "," << b.recall << ")";
  o.require(std::abs(kb - 0.143841) <= 1e-6 && std::abs(kb - kb_ref) <= 1e-12, "kl_bernoulli");
  o.require(std::abs(kc - 0.020135) <= 1e-6 && std::abs(kc - kc_ref) <= 1e-7, "kl_categorical");
  o.require(m.given_train[1] == 0.8, "P(y=1|z=1) == 0.8");
  o.require(a.precision == 0.4 && a.recall == 1.0, "oracle(6000,15000)");
  o.require(b.precision == 1.0 && b.recall == 0.75, "oracle(20000,15000)");
  return o;
}

// ---------------------------------------------------------------------------

struct SpuriousRun {
  double gap = 0;
  double ratio = 0;
  double tv = 0;
  double minority_in_test = 0;
  double random_gap = 0;
  double secs = 0;
  std::size_t iterations = 0;
};

std::vector<SpuriousRun> spurious_runs() {
  std::vector<SpuriousRun> runs;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto t0 = Clock::now();
    SpuriousSpec spec;
    spec.n = 2000;
    spec.rho = 0.9;
    spec.seed = seed;
    const auto data = gen_spurious(spec);
    const auto& ds = data.dataset;
    LsConfig cfg;
    cfg.seed = seed;
    const auto res = run_ls(ds, cfg);
    SpuriousRun r;
    r.secs = seconds_since(t0);
    r.gap = res.best_gap;
    r.ratio = res.split.split_ratio();
    r.iterations = res.traces.size();
    const auto& z = res.split.assignment;
    const std::vector<double> hard(z.begin(), z.end());
    const auto m = conditional_label_marginals(hard, ds.labels, ds.num_classes);
    r.tv = total_variation(m.given_train, m.given_test);
    std::size_t minority = 0, in_test = 0;
    for (std::size_t i = 0; i < ds.size(); ++i) {
      if (data.truth.is_minority(i, ds.labels[i])) {
        ++minority;
        in_test += z[i] == 0 ? 1 : 0;
      }
    }
    r.minority_in_test = static_cast<double>(in_test) / static_cast<double>(minority);
    r.random_gap = random_split_gap(ds, cfg, derive_seed(seed, "random-baseline")).gap;
    runs.push_back(r);
  }
  return runs;
}

template <typename F>
double average(const std::vector<SpuriousRun>& runs, F f) {
  double s = 0;
  for (const auto& r : runs) s += f(r);
  return s / static_cast<double>(runs.size());
}

Outcome non_generalizable_split(const std::vector<SpuriousRun>& runs) {
  Outcome o;
  const double gap = average(runs, [](const auto& r) { return r.gap; });
  const double rnd = average(runs, [](const auto& r) { return r.random_gap; });
  const double ratio = average(runs, [](const auto& r) { return r.ratio; });
  const double tv = average(runs, [](const auto& r) { return r.tv; });
  double max_secs = 0, max_tv = 0;
  for (const auto& r : runs) {
    max_secs = std::max(max_secs, r.secs);
    max_tv = std::max(max_tv, r.tv);
  }
  o.detail << "mean gap " << gap << ", random-split gap " << rnd << ", mean ratio " << ratio
           << ", mean TV " << tv << " (max " << max_tv << "), slowest seed " << max_secs
           << " s; per seed:";
  for (const auto& r : runs) {
    o.detail << " (gap " << r.gap << " ratio " << r.ratio << " iters " << r.iterations << ")";
  }
  o.require(gap >= 0.30, "mean gap >= 0.30");
  o.require(rnd <= 0.05, "random-split gap <= 0.05");
  o.require(ratio >= 0.65 && ratio <= 0.85, "split ratio in [0.65, 0.85]");
  o.require(tv <= 0.10, "TV <= 0.10");
  o.require(max_secs <= 300.0, "<= 5 min per seed");
  return o;
}

Outcome bias_alignment(const std::vector<SpuriousRun>& runs) {
  Outcome o;
  const double frac = average(runs, [](const auto& r) { return r.minority_in_test; });
  o.detail << "mean fraction of minority examples in test split " << frac << "; per seed:";
  for (const auto& r : runs) o.detail << " " << r.minority_in_test;
  o.require(frac >= 0.70, ">= 0.70");
  return o;
}

// ---------------------------------------------------------------------------

Outcome noise_detection() {
  Outcome o;
  BlobSpec bs;
  bs.n = 5000;
  bs.num_classes = 10;
  bs.dim = 10;
  bs.seed = 1;
  const auto clean = gen_blobs(bs);
  for (double eta : {0.1, 0.3, 0.7}) {
    const auto noisy = inject_label_noise(clean.dataset, eta, 10, 2);
    LsConfig cfg;
    cfg.seed = 3;
    const auto res = run_ls(noisy.dataset, cfg);
    const auto r = noise_report(res.split.assignment, noisy.polluted);
    o.detail << " eta " << eta << ": ratio " << res.split.split_ratio() << " precision "
             << r.precision << " (oracle " << r.oracle_precision << ") recall " << r.recall
             << " (oracle " << r.oracle_recall << ");";
    if (eta < 0.5) {
      o.require(r.recall >= 0.90, "recall >= 0.90 at eta " + std::to_string(eta));
      o.require(std::abs(r.oracle_precision - r.precision) <= 0.10,
                "precision within 0.10 of oracle at eta " + std::to_string(eta));
    } else {
      o.require(r.precision >= 0.90, "precision >= 0.90 at eta 0.7");
    }
  }
  return o;
}

// ---------------------------------------------------------------------------

Outcome debiasing() {
  Outcome o;
  double erm_sum = 0, dro_sum = 0;
  const int seeds = 3;
  for (int s = 0; s < seeds; ++s) {
    const auto seed = static_cast<std::uint64_t>(s);
    SpuriousSpec spec;
    spec.rho = 0.9;
    spec.seed = derive_seed(seed, "train");
    const auto train = gen_spurious(spec);
    spec.n = 1000;
    spec.seed = derive_seed(seed, "val");
    const auto val = gen_spurious(spec);
    spec.n = 2000;
    spec.seed = derive_seed(seed, "eval");
    const auto eval = gen_spurious_balanced(spec);

    LsConfig cfg;
    cfg.seed = seed;
    const auto ls = run_ls(train.dataset, cfg);
    const auto train_keys = assign_groups(train.dataset, ls.split);
    const auto val_probs = splitter_probabilities(ls.splitter, val.dataset, cfg.prob_epsilon);
    const auto val_z = sample_split(val_probs, derive_seed(seed, "val-split"));
    const auto val_keys = assign_groups(val.dataset, val.dataset.ids, val_z);

    DroConfig dc;
    dc.seed = seed;
    const auto erm = erm_train(train.dataset, dc, val.dataset);
    const auto dro = group_dro_train(train.dataset, train_keys, dc, val.dataset, val_keys);
    const auto eval_keys = attribute_groups(eval.dataset, *eval.truth.spurious);
    const double e = evaluate_groups(erm.params, eval.dataset, eval_keys).worst_group_accuracy;
    const double d = evaluate_groups(dro.params, eval.dataset, eval_keys).worst_group_accuracy;
    erm_sum += e;
    dro_sum += d;
    o.detail << " seed " << s << ": ERM " << e << " group DRO " << d << ";";
  }
  const double diff = (dro_sum - erm_sum) / seeds;
  o.detail << " mean worst-group ERM " << erm_sum / seeds << ", group DRO " << dro_sum / seeds
           << ", improvement " << diff;
  o.require(diff >= 0.10, "improvement >= 0.10");
  return o;
}

// ---------------------------------------------------------------------------

Outcome degenerate_cases() {
  Outcome o;

  // Pure noise: labels independent of the features.
  BlobSpec bs;
  bs.n = 500;
  bs.num_classes = 2;
  bs.dim = 4;
  bs.separation = 0.0;
  bs.seed = 0;
  const auto noise = gen_blobs(bs).dataset;
  LsConfig cfg;
  cfg.seed = 0;
  const auto res = run_ls(noise, cfg);
  double rnd = 0;
  for (std::uint64_t s = 0; s < 5; ++s) rnd += random_split_gap(noise, cfg, s).gap / 5.0;
  o.detail << "pure-noise gap " << res.best_gap << " (random-split mean " << rnd << ")";
  o.require(res.best_gap < 0.15, "pure-noise gap < 0.15");

  const double w1 = omega1(std::vector<double>{0.9, 0.6, 0.75, 0.75}, 0.75);
  const std::vector<std::size_t> labels{0, 1, 2, 1, 0, 2};
  const double w2 = omega2(std::vector<double>(6, 0.3), labels, 3);
  o.detail << ", omega1 " << w1 << ", omega2 " << w2;
  o.require(std::abs(w1) <= 1e-9, "omega1 == 0 at mean 0.75");
  o.require(w2 <= 1e-6, "omega2 <= 1e-6 for constant probs");

  SpuriousSpec spec;
  spec.n = 400;
  spec.seed = 7;
  const auto data = gen_spurious(spec);
  spec.seed = 8;
  const auto val = gen_spurious(spec);
  DroConfig dc;
  dc.seed = 5;
  dc.max_epochs = 30;
  const std::vector<GroupKey> one(data.dataset.size(), GroupKey{0, 0});
  const std::vector<GroupKey> val_one(val.dataset.size(), GroupKey{0, 0});
  const auto dro = group_dro_train(data.dataset, one, dc, val.dataset, val_one);
  const auto erm = erm_train(data.dataset, dc, val.dataset);
  o.require(dro.params == erm.params, "single-group DRO == ERM bitwise");

  // Re-run equality.
  bool same = gen_spurious(spec).dataset == gen_spurious(spec).dataset;
  same = same && init_params({6, 10, 2}, 3) == init_params({6, 10, 2}, 3);
  const std::vector<double> probs(300, 0.6);
  same = same && sample_split(probs, 4) == sample_split(probs, 4);
  LsConfig small = cfg;
  small.seed = 11;
  small.max_outer_iters = 3;
  const auto a = run_ls(data.dataset, small);
  const auto b = run_ls(data.dataset, small);
  same = same && a.split == b.split && a.splitter == b.splitter &&
         a.traces.size() == b.traces.size();
  for (std::size_t k = 0; same && k < a.traces.size(); ++k) {
    same = a.traces[k].gap_stats == b.traces[k].gap_stats &&
           a.traces[k].total_loss == b.traces[k].total_loss;
  }
  const auto d2 = group_dro_train(data.dataset, one, dc, val.dataset, val_one);
  same = same && d2.params == dro.params;
  o.require(same, "determinism re-run equality");
  o.detail << ", single-group DRO==ERM " << (dro.params == erm.params ? "yes" : "no")
           << ", re-runs identical " << (same ? "yes" : "no");
  return o;
}

void report(int n, const std::string& name, const std::function<Outcome()>& f, bool& all) {
  const auto t0 = Clock::now();
  Outcome o = f();
  all = all && o.pass;
  std::printf("%s criterion %d (%s): %s [%.1f s]\n", o.pass ? "PASS" : "FAIL", n, name.c_str(),
              o.detail.str().c_str(), seconds_since(t0));
  std::fflush(stdout);
}

}  // namespace

int main() {
  bool all = true;
  report(1, "gradient suite", gradient_suite, all);
  report(2, "closed-form oracles", closed_forms, all);
  std::vector<SpuriousRun> runs;
  report(3, "non-generalizable split", [&] {
    runs = spurious_runs();
    return non_generalizable_split(runs);
  }, all);
  report(4, "bias alignment", [&] { return bias_alignment(runs); }, all);
  report(5, "label-noise detection", noise_detection, all);
  report(6, "de-biasing", debiasing, all);
  report(7, "degenerate cases", degenerate_cases, all);
  return all ? 0 : 1;
}
