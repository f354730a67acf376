#pragma once

// Learning to split: a Splitter network assigns every (features, label) pair a
// probability of landing on the training side; a freshly initialized
// Predictor is trained on a sampled split; the Predictor's correctness on the
// test side supervises the Splitter, regularized toward a delta-sized training
// side and label marginals that match across sides. The outer loop keeps the
// split with the largest train/test accuracy gap.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "lsplit/dataset.hpp"
#include "lsplit/errors.hpp"
#include "lsplit/metrics.hpp"
#include "lsplit/nn.hpp"
#include "lsplit/rng.hpp"
#include "lsplit/train.hpp"

namespace lsplit {

// Index of the splitter logit meaning "training side" (z = 1).
inline constexpr std::size_t kTrainSide = 1;

struct LsConfig {
  double delta = 0.75;
  double splitter_lr = 3e-4;
  double predictor_lr = 1e-3;
  std::size_t batch_size = 200;
  std::size_t predictor_patience = 5;
  std::size_t predictor_max_epochs = 200;
  double inner_stop_tol = 1e-3;
  std::size_t inner_window = 5;
  std::size_t inner_max_epochs = 100;
  std::size_t outer_patience = 5;
  std::size_t max_outer_iters = 50;
  double heldout_fraction = 1.0 / 3.0;
  double prob_epsilon = 1e-8;
  std::uint64_t seed = 0;
  std::vector<std::size_t> splitter_hidden = {100};
  std::vector<std::size_t> predictor_hidden = {100};
  double dropout = 0.1;
  // Weights of the three splitter objective terms.
  double gap_weight = 1.0;
  double omega1_weight = 1.0;
  double omega2_weight = 1.0;

  void validate() const {
    if (!(delta > 0.0 && delta < 1.0)) throw ConfigError("delta must lie in (0, 1)");
    if (!(splitter_lr > 0.0) || !(predictor_lr > 0.0)) {
      throw ConfigError("learning rates must be > 0");
    }
    if (batch_size == 0) throw ConfigError("batch_size must be >= 1");
    if (predictor_patience == 0 || outer_patience == 0) {
      throw ConfigError("patience values must be >= 1");
    }
    if (inner_window == 0) throw ConfigError("inner_window must be >= 1");
    if (!(inner_stop_tol >= 0.0)) throw ConfigError("inner_stop_tol must be >= 0");
    if (max_outer_iters == 0) throw ConfigError("max_outer_iters must be >= 1");
    if (!(heldout_fraction > 0.0 && heldout_fraction < 1.0)) {
      throw ConfigError("heldout_fraction must lie in (0, 1)");
    }
    if (!(prob_epsilon > 0.0 && prob_epsilon < 0.5)) {
      throw ConfigError("prob_epsilon must lie in (0, 0.5)");
    }
    if (!(gap_weight >= 0.0 && omega1_weight >= 0.0 && omega2_weight >= 0.0)) {
      throw ConfigError("objective weights must be >= 0");
    }
    for (auto h : splitter_hidden) {
      if (h == 0) throw ConfigError("splitter hidden sizes must be >= 1");
    }
    for (auto h : predictor_hidden) {
      if (h == 0) throw ConfigError("predictor hidden sizes must be >= 1");
    }
    DropoutSpec{dropout}.validate();
  }

  std::vector<std::size_t> splitter_dims(std::size_t d, std::size_t num_classes) const {
    std::vector<std::size_t> dims{d + num_classes};
    dims.insert(dims.end(), splitter_hidden.begin(), splitter_hidden.end());
    dims.push_back(2);
    return dims;
  }

  FitConfig predictor_fit_config() const {
    FitConfig f;
    f.hidden = predictor_hidden;
    f.dropout = dropout;
    f.lr = predictor_lr;
    f.batch_size = batch_size;
    f.patience = predictor_patience;
    f.max_epochs = predictor_max_epochs;
    return f;
  }
};

struct SplitState {
  std::vector<std::int64_t> ids;         // dataset ids, row-aligned
  std::vector<double> probs;             // P(z_i = 1 | x_i, y_i), clamped
  std::vector<std::uint8_t> assignment;  // 1 = train, 0 = test
  std::uint64_t seed = 0;

  // z_i = 1 iff probs_i >= 0.5; reproducible without the sampling seed.
  std::vector<std::uint8_t> thresholded() const {
    std::vector<std::uint8_t> z(probs.size());
    for (std::size_t i = 0; i < probs.size(); ++i) z[i] = probs[i] >= 0.5 ? 1 : 0;
    return z;
  }

  double split_ratio() const {
    if (assignment.empty()) return 0.0;
    std::size_t n1 = 0;
    for (auto z : assignment) n1 += z;
    return static_cast<double>(n1) / static_cast<double>(assignment.size());
  }

  bool operator==(const SplitState&) const = default;
};

struct GapStats {
  double train_accuracy = 0.0;
  double test_accuracy = 0.0;
  double gap = 0.0;
  std::vector<std::size_t> test_indices;  // dataset rows with z = 0, ascending
  std::vector<std::uint8_t> correctness;  // aligned with test_indices

  bool operator==(const GapStats&) const = default;
};

struct IterationTrace {
  std::size_t outer_iter = 0;
  GapStats gap_stats;
  double heldout_accuracy = 0.0;
  double omega1 = 0.0;
  double omega2 = 0.0;
  double gap_loss = 0.0;
  double total_loss = 0.0;
  double split_ratio = 0.0;
  LabelMarginals label_marginals;
  std::size_t inner_epochs = 0;
};

// ---------------------------------------------------------------------------
// Splitter

// Features followed by the one-hot label.
inline void splitter_input(std::span<const double> features, std::size_t label,
                           std::size_t num_classes, std::span<double> out) {
  if (label >= num_classes || out.size() != features.size() + num_classes) {
    throw ContractError("splitter input: label or buffer size out of range");
  }
  std::copy(features.begin(), features.end(), out.begin());
  std::fill(out.begin() + static_cast<std::ptrdiff_t>(features.size()), out.end(), 0.0);
  out[features.size() + label] = 1.0;
}

inline Matrix splitter_inputs(const Dataset& ds) {
  Matrix m(ds.size(), ds.dim() + ds.num_classes);
  for (std::size_t i = 0; i < ds.size(); ++i) {
    splitter_input(ds.row(i), ds.labels[i], ds.num_classes,
                   {m.data.data() + i * m.cols, m.cols});
  }
  return m;
}

inline double clamp_prob(double p, double eps) { return std::clamp(p, eps, 1.0 - eps); }

// P(z = 1) from a pair of splitter logits.
inline double train_side_prob(std::span<const double> logits, double eps) {
  const double diff = logits[kTrainSide] - logits[1 - kTrainSide];
  return clamp_prob(1.0 / (1.0 + std::exp(-diff)), eps);
}

inline std::vector<double> splitter_probabilities(const MlpParams& splitter,
                                                  const Dataset& ds, double eps = 1e-8) {
  if (splitter.in_dim() != ds.dim() + ds.num_classes) {
    throw ShapeError("splitter input dimension " + std::to_string(splitter.in_dim()) +
                     " != features + classes " + std::to_string(ds.dim() + ds.num_classes));
  }
  if (splitter.out_dim() != 2) throw ShapeError("splitter must have two output logits");
  std::vector<double> in(ds.dim() + ds.num_classes);
  std::vector<double> probs(ds.size());
  for (std::size_t i = 0; i < ds.size(); ++i) {
    splitter_input(ds.row(i), ds.labels[i], ds.num_classes, in);
    probs[i] = train_side_prob(predict_logits(splitter, in), eps);
  }
  return probs;
}

// Random hidden layers with a zero output layer whose bias makes every
// probability equal to delta, i.e. a uniformly random delta-sized split.
inline MlpParams init_splitter(const LsConfig& cfg, std::size_t d, std::size_t num_classes,
                               std::uint64_t seed) {
  MlpParams s = init_params(cfg.splitter_dims(d, num_classes), seed);
  Layer& out = s.layers.back();
  std::fill(out.weight.data.begin(), out.weight.data.end(), 0.0);
  out.bias[1 - kTrainSide] = 0.0;
  out.bias[kTrainSide] = std::log(cfg.delta / (1.0 - cfg.delta));
  return s;
}

inline void check_probs(std::span<const double> probs) {
  for (std::size_t i = 0; i < probs.size(); ++i) {
    if (!(probs[i] > 0.0 && probs[i] < 1.0)) {
      throw ContractError("split probability " + std::to_string(i) +
                          " is outside (0, 1)");
    }
  }
}

inline constexpr std::size_t kMaxSplitResamples = 10;

// z_i ~ Bernoulli(probs_i). An assignment with an empty side is redrawn up to
// kMaxSplitResamples times.
inline std::vector<std::uint8_t> sample_split(std::span<const double> probs,
                                              std::uint64_t seed) {
  if (probs.empty()) throw ContractError("sample_split: no probabilities");
  check_probs(probs);
  std::vector<std::uint8_t> z(probs.size());
  for (std::size_t attempt = 0; attempt <= kMaxSplitResamples; ++attempt) {
    Rng rng(attempt == 0 ? seed : derive_seed(seed, "resample", attempt));
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::size_t n1 = 0;
    for (std::size_t i = 0; i < probs.size(); ++i) {
      z[i] = u(rng) < probs[i] ? 1 : 0;
      n1 += z[i];
    }
    if (n1 > 0 && n1 < probs.size()) return z;
  }
  throw DegenerateSplitError("sampled split has an empty side after " +
                             std::to_string(kMaxSplitResamples) + " resamples");
}

// log P(z | D) under independent per-example Bernoulli decisions.
inline double assignment_log_prob(std::span<const double> probs,
                                  std::span<const std::uint8_t> assignment) {
  if (probs.size() != assignment.size()) {
    throw ContractError("assignment_log_prob: length mismatch");
  }
  double lp = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    lp += assignment[i] ? std::log(probs[i]) : std::log(1.0 - probs[i]);
  }
  return lp;
}

// ---------------------------------------------------------------------------
// Predictor

struct PredictorResult {
  MlpParams params;
  double heldout_accuracy = 0.0;
  std::size_t epochs = 0;
};

inline std::uint64_t predictor_init_seed(std::uint64_t seed) {
  return derive_seed(seed, "predictor-init");
}

// Trains a freshly initialized predictor on the z = 1 side. A random
// heldout_fraction of that side is held out for early stopping on accuracy.
inline PredictorResult train_predictor(const Dataset& ds,
                                       std::span<const std::uint8_t> assignment,
                                       const LsConfig& cfg, std::uint64_t seed) {
  if (assignment.size() != ds.size()) {
    throw ContractError("assignment does not cover the dataset");
  }
  std::vector<std::size_t> train_idx;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    if (assignment[i]) train_idx.push_back(i);
  }
  if (train_idx.size() < 3) {
    throw TrainingInfeasibleError("training split has " + std::to_string(train_idx.size()) +
                                  " examples; at least 3 are needed");
  }
  std::vector<std::size_t> counts(ds.num_classes, 0);
  std::size_t present = 0;
  for (auto i : train_idx) present += counts[ds.labels[i]]++ == 0 ? 1 : 0;
  if (present < 2) throw TrainingInfeasibleError("training split contains a single class");

  Rng rng(derive_seed(seed, "heldout"));
  shuffle_in_place(train_idx, rng);
  auto n_hold = static_cast<std::size_t>(
      std::llround(cfg.heldout_fraction * static_cast<double>(train_idx.size())));
  n_hold = std::clamp<std::size_t>(n_hold, 1, train_idx.size() - 1);
  const std::span<const std::size_t> all(train_idx);
  const Dataset fit = ds.subset(all.first(train_idx.size() - n_hold));
  const Dataset held = ds.subset(all.last(n_hold));

  const std::vector<std::size_t> one_group(fit.size(), 0);
  auto res = fit_classifier(
      fit, one_group, 1, cfg.predictor_fit_config(),
      [&](const MlpParams& p) { return accuracy(p, held); }, predictor_init_seed(seed),
      derive_seed(seed, "predictor-run"));
  return {std::move(res.params), res.best_score, res.epochs_run};
}

inline GapStats evaluate_gap(const MlpParams& predictor, const Dataset& ds,
                             std::span<const std::uint8_t> assignment) {
  if (assignment.size() != ds.size()) {
    throw ContractError("assignment does not cover the dataset");
  }
  GapStats g;
  std::size_t n_train = 0;
  std::size_t train_correct = 0;
  std::size_t test_correct = 0;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const bool ok = argmax(predict_logits(predictor, ds.row(i))) == ds.labels[i];
    if (assignment[i]) {
      n_train += 1;
      train_correct += ok ? 1 : 0;
    } else {
      g.test_indices.push_back(i);
      g.correctness.push_back(ok ? 1 : 0);
      test_correct += ok ? 1 : 0;
    }
  }
  if (n_train == 0 || g.test_indices.empty()) {
    throw DegenerateSplitError("evaluate_gap: one side of the split is empty");
  }
  g.train_accuracy = static_cast<double>(train_correct) / static_cast<double>(n_train);
  g.test_accuracy =
      static_cast<double>(test_correct) / static_cast<double>(g.test_indices.size());
  g.gap = g.train_accuracy - g.test_accuracy;
  return g;
}

// ---------------------------------------------------------------------------
// Splitter objective

// Mean binary cross-entropy between P(z_i = 1) and the predictor's
// correctness c_i on test examples: correct ones are pulled to the train side.
inline double gap_loss(std::span<const double> test_probs,
                       std::span<const std::uint8_t> correctness) {
  if (test_probs.size() != correctness.size()) {
    throw ContractError("gap_loss: probs and correctness differ in length");
  }
  if (test_probs.empty()) throw ContractError("gap_loss: empty test split");
  check_probs(test_probs);
  double s = 0.0;
  for (std::size_t i = 0; i < test_probs.size(); ++i) {
    s -= correctness[i] ? std::log(test_probs[i]) : std::log(1.0 - test_probs[i]);
  }
  return s / static_cast<double>(test_probs.size());
}

// KL(Bernoulli(mean p) || Bernoulli(delta)).
inline double omega1(std::span<const double> probs, double delta) {
  if (probs.empty()) throw ContractError("omega1: empty probabilities");
  double q = 0.0;
  for (double p : probs) q += p;
  q /= static_cast<double>(probs.size());
  return kl_bernoulli(q, delta);
}

inline double omega2(std::span<const double> probs, std::span<const std::size_t> labels,
                     std::size_t num_classes, double eps = 1e-8) {
  const auto m = conditional_label_marginals(probs, labels, num_classes);
  return kl_categorical(m.given_train, m.overall, eps) +
         kl_categorical(m.given_test, m.overall, eps);
}

struct SplitterTerms {
  double gap_loss = 0.0;
  double omega1 = 0.0;
  double omega2 = 0.0;
  double total = 0.0;
};

// Evaluates gap_weight * L_gap(test batch) + omega1_weight * Omega1(total
// batch) + omega2_weight * Omega2(total batch), with the label marginals
// estimated on the total batch. When the gradient outputs are non-null they
// receive dL/dp for every element of the corresponding batch.
inline SplitterTerms splitter_objective(std::span<const double> total_probs,
                                        std::span<const std::size_t> total_labels,
                                        std::size_t num_classes,
                                        std::span<const double> test_probs,
                                        std::span<const std::uint8_t> correctness,
                                        const LsConfig& cfg,
                                        std::vector<double>* d_total = nullptr,
                                        std::vector<double>* d_test = nullptr) {
  SplitterTerms t;
  const double eps = cfg.prob_epsilon;
  if (d_total) d_total->assign(total_probs.size(), 0.0);
  if (d_test) d_test->assign(test_probs.size(), 0.0);

  if (!test_probs.empty()) {
    t.gap_loss = gap_loss(test_probs, correctness);
    if (d_test) {
      const double m = static_cast<double>(test_probs.size());
      for (std::size_t i = 0; i < test_probs.size(); ++i) {
        const double p = test_probs[i];
        (*d_test)[i] = cfg.gap_weight *
                       (correctness[i] ? -1.0 / p : 1.0 / (1.0 - p)) / m;
      }
    }
  }

  const double m = static_cast<double>(total_probs.size());
  double q = 0.0;
  for (double p : total_probs) q += p;
  q /= m;
  t.omega1 = kl_bernoulli(q, cfg.delta);
  const double d_omega1 =
      (std::log(q / cfg.delta) - std::log((1.0 - q) / (1.0 - cfg.delta))) / m;

  const auto marg = conditional_label_marginals(total_probs, total_labels, num_classes);
  const auto b = smooth_distribution(marg.overall, eps);
  const auto a1 = smooth_distribution(marg.given_train, eps);
  const auto a0 = smooth_distribution(marg.given_test, eps);
  std::vector<double> g1(num_classes);
  std::vector<double> g0(num_classes);
  double kl1 = 0.0;
  double kl0 = 0.0;
  double mean_g1 = 0.0;
  double mean_g0 = 0.0;
  for (std::size_t k = 0; k < num_classes; ++k) {
    g1[k] = std::log(a1[k] / b[k]);
    g0[k] = std::log(a0[k] / b[k]);
    kl1 += a1[k] * g1[k];
    kl0 += a0[k] * g0[k];
    mean_g1 += marg.given_train[k] * g1[k];
    mean_g0 += marg.given_test[k] * g0[k];
  }
  t.omega2 = std::max(kl1, 0.0) + std::max(kl0, 0.0);

  if (d_total) {
    double mass1 = 0.0;
    for (double p : total_probs) mass1 += p;
    const double mass0 = m - mass1;
    const double smooth_scale = 1.0 / (1.0 + static_cast<double>(num_classes) * eps);
    for (std::size_t i = 0; i < total_probs.size(); ++i) {
      const std::size_t y = total_labels[i];
      const double d2 = smooth_scale * ((g1[y] - mean_g1) / mass1 - (g0[y] - mean_g0) / mass0);
      (*d_total)[i] = cfg.omega1_weight * d_omega1 + cfg.omega2_weight * d2;
    }
  }

  t.total = cfg.gap_weight * t.gap_loss + cfg.omega1_weight * t.omega1 +
            cfg.omega2_weight * t.omega2;
  return t;
}

// ---------------------------------------------------------------------------
// Inner loop

struct InnerLoopResult {
  MlpParams splitter;
  std::size_t epochs = 0;
  std::vector<double> epoch_losses;  // mean L_total per epoch
};

// Updates the splitter against fixed correctness labels of the current test
// split. Each step draws one batch from the whole dataset (Omega1, Omega2) and
// one from the test split (L_gap) and takes a single Adam step on L_total.
// Stops once an epoch's mean L_total improves on the mean of the previous
// inner_window epochs by less than inner_stop_tol.
inline InnerLoopResult splitter_inner_loop(MlpParams splitter, const Dataset& ds,
                                           std::span<const std::uint8_t> assignment,
                                           std::span<const std::uint8_t> correctness,
                                           const LsConfig& cfg, std::uint64_t seed) {
  if (assignment.size() != ds.size()) {
    throw ContractError("assignment does not cover the dataset");
  }
  std::vector<std::size_t> test_idx;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    if (!assignment[i]) test_idx.push_back(i);
  }
  if (test_idx.size() != correctness.size()) {
    throw ContractError("correctness flags (" + std::to_string(correctness.size()) +
                        ") do not match the test split size (" +
                        std::to_string(test_idx.size()) + ")");
  }
  if (test_idx.empty()) throw DegenerateSplitError("inner loop: empty test split");
  if (splitter.in_dim() != ds.dim() + ds.num_classes || splitter.out_dim() != 2) {
    throw ShapeError("splitter shape does not match the dataset");
  }

  const Matrix inputs = splitter_inputs(ds);
  auto input_row = [&](std::size_t i) {
    return std::span<const double>(inputs.data.data() + i * inputs.cols, inputs.cols);
  };
  const std::size_t n = ds.size();
  const std::size_t batch = std::min(cfg.batch_size, n);
  const std::size_t test_batch = std::min(cfg.batch_size, test_idx.size());
  const std::size_t steps = (n + batch - 1) / batch;
  const DropoutSpec dropout{cfg.dropout};
  const double eps = cfg.prob_epsilon;

  Rng rng(seed);
  AdamState adam = AdamState::for_params(splitter);
  InnerLoopResult res;

  std::vector<std::size_t> test_order = test_idx;
  std::size_t test_pos = test_order.size();  // forces a shuffle on first use

  std::vector<ForwardResult> fwd_total;
  std::vector<ForwardResult> fwd_test;
  std::vector<double> p_total;
  std::vector<double> p_test;
  std::vector<std::size_t> y_total;
  std::vector<std::uint8_t> c_test;
  std::vector<double> d_total;
  std::vector<double> d_test;
  std::vector<std::size_t> test_pick;
  std::size_t global_step = 0;

  auto accumulate = [&](const ForwardResult& f, double p, double dl_dp, Gradients& g) {
    // d p / d (l1 - l0) = p (1 - p)
    const double s = dl_dp * p * (1.0 - p);
    double dlogits[2];
    dlogits[kTrainSide] = s;
    dlogits[1 - kTrainSide] = -s;
    backward_accumulate(splitter, f.cache, dlogits, 1.0, g);
  };

  for (std::size_t epoch = 0; epoch < cfg.inner_max_epochs; ++epoch) {
    const auto order = shuffled_indices(n, rng);
    double loss_sum = 0.0;
    for (std::size_t s = 0; s < steps; ++s, ++global_step) {
      const std::size_t begin = s * batch;
      const std::size_t end = std::min(n, begin + batch);
      fwd_total.clear();
      p_total.clear();
      y_total.clear();
      for (std::size_t k = begin; k < end; ++k) {
        const std::size_t i = order[k];
        fwd_total.push_back(forward(splitter, input_row(i), Mode::kTrain, dropout, rng));
        p_total.push_back(train_side_prob(fwd_total.back().logits, eps));
        y_total.push_back(ds.labels[i]);
      }

      test_pick.clear();
      while (test_pick.size() < test_batch) {
        if (test_pos == test_order.size()) {
          shuffle_in_place(test_order, rng);
          test_pos = 0;
        }
        test_pick.push_back(test_pos++);
      }
      fwd_test.clear();
      p_test.clear();
      c_test.clear();
      for (std::size_t k : test_pick) {
        const std::size_t i = test_order[k];
        fwd_test.push_back(forward(splitter, input_row(i), Mode::kTrain, dropout, rng));
        p_test.push_back(train_side_prob(fwd_test.back().logits, eps));
        const auto pos = static_cast<std::size_t>(
            std::lower_bound(test_idx.begin(), test_idx.end(), i) - test_idx.begin());
        c_test.push_back(correctness[pos]);
      }

      const auto finite = [](const std::vector<double>& v) {
        return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
      };
      if (!finite(p_total) || !finite(p_test)) {
        throw NumericError("non-finite splitter output at inner batch " +
                           std::to_string(global_step));
      }
      const auto terms = splitter_objective(p_total, y_total, ds.num_classes, p_test, c_test,
                                            cfg, &d_total, &d_test);
      if (!std::isfinite(terms.total)) {
        throw NumericError("non-finite splitter loss at inner batch " +
                           std::to_string(global_step));
      }
      loss_sum += terms.total;

      Gradients grads = zeros_like(splitter);
      for (std::size_t k = 0; k < fwd_total.size(); ++k) {
        accumulate(fwd_total[k], p_total[k], d_total[k], grads);
      }
      for (std::size_t k = 0; k < fwd_test.size(); ++k) {
        accumulate(fwd_test[k], p_test[k], d_test[k], grads);
      }
      try {
        adam_update(splitter, grads, adam, cfg.splitter_lr);
      } catch (const NumericError& e) {
        rethrow_with_context(e, "inner batch " + std::to_string(global_step));
      }
    }
    const double epoch_loss = loss_sum / static_cast<double>(steps);
    res.epoch_losses.push_back(epoch_loss);
    res.epochs = epoch + 1;
    if (epoch >= cfg.inner_window) {
      double prev = 0.0;
      for (std::size_t e = epoch - cfg.inner_window; e < epoch; ++e) prev += res.epoch_losses[e];
      prev /= static_cast<double>(cfg.inner_window);
      if (prev - epoch_loss < cfg.inner_stop_tol) break;
    }
  }
  res.splitter = std::move(splitter);
  return res;
}

// ---------------------------------------------------------------------------
// Outer loop

struct LsResult {
  SplitState split;               // from the iteration with the largest gap
  std::vector<IterationTrace> traces;
  MlpParams splitter;             // the splitter that produced `split`
  std::size_t best_iteration = 0;
  double best_gap = 0.0;
};

// Called after every outer iteration; used for progress logging.
using TraceObserver = std::function<void(const IterationTrace&)>;

inline void validate_for_ls(const Dataset& ds) {
  ds.validate();
  if (ds.size() < 20) {
    throw ContractError("learning to split needs at least 20 examples, got " +
                        std::to_string(ds.size()));
  }
  if (ds.classes_present() < 2) {
    throw ContractError("learning to split needs at least two classes present");
  }
}

inline LsResult run_ls(const Dataset& ds, const LsConfig& cfg,
                       const TraceObserver& observer = {}) {
  cfg.validate();
  validate_for_ls(ds);

  LsResult out;
  MlpParams splitter =
      init_splitter(cfg, ds.dim(), ds.num_classes, derive_seed(cfg.seed, "splitter-init"));
  double best_gap = -std::numeric_limits<double>::infinity();
  std::size_t since_best = 0;

  for (std::size_t k = 0; k < cfg.max_outer_iters; ++k) {
    const std::string where = "outer iteration " + std::to_string(k);
    try {
      SplitState state;
      state.ids = ds.ids;
      state.probs = splitter_probabilities(splitter, ds, cfg.prob_epsilon);
      state.seed = derive_seed(cfg.seed, "split", k);
      state.assignment = sample_split(state.probs, state.seed);

      const auto predictor = train_predictor(ds, state.assignment, cfg,
                                             derive_seed(cfg.seed, "predictor", k));
      GapStats gap = evaluate_gap(predictor.params, ds, state.assignment);

      IterationTrace tr;
      tr.outer_iter = k;
      tr.heldout_accuracy = predictor.heldout_accuracy;
      tr.split_ratio = state.split_ratio();
      tr.label_marginals = conditional_label_marginals(state.probs, ds.labels, ds.num_classes);
      std::vector<double> test_probs;
      for (auto i : gap.test_indices) test_probs.push_back(state.probs[i]);
      const auto terms = splitter_objective(state.probs, ds.labels, ds.num_classes, test_probs,
                                            gap.correctness, cfg);
      tr.omega1 = terms.omega1;
      tr.omega2 = terms.omega2;
      tr.gap_loss = terms.gap_loss;
      tr.total_loss = terms.total;

      if (gap.gap > best_gap) {
        best_gap = gap.gap;
        out.split = state;
        out.splitter = splitter;
        out.best_iteration = k;
        since_best = 0;
      } else {
        ++since_best;
      }

      const bool last = since_best >= cfg.outer_patience || k + 1 == cfg.max_outer_iters;
      if (!last) {
        auto inner = splitter_inner_loop(splitter, ds, state.assignment, gap.correctness, cfg,
                                         derive_seed(cfg.seed, "inner", k));
        splitter = std::move(inner.splitter);
        tr.inner_epochs = inner.epochs;
      }
      tr.gap_stats = std::move(gap);
      out.traces.push_back(std::move(tr));
      if (observer) observer(out.traces.back());
      if (last) break;
    } catch (const Error& e) {
      rethrow_with_context(e, where);
    }
  }
  out.best_gap = best_gap;
  return out;
}

// Random delta-sized split scored by the same predictor protocol; the
// baseline against which learned splits are compared.
inline GapStats random_split_gap(const Dataset& ds, const LsConfig& cfg, std::uint64_t seed) {
  const std::vector<double> probs(ds.size(), cfg.delta);
  const auto z = sample_split(probs, derive_seed(seed, "random-split"));
  const auto predictor = train_predictor(ds, z, cfg, derive_seed(seed, "random-predictor"));
  return evaluate_gap(predictor.params, ds, z);
}

}  // namespace lsplit
