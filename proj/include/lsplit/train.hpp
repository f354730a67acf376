#pragma once

// Minibatch Adam training of an MLP classifier with patience-based early
// stopping on a caller-supplied validation score. Plain empirical risk
// minimization is the single-group case of the group-weighted objective, so
// ERM, the ls predictor and group DRO all run through fit_classifier.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "lsplit/dataset.hpp"
#include "lsplit/errors.hpp"
#include "lsplit/nn.hpp"
#include "lsplit/rng.hpp"

namespace lsplit {

// Exponentiated-gradient step on the group weights:
// w'_g = w_g * exp(step * loss_g) / Z.
inline std::vector<double> dro_weight_update(std::span<const double> weights,
                                             std::span<const double> losses,
                                             double step) {
  if (weights.size() != losses.size()) {
    throw ContractError("dro_weight_update: weights and losses differ in length");
  }
  if (weights.empty()) throw ContractError("dro_weight_update: no groups");
  for (double l : losses) {
    if (!std::isfinite(l)) throw NumericError("dro_weight_update: non-finite group loss");
  }
  // Shift by the max exponent so large losses cannot overflow.
  double max_exp = -std::numeric_limits<double>::infinity();
  for (double l : losses) max_exp = std::max(max_exp, step * l);
  std::vector<double> out(weights.size());
  double z = 0.0;
  for (std::size_t g = 0; g < weights.size(); ++g) {
    out[g] = weights[g] * std::exp(step * losses[g] - max_exp);
    z += out[g];
  }
  if (!(z > 0.0) || !std::isfinite(z)) {
    throw NumericError("dro_weight_update: weights collapsed");
  }
  for (double& w : out) w /= z;
  return out;
}

struct FitConfig {
  std::vector<std::size_t> hidden = {100};
  double dropout = 0.1;
  double lr = 1e-3;
  std::size_t batch_size = 200;
  std::size_t patience = 5;
  std::size_t max_epochs = 200;
  double weight_decay = 0.0;
  double group_step_size = 0.0;  // 0 keeps the group weights fixed

  void validate() const {
    if (!(lr > 0.0)) throw ConfigError("learning rate must be > 0");
    if (batch_size == 0) throw ConfigError("batch_size must be >= 1");
    if (patience == 0) throw ConfigError("patience must be >= 1");
    if (!(weight_decay >= 0.0)) throw ConfigError("weight_decay must be >= 0");
    if (!(group_step_size >= 0.0)) throw ConfigError("group_step_size must be >= 0");
    for (auto h : hidden) {
      if (h == 0) throw ConfigError("hidden layer sizes must be >= 1");
    }
    DropoutSpec{dropout}.validate();
  }

  std::vector<std::size_t> layer_dims(std::size_t in, std::size_t out) const {
    std::vector<std::size_t> d{in};
    d.insert(d.end(), hidden.begin(), hidden.end());
    d.push_back(out);
    return d;
  }
};

struct FitResult {
  MlpParams params;       // best snapshot by validation score
  double best_score = 0;  // validation score of `params`
  std::size_t best_epoch = 0;  // 0 means the untrained initialization
  std::size_t epochs_run = 0;
  std::vector<double> group_weights;
};

using ValidationScore = std::function<double(const MlpParams&)>;

// Optional per-step hook used by tests to observe the group weights.
using GroupWeightObserver = std::function<void(std::span<const double>)>;

inline std::vector<std::size_t> predict_labels(const MlpParams& params, const Dataset& ds) {
  std::vector<std::size_t> out(ds.size());
  for (std::size_t i = 0; i < ds.size(); ++i) out[i] = argmax(predict_logits(params, ds.row(i)));
  return out;
}

inline double accuracy(const MlpParams& params, const Dataset& ds) {
  if (ds.empty()) return 0.0;
  std::size_t correct = 0;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    correct += argmax(predict_logits(params, ds.row(i))) == ds.labels[i] ? 1 : 0;
  }
  return static_cast<double>(correct) / static_cast<double>(ds.size());
}

// Trains a fresh network initialized from `init_seed` on `train`, minimizing
// sum_g w_g * mean_loss_g per minibatch. group_ids[i] in [0, num_groups).
inline FitResult fit_classifier(const Dataset& train, std::span<const std::size_t> group_ids,
                                std::size_t num_groups, const FitConfig& cfg,
                                const ValidationScore& score, std::uint64_t init_seed,
                                std::uint64_t run_seed,
                                const GroupWeightObserver& observer = {}) {
  cfg.validate();
  if (train.empty()) throw ContractError("cannot train on an empty dataset");
  if (group_ids.size() != train.size()) {
    throw ContractError("group ids do not cover the training set");
  }
  if (num_groups == 0) throw ContractError("num_groups must be >= 1");
  for (auto g : group_ids) {
    if (g >= num_groups) throw ContractError("group id out of range");
  }

  const auto dims = cfg.layer_dims(train.dim(), train.num_classes);
  FitResult res;
  MlpParams params = init_params(dims, init_seed);
  AdamState adam = AdamState::for_params(params);
  std::vector<double> weights(num_groups, 1.0 / static_cast<double>(num_groups));
  Rng rng(run_seed);
  const DropoutSpec dropout{cfg.dropout};

  res.params = params;
  res.best_score = score(params);
  res.best_epoch = 0;
  std::size_t since_best = 0;

  std::vector<ForwardResult> fwd;
  std::vector<LossAndGrad> losses;
  std::vector<double> group_loss(num_groups);
  std::vector<std::size_t> group_count(num_groups);

  for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    const auto order = shuffled_indices(train.size(), rng);
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      fwd.clear();
      losses.clear();
      std::fill(group_loss.begin(), group_loss.end(), 0.0);
      std::fill(group_count.begin(), group_count.end(), 0);
      for (std::size_t k = start; k < end; ++k) {
        const std::size_t i = order[k];
        fwd.push_back(forward(params, train.row(i), Mode::kTrain, dropout, rng));
        losses.push_back(softmax_cross_entropy(fwd.back().logits, train.labels[i]));
        group_loss[group_ids[i]] += losses.back().loss;
        group_count[group_ids[i]] += 1;
      }
      for (std::size_t g = 0; g < num_groups; ++g) {
        if (group_count[g] > 0) group_loss[g] /= static_cast<double>(group_count[g]);
      }
      if (cfg.group_step_size > 0.0) {
        weights = dro_weight_update(weights, group_loss, cfg.group_step_size);
      }
      if (observer) observer(weights);

      Gradients grads = zeros_like(params);
      for (std::size_t k = start; k < end; ++k) {
        const std::size_t g = group_ids[order[k]];
        const double scale = weights[g] / static_cast<double>(group_count[g]);
        backward_accumulate(params, fwd[k - start].cache, losses[k - start].dlogits, scale,
                            grads);
      }
      adam_update(params, grads, adam, cfg.lr, cfg.weight_decay);
    }
    res.epochs_run = epoch;
    const double s = score(params);
    if (s > res.best_score) {
      res.best_score = s;
      res.params = params;
      res.best_epoch = epoch;
      since_best = 0;
    } else if (++since_best >= cfg.patience) {
      break;
    }
  }
  res.group_weights = std::move(weights);
  return res;
}

}  // namespace lsplit
