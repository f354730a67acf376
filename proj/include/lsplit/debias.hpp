#pragma once

// De-biasing with learned splits: every example is grouped by (label, split
// side) and a predictor is trained with group DRO over those groups, with
// model selection on worst-group validation accuracy.

#include <algorithm>
#include <compare>
#include <cstddef>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "lsplit/dataset.hpp"
#include "lsplit/errors.hpp"
#include "lsplit/ls_engine.hpp"
#include "lsplit/metrics.hpp"
#include "lsplit/rng.hpp"
#include "lsplit/train.hpp"

namespace lsplit {

struct GroupKey {
  std::size_t label = 0;
  int z = 0;  // split side, or any binary attribute used for grouping

  auto operator<=>(const GroupKey&) const = default;

  std::string to_string() const {
    return "y=" + std::to_string(label) + ",z=" + std::to_string(z);
  }
};

using GroupReport = GroupStats<GroupKey>;

struct DroConfig {
  double group_step_size = 0.01;
  double lr = 1e-3;
  std::size_t batch_size = 200;
  std::size_t max_epochs = 300;
  std::size_t patience = 20;
  double weight_decay = 0.0;
  std::vector<std::size_t> hidden = {100};
  double dropout = 0.1;
  std::uint64_t seed = 0;

  void validate() const {
    if (!(group_step_size > 0.0)) throw ConfigError("group_step_size must be > 0");
    fit_config(group_step_size).validate();
  }

  FitConfig fit_config(double step) const {
    FitConfig f;
    f.hidden = hidden;
    f.dropout = dropout;
    f.lr = lr;
    f.batch_size = batch_size;
    f.patience = patience;
    f.max_epochs = max_epochs;
    f.weight_decay = weight_decay;
    f.group_step_size = step;
    return f;
  }
};

// key_i = (y_i, z_i). `split` is matched to the dataset by id, so it may list
// the examples in any order.
inline std::vector<GroupKey> assign_groups(const Dataset& ds,
                                           std::span<const std::int64_t> split_ids,
                                           std::span<const std::uint8_t> assignment) {
  if (split_ids.size() != assignment.size()) {
    throw ContractError("split ids and assignment differ in length");
  }
  std::unordered_map<std::int64_t, std::size_t> row_of;
  row_of.reserve(split_ids.size());
  for (std::size_t r = 0; r < split_ids.size(); ++r) {
    if (!row_of.emplace(split_ids[r], r).second) {
      throw ContractError("split lists id " + std::to_string(split_ids[r]) + " twice");
    }
  }
  const std::unordered_set<std::int64_t> known(ds.ids.begin(), ds.ids.end());
  for (auto id : split_ids) {
    if (!known.count(id)) {
      throw ContractError("split references unknown id " + std::to_string(id));
    }
  }
  std::vector<GroupKey> keys(ds.size());
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const auto it = row_of.find(ds.ids[i]);
    if (it == row_of.end()) {
      throw ContractError("dataset id " + std::to_string(ds.ids[i]) + " is missing from the split");
    }
    keys[i] = GroupKey{ds.labels[i], assignment[it->second] ? 1 : 0};
  }
  return keys;
}

inline std::vector<GroupKey> assign_groups(const Dataset& ds, const SplitState& split) {
  return assign_groups(ds, split.ids, split.assignment);
}

// Groups by (label, ground-truth attribute); evaluation only.
inline std::vector<GroupKey> attribute_groups(const Dataset& ds, std::span<const int> attribute) {
  if (attribute.size() != ds.size()) throw ContractError("attribute column length mismatch");
  std::vector<GroupKey> keys(ds.size());
  for (std::size_t i = 0; i < ds.size(); ++i) keys[i] = GroupKey{ds.labels[i], attribute[i]};
  return keys;
}

inline GroupReport evaluate_groups(const MlpParams& params, const Dataset& ds,
                                   std::span<const GroupKey> keys) {
  if (keys.size() != ds.size()) throw ContractError("group keys do not cover the dataset");
  std::vector<std::size_t> pred(ds.size());
  std::vector<double> loss(ds.size());
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const auto logits = predict_logits(params, ds.row(i));
    pred[i] = argmax(logits);
    loss[i] = softmax_cross_entropy(logits, ds.labels[i]).loss;
  }
  return worst_group_accuracy<GroupKey>(pred, ds.labels, keys, loss);
}

struct DroResult {
  MlpParams params;
  GroupReport validation;
  std::vector<GroupKey> train_groups;  // index = group id used during training
  std::vector<double> group_weights;   // final weights, aligned with train_groups
  std::vector<std::string> warnings;
  std::size_t epochs = 0;
};

namespace detail {

inline std::uint64_t dro_init_seed(std::uint64_t seed) { return derive_seed(seed, "dro-init"); }
inline std::uint64_t dro_run_seed(std::uint64_t seed) { return derive_seed(seed, "dro-run"); }

}  // namespace detail

// Online group DRO: per minibatch the group weights take an exponentiated
// gradient step on the per-group mean losses, then Adam minimizes the
// weighted loss. The weights persist across epochs. The returned checkpoint
// maximizes worst-group accuracy on the validation set.
inline DroResult group_dro_train(const Dataset& train, std::span<const GroupKey> train_keys,
                                 const DroConfig& cfg, const Dataset& validation,
                                 std::span<const GroupKey> validation_keys,
                                 const GroupWeightObserver& observer = {}) {
  cfg.validate();
  if (train.empty()) throw ContractError("group DRO: empty training set");
  if (validation.empty()) throw ContractError("group DRO: empty validation set");
  if (train_keys.size() != train.size()) throw ContractError("train group keys length mismatch");
  if (validation_keys.size() != validation.size()) {
    throw ContractError("validation group keys length mismatch");
  }

  DroResult out;
  std::map<GroupKey, std::size_t> gid;
  for (const auto& k : train_keys) gid.emplace(k, 0);
  for (auto& [k, id] : gid) {
    id = out.train_groups.size();
    out.train_groups.push_back(k);
  }
  std::vector<std::size_t> group_ids(train.size());
  for (std::size_t i = 0; i < train.size(); ++i) group_ids[i] = gid.at(train_keys[i]);
  for (const auto& k : validation_keys) {
    if (!gid.count(k)) {
      const auto msg = "validation group " + k.to_string() + " is absent from training";
      if (std::find(out.warnings.begin(), out.warnings.end(), msg) == out.warnings.end()) {
        out.warnings.push_back(msg);
      }
    }
  }

  auto score = [&](const MlpParams& p) {
    return evaluate_groups(p, validation, validation_keys).worst_group_accuracy;
  };
  auto fit = fit_classifier(train, group_ids, out.train_groups.size(),
                            cfg.fit_config(cfg.group_step_size), score,
                            detail::dro_init_seed(cfg.seed), detail::dro_run_seed(cfg.seed),
                            observer);
  out.params = std::move(fit.params);
  out.group_weights = std::move(fit.group_weights);
  out.epochs = fit.epochs_run;
  out.validation = evaluate_groups(out.params, validation, validation_keys);
  return out;
}

struct ErmResult {
  MlpParams params;
  double validation_accuracy = 0.0;
  std::size_t epochs = 0;
};

// Empirical risk minimization with early stopping on average validation
// accuracy; the same optimizer, seeds and schedule as group_dro_train.
inline ErmResult erm_train(const Dataset& train, const DroConfig& cfg,
                           const Dataset& validation) {
  if (train.empty()) throw ContractError("ERM: empty training set");
  if (validation.empty()) throw ContractError("ERM: empty validation set");
  const std::vector<std::size_t> one_group(train.size(), 0);
  auto fit = fit_classifier(train, one_group, 1, cfg.fit_config(0.0),
                            [&](const MlpParams& p) { return accuracy(p, validation); },
                            detail::dro_init_seed(cfg.seed), detail::dro_run_seed(cfg.seed));
  return {std::move(fit.params), fit.best_score, fit.epochs_run};
}

struct WeightDecayChoice {
  double weight_decay = 0.0;
  DroResult result;
  std::vector<std::pair<double, double>> scores;  // (weight decay, validation worst-group)
};

inline const std::vector<double>& default_weight_decay_grid() {
  static const std::vector<double> grid{1.0, 0.1, 0.01, 0.001, 0.0};
  return grid;
}

// Runs group DRO once per weight decay and keeps the best validation
// worst-group accuracy; ties go to the earlier grid entry.
inline WeightDecayChoice grid_search_weight_decay(const Dataset& train,
                                                  std::span<const GroupKey> train_keys,
                                                  DroConfig cfg, const Dataset& validation,
                                                  std::span<const GroupKey> validation_keys,
                                                  std::span<const double> grid) {
  if (grid.empty()) throw ConfigError("weight decay grid is empty");
  WeightDecayChoice best;
  bool have = false;
  for (double wd : grid) {
    cfg.weight_decay = wd;
    auto r = group_dro_train(train, train_keys, cfg, validation, validation_keys);
    best.scores.emplace_back(wd, r.validation.worst_group_accuracy);
    if (!have || r.validation.worst_group_accuracy > best.result.validation.worst_group_accuracy) {
      best.weight_decay = wd;
      best.result = std::move(r);
      have = true;
    }
  }
  return best;
}

}  // namespace lsplit
