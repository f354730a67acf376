#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "lsplit/errors.hpp"

namespace lsplit {

// KL(Bernoulli(p) || Bernoulli(q)).
inline double kl_bernoulli(double p, double q) {
  if (!(p > 0.0 && p < 1.0 && q > 0.0 && q < 1.0)) {
    throw ContractError("kl_bernoulli requires p and q strictly inside (0, 1)");
  }
  return p * std::log(p / q) + (1.0 - p) * std::log((1.0 - p) / (1.0 - q));
}

// Adds eps to every cell and renormalizes.
inline std::vector<double> smooth_distribution(std::span<const double> p, double eps) {
  std::vector<double> out(p.begin(), p.end());
  double sum = 0.0;
  for (double& v : out) {
    v += eps;
    sum += v;
  }
  for (double& v : out) v /= sum;
  return out;
}

// KL(p || q) between categorical distributions; both sides are eps-smoothed.
inline double kl_categorical(std::span<const double> p, std::span<const double> q,
                             double eps = 1e-8) {
  if (p.size() != q.size()) {
    throw ContractError("kl_categorical: length mismatch (" + std::to_string(p.size()) +
                        " vs " + std::to_string(q.size()) + ")");
  }
  if (p.empty()) throw ContractError("kl_categorical: empty distributions");
  const auto ps = smooth_distribution(p, eps);
  const auto qs = smooth_distribution(q, eps);
  double kl = 0.0;
  for (std::size_t i = 0; i < ps.size(); ++i) kl += ps[i] * std::log(ps[i] / qs[i]);
  return std::max(kl, 0.0);
}

// P(y | z = 1), P(y | z = 0) and P(y), where z is soft: each example belongs
// to the training side with probability probs[i].
struct LabelMarginals {
  std::vector<double> given_train;  // P(y | z = 1)
  std::vector<double> given_test;   // P(y | z = 0)
  std::vector<double> overall;      // P(y)
};

inline LabelMarginals conditional_label_marginals(std::span<const double> probs,
                                                  std::span<const std::size_t> labels,
                                                  std::size_t num_classes,
                                                  double eps = 1e-12) {
  if (probs.size() != labels.size()) {
    throw ContractError("conditional_label_marginals: probs and labels differ in length");
  }
  if (probs.empty()) throw ContractError("conditional_label_marginals: empty input");
  if (num_classes == 0) throw ContractError("conditional_label_marginals: zero classes");
  LabelMarginals m{std::vector<double>(num_classes, 0.0),
                   std::vector<double>(num_classes, 0.0),
                   std::vector<double>(num_classes, 0.0)};
  double mass1 = 0.0;
  double mass0 = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    if (labels[i] >= num_classes) {
      throw ContractError("label " + std::to_string(labels[i]) + " out of range");
    }
    m.given_train[labels[i]] += probs[i];
    m.given_test[labels[i]] += 1.0 - probs[i];
    m.overall[labels[i]] += 1.0;
    mass1 += probs[i];
    mass0 += 1.0 - probs[i];
  }
  if (mass1 < eps || mass0 < eps) {
    throw DegenerateSplitError("split probability mass on one side is below epsilon");
  }
  const double n = static_cast<double>(probs.size());
  for (std::size_t k = 0; k < num_classes; ++k) {
    m.given_train[k] /= mass1;
    m.given_test[k] /= mass0;
    m.overall[k] /= n;
  }
  return m;
}

inline double total_variation(std::span<const double> p, std::span<const double> q) {
  if (p.size() != q.size()) throw ContractError("total_variation: length mismatch");
  double tv = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) tv += std::abs(p[i] - q[i]);
  return 0.5 * tv;
}

template <typename Key>
struct GroupEntry {
  std::size_t count = 0;
  double accuracy = 0.0;
  std::optional<double> mean_loss;
};

template <typename Key>
struct GroupStats {
  std::map<Key, GroupEntry<Key>> groups;
  Key worst_group_key{};
  double worst_group_accuracy = 0.0;
  double average_accuracy = 0.0;
};

// Per-group accuracy (and mean loss when losses are given) and the minimum
// accuracy over nonempty groups. Ties resolve to the smallest key.
template <typename Key>
GroupStats<Key> worst_group_accuracy(std::span<const std::size_t> predictions,
                                     std::span<const std::size_t> labels,
                                     std::span<const Key> keys,
                                     std::span<const double> losses = {}) {
  if (predictions.size() != labels.size() || labels.size() != keys.size()) {
    throw ContractError("worst_group_accuracy: input lengths differ");
  }
  if (!losses.empty() && losses.size() != labels.size()) {
    throw ContractError("worst_group_accuracy: losses length differs");
  }
  if (labels.empty()) throw ContractError("worst_group_accuracy: empty input");

  struct Tally {
    std::size_t count = 0;
    std::size_t correct = 0;
    double loss = 0.0;
  };
  std::map<Key, Tally> tallies;
  std::size_t total_correct = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    auto& t = tallies[keys[i]];
    t.count += 1;
    const bool ok = predictions[i] == labels[i];
    t.correct += ok ? 1 : 0;
    total_correct += ok ? 1 : 0;
    if (!losses.empty()) t.loss += losses[i];
  }

  GroupStats<Key> out;
  out.average_accuracy =
      static_cast<double>(total_correct) / static_cast<double>(labels.size());
  out.worst_group_accuracy = std::numeric_limits<double>::infinity();
  for (const auto& [key, t] : tallies) {
    GroupEntry<Key> e;
    e.count = t.count;
    e.accuracy = static_cast<double>(t.correct) / static_cast<double>(t.count);
    if (!losses.empty()) e.mean_loss = t.loss / static_cast<double>(t.count);
    if (e.accuracy < out.worst_group_accuracy) {
      out.worst_group_accuracy = e.accuracy;
      out.worst_group_key = key;
    }
    out.groups.emplace(key, e);
  }
  return out;
}

struct NoiseReport {
  std::size_t n_polluted = 0;
  std::size_t n_test_split = 0;
  double precision = 0.0;
  double recall = 0.0;
  double oracle_precision = 0.0;
  double oracle_recall = 0.0;
  // Set when there are no polluted examples and recall is reported as 1.
  bool recall_undefined = false;
};

struct PrecisionRecall {
  double precision = 0.0;
  double recall = 0.0;
  bool recall_undefined = false;
};

// The test side is z == 0.
inline PrecisionRecall noise_precision_recall(std::span<const std::uint8_t> assignment,
                                              std::span<const std::uint8_t> polluted) {
  if (assignment.size() != polluted.size()) {
    throw ContractError("noise_precision_recall: assignment and mask differ in length");
  }
  std::size_t n_test = 0;
  std::size_t polluted_in_test = 0;
  std::size_t n_polluted = 0;
  for (std::size_t i = 0; i < assignment.size(); ++i) {
    const bool in_test = assignment[i] == 0;
    n_test += in_test ? 1 : 0;
    n_polluted += polluted[i] ? 1 : 0;
    polluted_in_test += (in_test && polluted[i]) ? 1 : 0;
  }
  if (n_test == 0) throw DegenerateSplitError("noise_precision_recall: empty test split");
  PrecisionRecall pr;
  pr.precision = static_cast<double>(polluted_in_test) / static_cast<double>(n_test);
  if (n_polluted == 0) {
    pr.recall = 1.0;
    pr.recall_undefined = true;
  } else {
    pr.recall = static_cast<double>(polluted_in_test) / static_cast<double>(n_polluted);
  }
  return pr;
}

// Best achievable precision/recall when n_test_split examples can be placed on
// the test side and as many polluted ones as possible are put there.
inline PrecisionRecall oracle_precision_recall(std::size_t n_polluted,
                                               std::size_t n_test_split) {
  if (n_test_split == 0) throw ContractError("oracle_precision_recall: empty test split");
  PrecisionRecall pr;
  if (n_polluted <= n_test_split) {
    pr.precision = static_cast<double>(n_polluted) / static_cast<double>(n_test_split);
    pr.recall = 1.0;
  } else {
    pr.precision = 1.0;
    pr.recall = static_cast<double>(n_test_split) / static_cast<double>(n_polluted);
  }
  return pr;
}

inline NoiseReport noise_report(std::span<const std::uint8_t> assignment,
                                std::span<const std::uint8_t> polluted) {
  const auto measured = noise_precision_recall(assignment, polluted);
  NoiseReport r;
  for (std::size_t i = 0; i < assignment.size(); ++i) {
    r.n_test_split += assignment[i] == 0 ? 1 : 0;
    r.n_polluted += polluted[i] ? 1 : 0;
  }
  const auto oracle = oracle_precision_recall(r.n_polluted, r.n_test_split);
  r.precision = measured.precision;
  r.recall = measured.recall;
  r.recall_undefined = measured.recall_undefined;
  r.oracle_precision = oracle.precision;
  r.oracle_recall = oracle.recall;
  return r;
}

inline double mean(std::span<const double> v) {
  if (v.empty()) return 0.0;
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

// Sample standard deviation (n - 1); zero for fewer than two values.
inline double stddev(std::span<const double> v) {
  if (v.size() < 2) return 0.0;
  const double m = mean(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size() - 1));
}

}  // namespace lsplit
