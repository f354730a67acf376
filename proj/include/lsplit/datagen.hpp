#pragma once

// Synthetic data: a spurious-correlation family where a low-noise "shortcut"
// block agrees with the label with probability rho, Gaussian class blobs, and
// symmetric label-noise injection.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <random>
#include <vector>

#include "lsplit/dataset.hpp"
#include "lsplit/errors.hpp"
#include "lsplit/rng.hpp"

namespace lsplit {

struct SpuriousSpec {
  std::size_t n = 2000;
  std::size_t d_core = 2;
  std::size_t d_spurious = 2;
  std::size_t d_noise = 2;
  double rho = 0.9;
  double core_noise_std = 3.0;
  double spurious_noise_std = 0.1;
  std::uint64_t seed = 0;

  void validate() const {
    if (n < 4) throw ConfigError("spurious generator needs n >= 4");
    if (d_core < 1 || d_spurious < 1 || d_noise < 1) {
      throw ConfigError("feature block sizes must be >= 1");
    }
    if (!(rho >= 0.5 && rho <= 1.0)) throw ConfigError("rho must lie in [0.5, 1]");
    if (!(core_noise_std >= 0.0) || !(spurious_noise_std >= 0.0)) {
      throw ConfigError("noise standard deviations must be non-negative");
    }
  }

  std::size_t dim() const { return d_core + d_spurious + d_noise; }
};

// Feature layout: [core | spurious | noise]. Labels are binary and balanced in
// expectation; the spurious attribute equals the label with probability rho.
inline LabeledData gen_spurious(const SpuriousSpec& spec) {
  spec.validate();
  Rng rng(spec.seed);
  std::bernoulli_distribution coin(0.5);
  std::bernoulli_distribution agree(spec.rho);
  std::normal_distribution<double> core_noise(0.0, spec.core_noise_std);
  std::normal_distribution<double> spur_noise(0.0, spec.spurious_noise_std);
  std::normal_distribution<double> unit(0.0, 1.0);

  LabeledData out;
  Dataset& ds = out.dataset;
  ds.num_classes = 2;
  ds.features = Matrix(spec.n, spec.dim());
  ds.ids.resize(spec.n);
  ds.labels.resize(spec.n);
  auto& attr = out.truth.spurious.emplace(spec.n, 0);

  for (std::size_t i = 0; i < spec.n; ++i) {
    const int y = coin(rng) ? 1 : 0;
    const int a = agree(rng) ? y : 1 - y;
    ds.ids[i] = static_cast<std::int64_t>(i);
    ds.labels[i] = static_cast<std::size_t>(y);
    attr[i] = a;
    std::size_t c = 0;
    for (std::size_t k = 0; k < spec.d_core; ++k, ++c) {
      ds.features(i, c) = (2.0 * y - 1.0) + core_noise(rng);
    }
    for (std::size_t k = 0; k < spec.d_spurious; ++k, ++c) {
      ds.features(i, c) = (2.0 * a - 1.0) + spur_noise(rng);
    }
    for (std::size_t k = 0; k < spec.d_noise; ++k, ++c) {
      ds.features(i, c) = unit(rng);
    }
  }
  return out;
}

// Draws a set in which each of the four (label, attribute) groups has the same
// expected size: the same generator with rho = 0.5.
inline LabeledData gen_spurious_balanced(SpuriousSpec spec) {
  spec.rho = 0.5;
  return gen_spurious(spec);
}

struct BlobSpec {
  std::size_t n = 5000;
  std::size_t num_classes = 10;
  std::size_t dim = 10;
  double separation = 4.0;  // class c is centered at separation * e_(c mod dim)
  double noise_std = 1.0;
  std::uint64_t seed = 0;

  void validate() const {
    if (n < 1) throw ConfigError("blob generator needs n >= 1");
    if (num_classes < 2) throw ConfigError("blob generator needs >= 2 classes");
    if (dim < num_classes) throw ConfigError("blob dimension must be >= number of classes");
    if (!(noise_std >= 0.0)) throw ConfigError("noise_std must be non-negative");
  }
};

// Isotropic Gaussian blobs with uniformly drawn classes.
inline LabeledData gen_blobs(const BlobSpec& spec) {
  spec.validate();
  Rng rng(spec.seed);
  std::uniform_int_distribution<std::size_t> cls(0, spec.num_classes - 1);
  std::normal_distribution<double> noise(0.0, spec.noise_std);
  LabeledData out;
  Dataset& ds = out.dataset;
  ds.num_classes = spec.num_classes;
  ds.features = Matrix(spec.n, spec.dim);
  ds.ids.resize(spec.n);
  ds.labels.resize(spec.n);
  for (std::size_t i = 0; i < spec.n; ++i) {
    const std::size_t y = cls(rng);
    ds.ids[i] = static_cast<std::int64_t>(i);
    ds.labels[i] = y;
    for (std::size_t c = 0; c < spec.dim; ++c) {
      ds.features(i, c) = (c == y ? spec.separation : 0.0) + noise(rng);
    }
  }
  return out;
}

struct NoisyLabels {
  Dataset dataset;
  std::vector<std::uint8_t> polluted;
};

// Keeps each label with probability 1 - eta, otherwise replaces it with one of
// the other num_classes - 1 classes uniformly. Features are untouched.
inline NoisyLabels inject_label_noise(const Dataset& dataset, double eta,
                                      std::size_t num_classes, std::uint64_t seed) {
  if (!(eta >= 0.0 && eta < 1.0)) throw ConfigError("eta must lie in [0, 1)");
  if (num_classes < 2) throw ConfigError("label noise needs >= 2 classes");
  if (num_classes < dataset.num_classes) {
    throw ConfigError("num_classes is smaller than the dataset's class count");
  }
  Rng rng(seed);
  std::bernoulli_distribution flip(eta);
  std::uniform_int_distribution<std::size_t> other(0, num_classes - 2);
  NoisyLabels out{dataset, std::vector<std::uint8_t>(dataset.size(), 0)};
  out.dataset.num_classes = num_classes;
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    if (!flip(rng)) continue;
    const std::size_t y = dataset.labels[i];
    std::size_t alt = other(rng);
    if (alt >= y) alt += 1;
    out.dataset.labels[i] = alt;
    out.polluted[i] = 1;
  }
  return out;
}

}  // namespace lsplit
