#include <cmath>
#include <vector>

#include <gtest/gtest.h>

#include "lsplit/datagen.hpp"

using namespace lsplit;

namespace {

// Plain batch gradient descent logistic regression on a column block.
struct Logistic {
  std::vector<double> w;
  double b = 0.0;

  double score(const Dataset& ds, std::size_t i, std::size_t lo, std::size_t hi) const {
    double s = b;
    for (std::size_t c = lo; c < hi; ++c) s += w[c - lo] * ds.features(i, c);
    return s;
  }

  static Logistic fit(const Dataset& ds, std::size_t lo, std::size_t hi) {
    Logistic m;
    m.w.assign(hi - lo, 0.0);
    const double n = static_cast<double>(ds.size());
    for (int it = 0; it < 300; ++it) {
      std::vector<double> gw(hi - lo, 0.0);
      double gb = 0.0;
      for (std::size_t i = 0; i < ds.size(); ++i) {
        const double p = 1.0 / (1.0 + std::exp(-m.score(ds, i, lo, hi)));
        const double r = p - static_cast<double>(ds.labels[i]);
        for (std::size_t c = lo; c < hi; ++c) gw[c - lo] += r * ds.features(i, c);
        gb += r;
      }
      for (std::size_t k = 0; k < gw.size(); ++k) m.w[k] -= 0.5 * gw[k] / n;
      m.b -= 0.5 * gb / n;
    }
    return m;
  }

  double accuracy(const Dataset& ds, std::size_t lo, std::size_t hi) const {
    std::size_t ok = 0;
    for (std::size_t i = 0; i < ds.size(); ++i) {
      ok += (score(ds, i, lo, hi) > 0.0 ? 1u : 0u) == ds.labels[i] ? 1 : 0;
    }
    return static_cast<double>(ok) / static_cast<double>(ds.size());
  }
};

std::size_t minority_count(const LabeledData& d) {
  std::size_t m = 0;
  for (std::size_t i = 0; i < d.dataset.size(); ++i) {
    m += d.truth.is_minority(i, d.dataset.labels[i]) ? 1 : 0;
  }
  return m;
}

}  // namespace

TEST(GenSpurious, ShapeAndLayout) {
  SpuriousSpec spec;
  spec.n = 50;
  spec.d_core = 3;
  spec.d_spurious = 2;
  spec.d_noise = 4;
  spec.seed = 1;
  const auto d = gen_spurious(spec);
  EXPECT_EQ(d.dataset.size(), 50u);
  EXPECT_EQ(d.dataset.dim(), 9u);
  EXPECT_EQ(d.dataset.num_classes, 2u);
  ASSERT_TRUE(d.truth.spurious.has_value());
  EXPECT_FALSE(d.truth.polluted.has_value());
  for (std::size_t i = 0; i < 50; ++i) {
    EXPECT_EQ(d.dataset.ids[i], static_cast<std::int64_t>(i));
    const double sign = 2.0 * (*d.truth.spurious)[i] - 1.0;
    // spurious block sits within a few noise stds of its mean
    EXPECT_NEAR(d.dataset.features(i, 3), sign, 0.6);
    EXPECT_NEAR(d.dataset.features(i, 4), sign, 0.6);
  }
}

TEST(GenSpurious, Deterministic) {
  SpuriousSpec spec;
  spec.seed = 9;
  EXPECT_EQ(gen_spurious(spec).dataset, gen_spurious(spec).dataset);
  auto other = spec;
  other.seed = 10;
  EXPECT_NE(gen_spurious(spec).dataset, gen_spurious(other).dataset);
}

TEST(GenSpurious, BalancedHasNoCorrelation) {
  SpuriousSpec spec;
  spec.n = 10000;
  spec.rho = 0.5;
  spec.seed = 3;
  const auto d = gen_spurious(spec);
  double my = 0, ma = 0;
  for (std::size_t i = 0; i < spec.n; ++i) {
    my += static_cast<double>(d.dataset.labels[i]);
    ma += (*d.truth.spurious)[i];
  }
  my /= spec.n;
  ma /= spec.n;
  double cov = 0, vy = 0, va = 0;
  for (std::size_t i = 0; i < spec.n; ++i) {
    const double dy = static_cast<double>(d.dataset.labels[i]) - my;
    const double da = (*d.truth.spurious)[i] - ma;
    cov += dy * da;
    vy += dy * dy;
    va += da * da;
  }
  EXPECT_NEAR(cov / std::sqrt(vy * va), 0.0, 0.05);
}

TEST(GenSpurious, PerfectCorrelationHasNoMinority) {
  SpuriousSpec spec;
  spec.rho = 1.0;
  spec.seed = 4;
  EXPECT_EQ(minority_count(gen_spurious(spec)), 0u);
}

TEST(GenSpurious, MinorityCountBinomialInterval) {
  SpuriousSpec spec;
  spec.n = 2000;
  spec.rho = 0.9;
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    spec.seed = seed;
    const auto m = minority_count(gen_spurious(spec));
    EXPECT_GE(m, 160u);
    EXPECT_LE(m, 240u);
  }
}

TEST(GenSpurious, ShortcutIsRhoPredictive) {
  SpuriousSpec spec;
  spec.n = 5000;
  spec.rho = 0.9;
  spec.seed = 11;
  const auto train = gen_spurious(spec);
  spec.seed = 12;
  const auto fresh = gen_spurious(spec);
  const std::size_t lo = spec.d_core, hi = spec.d_core + spec.d_spurious;
  const auto model = Logistic::fit(train.dataset, lo, hi);
  EXPECT_NEAR(model.accuracy(fresh.dataset, lo, hi), spec.rho, 0.03);
}

TEST(GenSpurious, InvalidSpec) {
  SpuriousSpec spec;
  spec.rho = 0.4;
  EXPECT_THROW(gen_spurious(spec), ConfigError);
  spec = {};
  spec.n = 3;
  EXPECT_THROW(gen_spurious(spec), ConfigError);
  spec = {};
  spec.d_noise = 0;
  EXPECT_THROW(gen_spurious(spec), ConfigError);
}

TEST(GenBlobs, ClassesAreSeparable) {
  BlobSpec spec;
  spec.n = 1000;
  spec.seed = 2;
  const auto d = gen_blobs(spec);
  EXPECT_EQ(d.dataset.num_classes, 10u);
  std::size_t ok = 0;
  for (std::size_t i = 0; i < d.dataset.size(); ++i) {
    std::size_t best = 0;
    for (std::size_t c = 1; c < spec.dim; ++c) {
      if (d.dataset.features(i, c) > d.dataset.features(i, best)) best = c;
    }
    ok += best == d.dataset.labels[i] ? 1 : 0;
  }
  EXPECT_GT(static_cast<double>(ok) / 1000.0, 0.95);
}

TEST(GenBlobs, InvalidSpec) {
  BlobSpec spec;
  spec.dim = 5;
  EXPECT_THROW(gen_blobs(spec), ConfigError);
  spec = {};
  spec.num_classes = 1;
  EXPECT_THROW(gen_blobs(spec), ConfigError);
}

TEST(LabelNoise, ZeroRateChangesNothing) {
  BlobSpec spec;
  spec.n = 500;
  const auto d = gen_blobs(spec);
  const auto noisy = inject_label_noise(d.dataset, 0.0, 10, 1);
  EXPECT_EQ(noisy.dataset, d.dataset);
  for (auto p : noisy.polluted) EXPECT_EQ(p, 0);
}

TEST(LabelNoise, PollutedCountAtScale) {
  Dataset ds;
  ds.num_classes = 10;
  ds.features = Matrix(60000, 1);
  for (std::size_t i = 0; i < 60000; ++i) {
    ds.ids.push_back(static_cast<std::int64_t>(i));
    ds.labels.push_back(i % 10);
  }
  const auto noisy = inject_label_noise(ds, 0.1, 10, 5);
  std::size_t n_polluted = 0, n_changed = 0;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    n_polluted += noisy.polluted[i];
    n_changed += noisy.dataset.labels[i] != ds.labels[i] ? 1 : 0;
    EXPECT_EQ(noisy.polluted[i] == 1, noisy.dataset.labels[i] != ds.labels[i]);
  }
  EXPECT_EQ(n_polluted, n_changed);
  EXPECT_NEAR(static_cast<double>(n_polluted), 6000.0, 300.0);
  EXPECT_EQ(noisy.dataset.features, ds.features);
}

TEST(LabelNoise, WrongClassesAreUniform) {
  // All true labels are 0; with eta = 0.9 every class should get ~0.1.
  Dataset ds;
  ds.num_classes = 10;
  ds.features = Matrix(10000, 1);
  ds.labels.assign(10000, 0);
  for (std::size_t i = 0; i < 10000; ++i) ds.ids.push_back(static_cast<std::int64_t>(i));
  const auto noisy = inject_label_noise(ds, 0.9, 10, 8);
  std::vector<double> counts(10, 0.0);
  for (auto y : noisy.dataset.labels) counts[y] += 1.0;
  double chi2 = 0.0;
  for (double c : counts) chi2 += (c - 1000.0) * (c - 1000.0) / 1000.0;
  // chi-square critical value for 9 degrees of freedom at p = 0.01
  EXPECT_LT(chi2, 21.666);
}

TEST(LabelNoise, InvalidRate) {
  Dataset ds;
  ds.num_classes = 2;
  ds.features = Matrix(1, 1);
  ds.labels = {0};
  ds.ids = {0};
  EXPECT_THROW(inject_label_noise(ds, 1.0, 2, 0), ConfigError);
  EXPECT_THROW(inject_label_noise(ds, -0.1, 2, 0), ConfigError);
  EXPECT_THROW(inject_label_noise(ds, 0.1, 1, 0), ConfigError);
}
