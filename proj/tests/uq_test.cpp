#include <gtest/gtest.h>

#include <cmath>
#include <string>
#include <vector>

#include "pgalstm/core/rng.hpp"
#include "pgalstm/physics.hpp"
#include "pgalstm/uq/mc.hpp"
#include "pgalstm/uq/metrics.hpp"
#include "toy.hpp"

namespace pgalstm {
namespace {

using testing::toy_arch;
using testing::toy_sequences;

struct Fixture {
  std::vector<DepthSequence> seqs;
  std::vector<std::string> labels;
  NormalizationStats stats;
  std::vector<Observed> truth;

  explicit Fixture(std::uint64_t seed, std::size_t n = 5) {
    Rng rng(seed);
    seqs = toy_sequences({.sequences = n}, rng);
    for (std::size_t i = 0; i < n; ++i) labels.push_back("2020-01-0" + std::to_string(i + 1));
    stats.density_mean = 998.0;
    stats.density_std = 1.0;
    for (const auto& s : seqs) truth.push_back(Observed::of(s));
  }
};

TrainedModel random_model(ModelKind kind, std::uint64_t seed) {
  Rng rng(seed);
  return {kind, toy_arch(), init_depth_params(kind, toy_arch(), rng)};
}

bool sets_equal(const std::vector<McSampleSet>& a, const std::vector<McSampleSet>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].date != b[i].date || a[i].temperature != b[i].temperature || a[i].density != b[i].density ||
        a[i].mask_seeds != b[i].mask_seeds) {
      return false;
    }
  }
  return true;
}

TEST(McSampling, DefaultsToOneHundredSamples) {
  const McConfig cfg;
  EXPECT_EQ(cfg.samples, 100u);
  EXPECT_EQ(cfg.dropout, 0.2);
  Fixture f(1, 2);
  const auto sets = mc_sample(random_model(ModelKind::Pga, 1), f.seqs, f.labels, f.stats, cfg);
  ASSERT_EQ(sets.size(), 2u);
  EXPECT_EQ(sets[0].n_samples, 100u);
  EXPECT_EQ(sets[0].mask_seeds.size(), 100u);
  EXPECT_EQ(sets[1].date, "2020-01-02");
}

TEST(McSampling, ZeroDropoutRepeatsTheDeterministicPrediction) {
  Fixture f(2);
  for (auto kind : {ModelKind::Pga, ModelKind::Lstm}) {
    const auto model = random_model(kind, 2);
    const auto sets = mc_sample(model, f.seqs, f.labels, f.stats, {.samples = 10, .dropout = 0.0});
    const auto pred = predict(model, f.seqs);
    for (std::size_t i = 0; i < sets.size(); ++i) {
      for (std::size_t s = 0; s < 10; ++s) {
        for (std::size_t d = 0; d < sets[i].depths; ++d) {
          ASSERT_EQ(sets[i].temperature_at(s, d), pred.temperature.at(i, d));
        }
      }
    }
  }
}

TEST(McSampling, DropoutSpreadsTheSamples) {
  Fixture f(3);
  const auto sets = mc_sample(random_model(ModelKind::Pga, 3), f.seqs, f.labels, f.stats, {.samples = 30});
  const auto m = evaluate_samples(sets, f.truth, true);
  for (double v : m.depth_variance) EXPECT_GT(v, 0.0);
}

TEST(McSampling, DensityColumnsFollowTheModelKind) {
  Fixture f(4);
  const auto pga = random_model(ModelKind::Pga, 4);
  const auto sets = mc_sample(pga, f.seqs, f.labels, f.stats, {.samples = 4});
  Rng rng(mc_mask_seed(0, 2));
  const auto masks = DropoutMasks::sample(dropout_sites(pga.kind, pga.arch), f.seqs.size(), 0.2, rng);
  const auto pred = predict(pga, f.seqs, &masks);
  EXPECT_EQ(sets[1].density_at(2, 3), f.stats.denormalize_density(pred.density->at(1, 3)));
  EXPECT_EQ(sets[1].temperature_at(2, 3), pred.temperature.at(1, 3));

  const auto lstm_sets = mc_sample(random_model(ModelKind::Lstm, 4), f.seqs, f.labels, f.stats, {.samples = 4});
  EXPECT_EQ(lstm_sets[0].density_at(1, 2), physics::density_from_temperature(lstm_sets[0].temperature_at(1, 2)));
}

TEST(McSampling, DeterministicAndThreadIndependent) {
  Fixture f(5);
  const auto model = random_model(ModelKind::Pga, 5);
  const McConfig one{.samples = 12, .seed = 8, .threads = 1};
  const auto a = mc_sample(model, f.seqs, f.labels, f.stats, one);
  const auto b = mc_sample(model, f.seqs, f.labels, f.stats, one);
  auto threaded = one;
  threaded.threads = 3;
  const auto c = mc_sample(model, f.seqs, f.labels, f.stats, threaded);
  EXPECT_TRUE(sets_equal(a, b));
  EXPECT_TRUE(sets_equal(a, c));
  auto reseeded = one;
  reseeded.seed = 9;
  EXPECT_FALSE(sets_equal(a, mc_sample(model, f.seqs, f.labels, f.stats, reseeded)));
}

TEST(McSampling, PrefixOfSamplesIsStable) {
  Fixture f(6);
  const auto model = random_model(ModelKind::Lstm, 6);
  const auto few = mc_sample(model, f.seqs, f.labels, f.stats, {.samples = 3});
  const auto many = mc_sample(model, f.seqs, f.labels, f.stats, {.samples = 7});
  for (std::size_t i = 0; i < few.size(); ++i) {
    for (std::size_t k = 0; k < few[i].temperature.size(); ++k) EXPECT_EQ(few[i].temperature[k], many[i].temperature[k]);
  }
}

TEST(McSampling, InvalidInputsThrow) {
  Fixture f(7);
  const auto model = random_model(ModelKind::Pga, 7);
  EXPECT_THROW(mc_sample(model, f.seqs, f.labels, f.stats, {.samples = 0}), UsageError);
  EXPECT_THROW(mc_sample(model, f.seqs, f.labels, f.stats, {.dropout = 1.0}), UsageError);
  EXPECT_THROW(mc_sample(model, {}, {}, f.stats, {}), DataError);
  const std::vector<std::string> short_labels(2, "x");
  EXPECT_THROW(mc_sample(model, f.seqs, short_labels, f.stats, {}), ShapeError);
}

TEST(McSampling, MonotoneModelIsConsistentUnderDropout) {
  Fixture f(8, 12);
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto sets = mc_sample(random_model(ModelKind::Pga, seed), f.seqs, f.labels, f.stats,
                                {.samples = 20, .dropout = 0.3, .seed = seed});
    const auto m = evaluate_samples(sets, f.truth, true);
    EXPECT_EQ(m.inconsistency_per_sample, 0.0);
    EXPECT_EQ(m.inconsistency_mean, 0.0);
  }
}

TEST(Evaluation, RandomBaselineIsInconsistent) {
  Fixture f(12, 12);
  double total = 0.0;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto sets = mc_sample(random_model(ModelKind::Lstm, seed), f.seqs, f.labels, f.stats, {.samples = 20});
    total += evaluate_samples(sets, f.truth, false).inconsistency_per_sample;
  }
  EXPECT_GT(total, 0.0);
}

// ---- metrics -------------------------------------------------------------

McSampleSet two_rows(std::vector<double> a, std::vector<double> b) {
  McSampleSet s("d", 2, a.size(), 0.2);
  for (std::size_t d = 0; d < a.size(); ++d) {
    s.temperature[d] = a[d];
    s.temperature[a.size() + d] = b[d];
  }
  return s;
}

TEST(Rmse, RowsAtTruthScoreZero) {
  const std::vector<double> y{10.0, 20.0};
  const std::vector<double> mask{1.0, 1.0};
  const auto set = two_rows(y, y);
  EXPECT_EQ(rmse_per_sample(set, Observed{y, mask}).mean, 0.0);
  EXPECT_EQ(rmse_mean(set, Observed{y, mask}), 0.0);
}

TEST(Rmse, SymmetricErrorsExample) {
  const std::vector<double> y{10.0, 20.0};
  const std::vector<double> mask{1.0, 1.0};
  const Observed truth{y, mask};
  const auto set = two_rows({11.0, 21.0}, {9.0, 19.0});
  const auto per = rmse_per_sample(set, truth);
  EXPECT_DOUBLE_EQ(per.mean, 1.0);
  EXPECT_DOUBLE_EQ(per.std, 0.0);
  EXPECT_DOUBLE_EQ(rmse_mean(set, truth), 0.0);
}

TEST(Rmse, MaskedCellsAreIgnored) {
  const std::vector<double> y{10.0, 0.0};
  const std::vector<double> mask{1.0, 0.0};
  const auto set = two_rows({13.0, 99.0}, {10.0, -99.0});
  const auto per = rmse_per_sample(set, Observed{y, mask});
  EXPECT_DOUBLE_EQ(per.mean, 1.5);
  EXPECT_DOUBLE_EQ(per.std, std::sqrt(4.5));
  EXPECT_DOUBLE_EQ(rmse_mean(set, Observed{y, mask}), 1.5);
  const std::vector<double> none{0.0, 0.0};
  EXPECT_THROW(rmse_mean(set, Observed{y, none}), DataError);
  const std::vector<double> wrong{1.0};
  EXPECT_THROW(rmse_mean(set, Observed{wrong, wrong}), ShapeError);
}

TEST(Rmse, MeanPredictionNeverWorseThanAverageSample) {
  Rng rng(9);
  for (int trial = 0; trial < 300; ++trial) {
    const std::size_t n = 2 + rng.below(20), depths = 1 + rng.below(6);
    McSampleSet s("d", n, depths, 0.2);
    for (auto& v : s.temperature) v = rng.uniform(0.0, 25.0);
    std::vector<double> y(depths), mask(depths, 1.0);
    for (auto& v : y) v = rng.uniform(0.0, 25.0);
    const Observed truth{y, mask};
    EXPECT_LE(rmse_mean(s, truth), rmse_per_sample(s, truth).mean * (1.0 + 1e-12));
  }
}

TEST(Percentile, GaussianOracles) {
  const double a = 1.0 / std::sqrt(2.0);  // {-a, a}: mean 0, unbiased std 1
  const std::vector<double> s{-a, a};
  EXPECT_NEAR(two_tailed_percentile(s, 1.0).value, 68.268949213708590, 1e-9);
  EXPECT_NEAR(two_tailed_percentile(s, -2.0).value, 95.449973610364159, 1e-9);
  EXPECT_EQ(two_tailed_percentile(s, 0.0).value, 0.0);
  EXPECT_FALSE(two_tailed_percentile(s, 0.0).degenerate);
}

TEST(Percentile, DegenerateAndInvalidSamples) {
  const std::vector<double> flat{3.0, 3.0, 3.0};
  EXPECT_TRUE(two_tailed_percentile(flat, 3.0).degenerate);
  EXPECT_EQ(two_tailed_percentile(flat, 3.0).value, 0.0);
  EXPECT_EQ(two_tailed_percentile(flat, 4.0).value, 100.0);
  const std::vector<double> one{1.0};
  EXPECT_THROW(two_tailed_percentile(one, 1.0), DataError);
}

TEST(Percentile, MonotoneInDistanceAndBounded) {
  Rng rng(10);
  std::vector<double> s(50);
  for (auto& v : s) v = rng.normal(5.0, 2.0);
  double prev = -1.0;
  const auto mu = mean_std(s).mean;
  for (int k = 0; k < 200; ++k) {
    const double p = two_tailed_percentile(s, mu + 0.05 * k).value;
    EXPECT_GE(p, prev);
    EXPECT_LE(p, 100.0);
    EXPECT_NEAR(two_tailed_percentile(s, mu - 0.05 * k).value, p, 1e-9);
    prev = p;
  }
}

TEST(Calibration, GridAndEndpoints) {
  const std::vector<double> p{10.0, 50.0, 90.0};
  const auto c = calibration_curve(p);
  ASSERT_EQ(c.x.size(), 101u);
  EXPECT_EQ(c.y.front(), 0.0);
  EXPECT_EQ(c.y.back(), 100.0);
  EXPECT_EQ(c.y[9], 0.0);
  EXPECT_NEAR(c.y[10], 100.0 / 3.0, 1e-12);
  EXPECT_NEAR(c.y[50], 200.0 / 3.0, 1e-12);
  for (std::size_t i = 1; i < c.y.size(); ++i) EXPECT_GE(c.y[i], c.y[i - 1]);
  EXPECT_THROW(calibration_curve(std::vector<double>{}), DataError);
}

TEST(Calibration, PerfectlyUniformPercentilesLieOnDiagonal) {
  std::vector<double> p;
  for (int i = 0; i < 1000; ++i) p.push_back(0.1 * i + 0.05);
  EXPECT_LE(calibration_curve(p).max_deviation(), 0.1 + 1e-9);
}

TEST(Evaluation, ReportFieldsAreFinite) {
  Fixture f(11, 8);
  for (auto kind : {ModelKind::Pga, ModelKind::Lstm}) {
    const auto sets = mc_sample(random_model(kind, 11), f.seqs, f.labels, f.stats, {.samples = 10});
    const auto m = evaluate_samples(sets, f.truth, is_monotone(kind));
    EXPECT_EQ(m.sample_rmse.size(), 10u);
    EXPECT_TRUE(std::isfinite(m.rmse_per_sample.mean));
    EXPECT_TRUE(std::isfinite(m.rmse_per_sample.std));
    EXPECT_TRUE(std::isfinite(m.rmse_mean));
    EXPECT_LE(m.rmse_mean, m.rmse_per_sample.mean * (1.0 + 1e-12));
    EXPECT_GE(m.inconsistency_per_sample, 0.0);
    EXPECT_LE(m.inconsistency_per_sample, 1.0);
    EXPECT_EQ(m.dates, f.labels);
    EXPECT_EQ(m.date_rmse_mean.size(), 8u);
    for (double v : m.date_rmse_mean) EXPECT_TRUE(std::isfinite(v));
    for (double v : m.percentiles) {
      EXPECT_GE(v, 0.0);
      EXPECT_LE(v, 100.0);
    }
    std::size_t observed = 0;
    for (const auto& s : f.seqs) observed += s.observations();
    EXPECT_EQ(m.percentiles.size() + m.degenerate, observed);
  }
}

}  // namespace
}  // namespace pgalstm
