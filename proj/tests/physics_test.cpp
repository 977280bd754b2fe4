#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>
#include <vector>

#include "pgalstm/core/rng.hpp"
#include "pgalstm/physics.hpp"
#include "support.hpp"

namespace pgalstm {
namespace {

using physics::density_from_temperature;
using physics::monotonicity_violation_count;
using physics::physical_inconsistency;
using physics::ToleranceSpec;
using physics::ViolationCount;

// High-precision evaluations of the density relation.
TEST(Density, OracleValues) {
  EXPECT_EQ(density_from_temperature(3.9863), 1000.0);
  EXPECT_NEAR(density_from_temperature(0.0), 999.8675791619049, 1e-9);
  EXPECT_NEAR(density_from_temperature(4.0), 999.99999850221039, 1e-9);
  EXPECT_NEAR(density_from_temperature(10.0), 999.72810799009105, 1e-9);
  EXPECT_NEAR(density_from_temperature(25.0), 997.07511766644414, 1e-9);
  EXPECT_NEAR(density_from_temperature(5.0), 999.99188424541456, 1e-9);
  EXPECT_NEAR(density_from_temperature(3.0), 999.99215476723263, 1e-9);
}

TEST(Density, FourDegreesIsWithinTwoMillionthsOfTheMaximum) {
  const double gap = 1000.0 - density_from_temperature(4.0);
  EXPECT_GT(gap, 0.0);
  EXPECT_NEAR(gap, 1.4977896e-6, 1e-12);
}

TEST(Density, GridScanMaximumNearBranchPoint) {
  double best_y = 0.0, best = -1.0;
  for (int i = 0; i <= 300000; ++i) {
    const double y = i * 1e-4;
    const double r = density_from_temperature(y);
    if (r > best) {
      best = r;
      best_y = y;
    }
  }
  EXPECT_NEAR(best_y, 3.9863, 0.01);
}

TEST(Density, StrictMonotoneBranches) {
  double prev = density_from_temperature(4.0);
  for (int i = 1; i < 41000; ++i) {
    const double r = density_from_temperature(4.0 + i * 1e-3);
    ASSERT_LT(r, prev) << "at " << 4.0 + i * 1e-3;
    prev = r;
  }
  prev = density_from_temperature(-5.0);
  for (int i = 1; i < 8980; ++i) {
    const double r = density_from_temperature(-5.0 + i * 1e-3);
    ASSERT_GT(r, prev) << "at " << -5.0 + i * 1e-3;
    prev = r;
  }
}

TEST(Density, DomainViolationsThrow) {
  EXPECT_THROW(density_from_temperature(-68.12963), DataError);
  EXPECT_THROW(density_from_temperature(-100.0), DataError);
  EXPECT_THROW(density_from_temperature(std::nan("")), DataError);
  EXPECT_NO_THROW(density_from_temperature(-68.0));
}

TEST(Density, DerivativeMatchesFiniteDifferences) {
  for (double y : {-4.0, 0.0, 3.0, 3.9863, 4.5, 10.0, 25.0, 40.0}) {
    const double h = 1e-5;
    const double fd = (density_from_temperature(y + h) - density_from_temperature(y - h)) / (2 * h);
    EXPECT_NEAR(physics::density_derivative(y), fd, 1e-6) << y;
  }
  EXPECT_EQ(physics::density_derivative(3.9863), 0.0);
}

TEST(Density, TapePrimitiveMatchesScalarFunction) {
  Tape t;
  const auto y = t.leaf(Tensor::vector({2.0, 12.0}));
  const auto rho = physics::density(y);
  EXPECT_EQ(rho.value()[0], density_from_temperature(2.0));
  EXPECT_EQ(rho.value()[1], density_from_temperature(12.0));
  const auto g = t.backward(sum(rho)).of(y);
  EXPECT_EQ(g[1], physics::density_derivative(12.0));
}

TEST(Density, InverseRecoversTemperatureOnEachBranch) {
  for (double y : {5.0, 12.5, 27.0}) {
    EXPECT_NEAR(physics::temperature_from_density(density_from_temperature(y), true), y, 1e-9);
  }
  for (double y : {-3.0, 0.5, 2.0}) {
    EXPECT_NEAR(physics::temperature_from_density(density_from_temperature(y), false), y, 1e-9);
  }
  EXPECT_EQ(physics::temperature_from_density(1000.5, true), 3.9863);
}

TEST(Violations, Examples) {
  const std::vector<double> a{1000.0, 999.0, 1001.0};
  EXPECT_EQ(monotonicity_violation_count(a), (ViolationCount{1, 2}));
  const std::vector<double> b{1000.0, 1000.0 - 5e-6};
  EXPECT_EQ(monotonicity_violation_count(b), (ViolationCount{0, 1}));
  const std::vector<double> c{1000.0, 1000.0 - 2e-5};
  EXPECT_EQ(monotonicity_violation_count(c), (ViolationCount{1, 1}));
  EXPECT_EQ(monotonicity_violation_count(c, ToleranceSpec{1e-4}), (ViolationCount{0, 1}));
}

TEST(Violations, NondecreasingProfilesNeverViolate) {
  Rng rng(1);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 2 + rng.below(40);
    std::vector<double> d(n);
    double v = 995.0;
    for (auto& x : d) {
      if (!rng.bernoulli(0.3)) v += rng.uniform(0.0, 0.5);
      x = v;
    }
    EXPECT_EQ(monotonicity_violation_count(d, ToleranceSpec{0.0}), (ViolationCount{0, n - 1}));
  }
}

TEST(Violations, Errors) {
  const std::vector<double> one{1000.0};
  EXPECT_THROW(monotonicity_violation_count(one), DataError);
  const std::vector<double> two{1.0, 2.0};
  EXPECT_THROW(monotonicity_violation_count(two, ToleranceSpec{-1.0}), UsageError);
  physics::DensityProfile bad{{0, 2, 2}, {1, 2, 3}};
  EXPECT_THROW(monotonicity_violation_count(bad), DataError);
  physics::DensityProfile ragged{{0, 1}, {1}};
  EXPECT_THROW(monotonicity_violation_count(ragged), ShapeError);
  physics::DensityProfile ok{{0, 3, 7}, {1000, 999, 1001}};
  EXPECT_EQ(monotonicity_violation_count(ok), (ViolationCount{1, 2}));
}

McSampleSet make_set(std::string date, std::vector<std::vector<double>> rows) {
  McSampleSet s(std::move(date), rows.size(), rows.at(0).size(), 0.2);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    std::copy(rows[r].begin(), rows[r].end(), s.density.begin() + static_cast<long>(r * s.depths));
  }
  return s;
}

TEST(Inconsistency, Examples) {
  EXPECT_EQ(physical_inconsistency(make_set("a", {{999, 1000, 1001}})).fraction, 0.0);
  EXPECT_EQ(physical_inconsistency(make_set("a", {{1000, 999, 1001}})).fraction, 0.5);
  const auto pooled = std::vector<McSampleSet>{make_set("a", {{1000, 999, 1001}, {1, 2, 3}}),
                                               make_set("b", {{3, 2, 1}, {1, 2, 3}})};
  const auto inc = physical_inconsistency(pooled);
  EXPECT_EQ(inc.total, (ViolationCount{3, 8}));
  EXPECT_EQ(inc.fraction, 3.0 / 8.0);
  ASSERT_EQ(inc.per_date_fraction.size(), 2u);
  EXPECT_EQ(inc.per_date_fraction[0], 0.25);
  EXPECT_EQ(inc.per_date_fraction[1], 0.5);
}

TEST(Inconsistency, Errors) {
  EXPECT_THROW(physical_inconsistency(std::span<const McSampleSet>{}), DataError);
  McSampleSet empty("x", 0, 3, 0.2);
  EXPECT_THROW(physical_inconsistency(empty), DataError);
  McSampleSet ragged("x", 2, 3, 0.2);
  ragged.density.pop_back();
  EXPECT_THROW(physical_inconsistency(ragged), ShapeError);
}

TEST(Inconsistency, InvariantToSampleAndDateReordering) {
  Rng rng(17);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<McSampleSet> sets;
    for (int d = 0; d < 4; ++d) {
      std::vector<std::vector<double>> rows(6, std::vector<double>(5));
      for (auto& row : rows) {
        for (auto& v : row) v = 1000.0 + rng.normal();
      }
      sets.push_back(make_set("d" + std::to_string(d), rows));
    }
    const double base = physical_inconsistency(sets).fraction;
    EXPECT_GE(base, 0.0);
    EXPECT_LE(base, 1.0);

    auto shuffled = sets;
    rng.shuffle(shuffled);
    for (auto& s : shuffled) {
      std::vector<std::size_t> order(s.n_samples);
      std::iota(order.begin(), order.end(), 0);
      rng.shuffle(order);
      auto copy = s;
      for (std::size_t r = 0; r < order.size(); ++r) {
        std::copy_n(s.density.begin() + static_cast<long>(order[r] * s.depths), s.depths,
                    copy.density.begin() + static_cast<long>(r * s.depths));
      }
      s = copy;
    }
    EXPECT_EQ(physical_inconsistency(shuffled).fraction, base);
  }
}

}  // namespace
}  // namespace pgalstm
