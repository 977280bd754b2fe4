#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "pgalstm/data/sequences.hpp"
#include "pgalstm/errors.hpp"
#include "pgalstm/physics.hpp"
#include "pgalstm/uq/samples.hpp"

namespace pgalstm {

struct MeanStd {
  double mean = 0.0;
  double std = 0.0;  // unbiased; 0 for fewer than two values
};

inline MeanStd mean_std(std::span<const double> v) {
  if (v.empty()) throw DataError("mean_std of no values");
  MeanStd out;
  for (double x : v) out.mean += x;
  out.mean /= static_cast<double>(v.size());
  if (v.size() < 2) return out;
  double ss = 0.0;
  for (double x : v) ss += (x - out.mean) * (x - out.mean);
  out.std = std::sqrt(ss / static_cast<double>(v.size() - 1));
  return out;
}

// Ground truth for one date: temperatures and a 0/1 observation mask.
struct Observed {
  std::span<const double> temperature;
  std::span<const double> mask;

  static Observed of(const DepthSequence& s) { return {s.temperature, s.mask}; }
};

namespace detail {

struct SquaredError {
  double sum = 0.0;
  std::size_t n = 0;
  void add(double e) {
    sum += e * e;
    ++n;
  }
  double rmse() const {
    if (n == 0) throw DataError("RMSE over an empty observation mask");
    return std::sqrt(sum / static_cast<double>(n));
  }
};

inline void check_alignment(const McSampleSet& set, const Observed& truth) {
  set.validate();
  if (truth.temperature.size() != set.depths || truth.mask.size() != set.depths) {
    throw ShapeError("truth for date " + set.date + " does not match the sample depth count");
  }
}

inline double row_mean(const McSampleSet& set, std::size_t d, bool density) {
  double m = 0.0;
  for (std::size_t s = 0; s < set.n_samples; ++s) m += density ? set.density_at(s, d) : set.temperature_at(s, d);
  return m / static_cast<double>(set.n_samples);
}

}  // namespace detail

// RMSE of each sample row over every observed cell of every date.
inline std::vector<double> sample_rmses(std::span<const McSampleSet> sets, std::span<const Observed> truth) {
  if (sets.empty() || sets.size() != truth.size()) throw ShapeError("one truth profile per sample set required");
  const std::size_t n = sets[0].n_samples;
  std::vector<detail::SquaredError> acc(n);
  for (std::size_t i = 0; i < sets.size(); ++i) {
    detail::check_alignment(sets[i], truth[i]);
    if (sets[i].n_samples != n) throw ShapeError("sample sets differ in sample count");
    for (std::size_t d = 0; d < sets[i].depths; ++d) {
      if (truth[i].mask[d] == 0.0) continue;
      for (std::size_t s = 0; s < n; ++s) acc[s].add(sets[i].temperature_at(s, d) - truth[i].temperature[d]);
    }
  }
  std::vector<double> out;
  for (const auto& a : acc) out.push_back(a.rmse());
  return out;
}

// Average (and unbiased spread) of the per-row RMSEs.
inline MeanStd rmse_per_sample(std::span<const McSampleSet> sets, std::span<const Observed> truth) {
  const auto r = sample_rmses(sets, truth);
  return mean_std(r);
}

// RMSE of the row-averaged prediction.
inline double rmse_mean(std::span<const McSampleSet> sets, std::span<const Observed> truth) {
  if (sets.empty() || sets.size() != truth.size()) throw ShapeError("one truth profile per sample set required");
  detail::SquaredError acc;
  for (std::size_t i = 0; i < sets.size(); ++i) {
    detail::check_alignment(sets[i], truth[i]);
    for (std::size_t d = 0; d < sets[i].depths; ++d) {
      if (truth[i].mask[d] != 0.0) acc.add(detail::row_mean(sets[i], d, false) - truth[i].temperature[d]);
    }
  }
  return acc.rmse();
}

inline MeanStd rmse_per_sample(const McSampleSet& set, const Observed& truth) {
  return rmse_per_sample(std::span<const McSampleSet>(&set, 1), std::span<const Observed>(&truth, 1));
}

inline double rmse_mean(const McSampleSet& set, const Observed& truth) {
  return rmse_mean(std::span<const McSampleSet>(&set, 1), std::span<const Observed>(&truth, 1));
}

struct Percentile {
  double value = 0.0;       // in [0, 100]
  bool degenerate = false;  // samples had zero spread
};

// Fits N(mu, s^2) to the samples (unbiased s) and returns
// 100 * P(|X - mu| <= |y - mu|).
inline Percentile two_tailed_percentile(std::span<const double> samples, double y) {
  if (samples.size() < 2) throw DataError("percentile needs at least two samples");
  const auto [mu, s] = mean_std(samples);
  if (s == 0.0) return {y == mu ? 0.0 : 100.0, true};
  return {100.0 * std::erf(std::abs(y - mu) / (s * std::numbers::sqrt2)), false};
}

struct CalibrationCurve {
  std::vector<double> x;  // percentile grid 0, 1, ..., 100
  std::vector<double> y;  // % of observations with percentile <= x

  double max_deviation() const {
    double m = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) m = std::max(m, std::abs(y[i] - x[i]));
    return m;
  }
};

// Cumulative share of observations within each percentile. The curve is
// pinned to (0, 0); observations landing exactly on the sample mean enter
// from x = 1 onwards.
inline CalibrationCurve calibration_curve(std::span<const double> percentiles) {
  if (percentiles.empty()) throw DataError("calibration curve needs at least one observation");
  std::vector<double> sorted(percentiles.begin(), percentiles.end());
  std::sort(sorted.begin(), sorted.end());
  CalibrationCurve c;
  for (int x = 0; x <= 100; ++x) {
    c.x.push_back(x);
    if (x == 0) {
      c.y.push_back(0.0);
      continue;
    }
    const auto within = std::upper_bound(sorted.begin(), sorted.end(), static_cast<double>(x)) - sorted.begin();
    c.y.push_back(100.0 * static_cast<double>(within) / static_cast<double>(sorted.size()));
  }
  return c;
}

// Metrics of one set of MC samples (one trained model) on the test dates.
struct RunMetrics {
  std::vector<double> sample_rmse;
  MeanStd rmse_per_sample;
  double rmse_mean = 0.0;
  double inconsistency_per_sample = 0.0;
  double inconsistency_mean = 0.0;
  std::vector<std::string> dates;
  std::vector<double> date_inconsistency;
  std::vector<double> date_rmse_per_sample;  // NaN for dates without observations
  std::vector<double> date_rmse_mean;
  std::vector<double> depth_variance;  // mean over dates of the between-sample variance
  std::vector<double> percentiles;     // non-degenerate observations only
  std::size_t degenerate = 0;
};

// `density_is_output` selects how the mean prediction's density is formed:
// the mean of the sampled densities (density-predicting model) or the
// density of the mean temperature.
inline RunMetrics evaluate_samples(std::span<const McSampleSet> sets, std::span<const Observed> truth,
                                   bool density_is_output, const physics::ToleranceSpec& tol = {}) {
  if (sets.empty()) throw DataError("evaluation needs at least one test date");
  tol.validate();
  RunMetrics m;
  m.sample_rmse = sample_rmses(sets, truth);
  m.rmse_per_sample = mean_std(m.sample_rmse);
  m.rmse_mean = rmse_mean(sets, truth);

  const auto inc = physics::physical_inconsistency(sets, tol);
  m.inconsistency_per_sample = inc.fraction;
  m.dates = inc.dates;
  m.date_inconsistency = inc.per_date_fraction;

  physics::ViolationCount mean_count;
  const std::size_t depths = sets[0].depths;
  m.depth_variance.assign(depths, 0.0);
  std::vector<double> column;
  for (std::size_t i = 0; i < sets.size(); ++i) {
    const auto& set = sets[i];
    std::vector<double> mean_density(depths);
    bool any_observed = false;
    for (std::size_t d = 0; d < depths; ++d) {
      mean_density[d] = density_is_output
                            ? detail::row_mean(set, d, true)
                            : physics::density_from_temperature(detail::row_mean(set, d, false));
      column.assign(set.n_samples, 0.0);
      for (std::size_t s = 0; s < set.n_samples; ++s) column[s] = set.temperature_at(s, d);
      const auto ms = mean_std(column);
      m.depth_variance[d] += ms.std * ms.std;
      if (truth[i].mask[d] == 0.0) continue;
      any_observed = true;
      if (set.n_samples < 2) continue;
      const auto p = two_tailed_percentile(column, truth[i].temperature[d]);
      if (p.degenerate) {
        ++m.degenerate;
      } else {
        m.percentiles.push_back(p.value);
      }
    }
    mean_count += physics::monotonicity_violation_count(mean_density, tol);
    if (any_observed) {
      m.date_rmse_per_sample.push_back(rmse_per_sample(set, truth[i]).mean);
      m.date_rmse_mean.push_back(rmse_mean(set, truth[i]));
    } else {
      m.date_rmse_per_sample.push_back(std::nan(""));
      m.date_rmse_mean.push_back(std::nan(""));
    }
  }
  for (auto& v : m.depth_variance) v /= static_cast<double>(sets.size());
  m.inconsistency_mean = static_cast<double>(mean_count.violations) / static_cast<double>(mean_count.pairs);
  return m;
}

}  // namespace pgalstm
