#pragma once

#include <cmath>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "pgalstm/core/tape.hpp"
#include "pgalstm/errors.hpp"
#include "pgalstm/uq/samples.hpp"

namespace pgalstm::physics {

// Coefficients of the freshwater temperature-density relation.
inline constexpr double kRhoScale = 1000.0;
inline constexpr double kTempOffsetA = 288.9414;
inline constexpr double kTempOfMaxDensity = 3.9863;
inline constexpr double kDenomScale = 508929.2;
inline constexpr double kTempOffsetB = 68.12963;

// Temperatures at or below this make the denominator vanish.
inline constexpr double kMinTemperature = -kTempOffsetB;

inline void check_temperature(double y) {
  if (!(y > kMinTemperature) || !std::isfinite(y)) {
    throw DataError("temperature " + std::to_string(y) + " degC outside the density relation's domain");
  }
}

// Water density (kg/m^3) of temperature y (degC).
inline double density_from_temperature(double y) {
  check_temperature(y);
  const double t = y - kTempOfMaxDensity;
  return kRhoScale * (1.0 - (y + kTempOffsetA) * t * t / (kDenomScale * (y + kTempOffsetB)));
}

// d rho / d y.
inline double density_derivative(double y) {
  check_temperature(y);
  const double t = y - kTempOfMaxDensity;
  const double num = (y + kTempOffsetA) * t * t;
  const double dnum = t * t + 2.0 * (y + kTempOffsetA) * t;
  const double den = kDenomScale * (y + kTempOffsetB);
  return -kRhoScale * (dnum * den - num * kDenomScale) / (den * den);
}

// Density relation as a tape primitive, so losses on predicted temperatures
// can be expressed in density units.
inline std::shared_ptr<const ElementwiseFn> density_fn() {
  static const auto fn = std::make_shared<const ElementwiseFn>(
      ElementwiseFn{"water_density", density_from_temperature, density_derivative});
  return fn;
}

inline Var density(Var temperature) { return map(temperature, density_fn()); }

// Inverse of the density relation on one branch, by bisection. `warm`
// selects the branch above the temperature of maximum density. Densities
// above the maximum map to the branch point.
inline double temperature_from_density(double rho, bool warm) {
  if (rho >= density_from_temperature(kTempOfMaxDensity)) return kTempOfMaxDensity;
  double lo = warm ? kTempOfMaxDensity : -30.0;
  double hi = warm ? 60.0 : kTempOfMaxDensity;
  for (int i = 0; i < 200 && hi - lo > 0.0; ++i) {
    const double mid = 0.5 * (lo + hi);
    if (mid == lo || mid == hi) break;
    const double r = density_from_temperature(mid);
    // warm branch: density falls with temperature; cold branch: it rises
    const bool go_up = warm ? r > rho : r < rho;
    (go_up ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

struct ToleranceSpec {
  double density_tolerance = 1e-5;  // kg/m^3

  void validate() const {
    if (!(density_tolerance >= 0.0)) throw UsageError("density tolerance must be >= 0");
  }
};

// Densities ordered surface to bottom, with strictly increasing depth
// indices.
struct DensityProfile {
  std::vector<int> depth_index;
  std::vector<double> density;

  void validate() const {
    if (depth_index.size() != density.size()) {
      throw ShapeError("DensityProfile: index and density lengths differ");
    }
    for (std::size_t i = 1; i < depth_index.size(); ++i) {
      if (depth_index[i] <= depth_index[i - 1]) {
        throw DataError("DensityProfile: depth indices must be strictly increasing");
      }
    }
  }
};

struct ViolationCount {
  std::size_t violations = 0;
  std::size_t pairs = 0;

  ViolationCount& operator+=(const ViolationCount& o) {
    violations += o.violations;
    pairs += o.pairs;
    return *this;
  }
  bool operator==(const ViolationCount&) const = default;
};

// Counts consecutive pairs with rho[d+1] < rho[d] - tolerance.
inline ViolationCount monotonicity_violation_count(std::span<const double> densities,
                                                   const ToleranceSpec& tol = {}) {
  tol.validate();
  if (densities.size() < 2) throw DataError("monotonicity check needs at least 2 depths");
  ViolationCount c;
  c.pairs = densities.size() - 1;
  for (std::size_t d = 0; d + 1 < densities.size(); ++d) {
    if (densities[d + 1] < densities[d] - tol.density_tolerance) ++c.violations;
  }
  return c;
}

inline ViolationCount monotonicity_violation_count(const DensityProfile& profile,
                                                   const ToleranceSpec& tol = {}) {
  profile.validate();
  return monotonicity_violation_count(std::span<const double>(profile.density), tol);
}

struct Inconsistency {
  double fraction = 0.0;
  ViolationCount total;
  std::vector<std::string> dates;
  std::vector<double> per_date_fraction;
};

// Fraction of violated consecutive-depth pairs, pooled over every sample
// row and date before dividing. Uses each set's density matrix (already in
// kg/m^3; for temperature-only models it holds rho(T)).
inline Inconsistency physical_inconsistency(std::span<const McSampleSet> sets,
                                            const ToleranceSpec& tol = {}) {
  if (sets.empty()) throw DataError("physical_inconsistency: empty sample set");
  Inconsistency out;
  for (const auto& set : sets) {
    set.validate();
    if (set.n_samples == 0) throw DataError("physical_inconsistency: date " + set.date + " has no samples");
    ViolationCount date_count;
    for (std::size_t s = 0; s < set.n_samples; ++s) {
      date_count += monotonicity_violation_count(set.density_row(s), tol);
    }
    out.total += date_count;
    out.dates.push_back(set.date);
    out.per_date_fraction.push_back(static_cast<double>(date_count.violations) /
                                    static_cast<double>(date_count.pairs));
  }
  out.fraction = static_cast<double>(out.total.violations) / static_cast<double>(out.total.pairs);
  return out;
}

inline Inconsistency physical_inconsistency(const McSampleSet& set, const ToleranceSpec& tol = {}) {
  return physical_inconsistency(std::span<const McSampleSet>(&set, 1), tol);
}

}  // namespace pgalstm::physics
