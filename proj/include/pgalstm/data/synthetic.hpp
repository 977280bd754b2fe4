#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <string>
#include <vector>

#include "pgalstm/core/rng.hpp"
#include "pgalstm/data/dataset.hpp"
#include "pgalstm/errors.hpp"
#include "pgalstm/physics.hpp"

namespace pgalstm {

struct SyntheticConfig {
  int years = 5;
  std::size_t depths = 28;
  double depth_step = 0.33;         // m between grid depths
  double noise_sd = 0.25;           // degC observation noise
  double thermocline_depth = 3.0;   // m, mid-summer thermocline centre
  double observation_rate = 0.6;    // fraction of dates with a profile
  double depth_dropout = 0.05;      // per-depth missing rate on observed dates
  bool simulator_column = false;
  std::string start_date = "2013-01-01";
};

namespace synthetic_detail {

constexpr double kYear = 365.25;

inline double seasonal(int doy, double phase_day) {
  return std::cos(2.0 * std::numbers::pi * (doy - phase_day) / kYear);
}

// 0 outside the stratified season, ramps 0 -> 1 from late April through
// October (hypolimnion warming / thermocline deepening).
inline double summer_progress(int doy) { return std::clamp((doy - 110.0) / 190.0, 0.0, 1.0); }

// Stratification strength: peaks mid-summer, zero from November to mid April.
inline double strat_strength(int doy) {
  if (doy < 105 || doy > 310) return 0.0;
  return std::sin(std::numbers::pi * (doy - 105.0) / 205.0);
}

struct DayState {
  double surface;
  double bottom;
  double thermocline;
  double width;
};

// Logistic thermocline profile pinned to the surface temperature at z = 0.
inline double profile_temperature(const DayState& s, double z) {
  const auto logistic = [](double x) { return 1.0 / (1.0 + std::exp(-x)); };
  const double shape = logistic((s.thermocline - z) / s.width) / logistic(s.thermocline / s.width);
  return s.bottom + (s.surface - s.bottom) * shape;
}

}  // namespace synthetic_detail

// Seasonal logistic-thermocline lake. Surface temperature follows an annual
// cycle between ~0 and ~29 degC nudged by a smoothed air-temperature
// anomaly; the hypolimnion sits near 4 degC in winter and warms through
// summer; the thermocline deepens and sharpens with the season. Noise is
// added in temperature space and each profile is then clipped downward so
// density never decreases with depth.
inline LakeDataset generate_synthetic(const SyntheticConfig& cfg, std::uint64_t seed) {
  using namespace synthetic_detail;
  if (cfg.years <= 0 || cfg.depths == 0 || !(cfg.depth_step > 0) || cfg.noise_sd < 0 ||
      !(cfg.thermocline_depth > 0)) {
    throw UsageError("synthetic config needs positive years, depths, depth step and thermocline depth");
  }
  if (!(cfg.observation_rate > 0 && cfg.observation_rate <= 1) || cfg.depth_dropout < 0 ||
      cfg.depth_dropout >= 1) {
    throw UsageError("synthetic observation rates out of range");
  }
  const Date start = Date::parse(cfg.start_date);
  const Date end = start.plus_years(cfg.years);
  const std::size_t n_dates = static_cast<std::size_t>(days_between(start, end));

  LakeDataset ds;
  ds.schema = CsvSchema::lake(cfg.simulator_column);
  for (std::size_t d = 0; d < cfg.depths; ++d) {
    // round to centimetres so the CSV grid reads cleanly
    ds.depths.push_back(std::round(static_cast<double>(d) * cfg.depth_step * 100.0) / 100.0);
  }
  for (std::size_t t = 0; t < n_dates; ++t) ds.dates.push_back(start.plus_days(static_cast<int>(t)));
  ds.resize(n_dates, cfg.depths);

  Rng weather = Rng(seed).derive(1);
  Rng noise = Rng(seed).derive(2);
  Rng sampling = Rng(seed).derive(3);

  double anomaly = 0.0;     // AR(1) air temperature anomaly
  double smoothed = 0.0;    // ~1 week exponential smoothing of the anomaly
  double cloud = 0.5;
  double gdd = 0.0;
  int last_year = start.year();
  std::vector<double> temps(cfg.depths);

  for (std::size_t t = 0; t < n_dates; ++t) {
    const Date date = ds.dates[t];
    const int doy = date.day_of_year();
    if (date.year() != last_year) {
      gdd = 0.0;
      last_year = date.year();
    }
    anomaly = 0.85 * anomaly + weather.normal(0.0, 2.5);
    smoothed = 0.8 * smoothed + 0.2 * anomaly;
    cloud = std::clamp(0.7 * cloud + 0.3 * weather.uniform(), 0.0, 1.0);

    const double air = 7.0 - 15.0 * seasonal(doy, 15.0) + anomaly;
    const double shortwave =
        std::max(0.0, 190.0 - 130.0 * seasonal(doy, 172.0)) * (1.0 - 0.6 * cloud);
    const double longwave = 290.0 + 3.2 * air + 40.0 * cloud;
    const double humidity = std::clamp(62.0 + 25.0 * cloud + weather.normal(0.0, 4.0), 20.0, 100.0);
    const double wind = std::max(0.2, 4.0 + 1.5 * std::abs(weather.normal()) - 1.0 * cloud);
    const double rain = cloud > 0.62 ? -6.0 * std::log(1.0 - weather.uniform()) : 0.0;
    gdd += std::max(0.0, air - 10.0);

    DayState s;
    s.surface = std::clamp(14.5 - 14.0 * seasonal(doy, 30.0) + 0.6 * smoothed, 0.0, 30.0);
    const bool frozen = s.surface < 1.0;
    if (frozen) s.surface = std::max(s.surface, 0.1);
    const double progress = summer_progress(doy);
    const double strength = strat_strength(doy);
    s.bottom = s.surface >= physics::kTempOfMaxDensity
                   ? std::min(s.surface, physics::kTempOfMaxDensity + 5.0 * progress + 0.5)
                   : physics::kTempOfMaxDensity - 0.25 * (physics::kTempOfMaxDensity - s.surface);
    s.thermocline = cfg.thermocline_depth * (0.6 + 0.8 * progress);
    s.width = 0.35 + 1.5 * (1.0 - strength);
    const bool snowing = rain > 0 && air < 0.0;

    for (std::size_t d = 0; d < cfg.depths; ++d) {
      const double f[] = {static_cast<double>(doy), air, shortwave, longwave, humidity, wind,
                          rain, gdd, frozen ? 1.0 : 0.0, snowing ? 1.0 : 0.0};
      for (std::size_t k = 0; k < std::size(f); ++k) ds.feature(t, d, k) = f[k];
    }

    // labels: noisy profile, then enforce nondecreasing density downward
    for (std::size_t d = 0; d < cfg.depths; ++d) {
      temps[d] = std::max(0.0, profile_temperature(s, ds.depths[d]) + noise.normal(0.0, cfg.noise_sd));
    }
    for (std::size_t d = 1; d < cfg.depths; ++d) {
      const double above = physics::density_from_temperature(temps[d - 1]);
      if (physics::density_from_temperature(temps[d]) >= above) continue;
      temps[d] = physics::temperature_from_density(above, temps[d] > physics::kTempOfMaxDensity);
      if (physics::density_from_temperature(temps[d]) < above) temps[d] = temps[d - 1];
    }
    if (cfg.simulator_column) {
      for (std::size_t d = 0; d < cfg.depths; ++d) {
        ds.feature(t, d, 10) = temps[d] + 0.4 + noise.normal(0.0, 0.8);
      }
    }

    const bool observed_date = sampling.bernoulli(cfg.observation_rate);
    for (std::size_t d = 0; d < cfg.depths; ++d) {
      const bool keep = observed_date && !sampling.bernoulli(cfg.depth_dropout);
      if (keep) ds.set_label(t, d, temps[d]);
    }
  }
  return ds;
}

}  // namespace pgalstm
