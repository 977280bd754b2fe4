#pragma once

#include <cmath>
#include <ostream>
#include <string>

#include <json.hpp>

#include "pgalstm/data/dataset.hpp"
#include "pgalstm/pipeline.hpp"
#include "pgalstm/training/train.hpp"

namespace pgalstm {

inline nlohmann::ordered_json to_json(const MeanStd& m) { return {{"mean", m.mean}, {"std", m.std}}; }

inline nlohmann::ordered_json to_json(const RunMetrics& m) {
  nlohmann::ordered_json j;
  j["rmse_per_sample"] = to_json(m.rmse_per_sample);
  j["rmse_mean"] = m.rmse_mean;
  j["inconsistency_per_sample"] = m.inconsistency_per_sample;
  j["inconsistency_mean"] = m.inconsistency_mean;
  j["calibration_observations"] = m.percentiles.size();
  j["degenerate_observations"] = m.degenerate;
  j["depth_variance"] = m.depth_variance;
  return j;
}

inline nlohmann::ordered_json to_json(const MetricsReport& r) {
  nlohmann::ordered_json j;
  j["model"] = r.model;
  j["runs"] = r.runs.size();
  j["seeds"] = r.seeds;
  j["test_dates"] = r.pooled.dates.size();
  j["samples_per_run"] = r.pooled_samples.empty() || r.runs.empty()
                             ? 0
                             : r.pooled_samples[0].n_samples / r.runs.size();
  j["across_runs"] = {{"rmse_per_sample", to_json(r.run_rmse_per_sample)},
                      {"rmse_mean", to_json(r.run_rmse_mean)},
                      {"inconsistency_per_sample", to_json(r.run_inconsistency_per_sample)},
                      {"inconsistency_mean", to_json(r.run_inconsistency_mean)}};
  j["pooled"] = to_json(r.pooled);
  auto& per_run = j["per_run"] = nlohmann::ordered_json::array();
  for (std::size_t i = 0; i < r.runs.size(); ++i) {
    auto e = to_json(r.runs[i]);
    e.erase("depth_variance");
    per_run.push_back({{"seed", r.seeds.at(i)}, {"metrics", e}});
  }
  auto& dates = j["per_date"] = nlohmann::ordered_json::array();
  for (std::size_t i = 0; i < r.pooled.dates.size(); ++i) {
    dates.push_back({{"date", r.pooled.dates[i]},
                     {"inconsistency_per_sample", r.pooled.date_inconsistency[i]},
                     {"rmse_per_sample", r.pooled.date_rmse_per_sample[i]},
                     {"rmse_mean", r.pooled.date_rmse_mean[i]}});
  }
  j["depths_m"] = r.depths;
  j["calibration"] = {{"x", r.calibration.x}, {"y", r.calibration.y}};
  return j;
}

inline void write_metrics_json(std::ostream& os, const MetricsReport& r) { os << to_json(r).dump(2) << '\n'; }

// percentile,cumulative_percent
inline void write_calibration_csv(std::ostream& os, const CalibrationCurve& c) {
  os << "percentile,cumulative_percent\n";
  for (std::size_t i = 0; i < c.x.size(); ++i) os << format_double(c.x[i]) << ',' << format_double(c.y[i]) << '\n';
}

// Per date and depth: pooled sample mean with a two-standard-deviation band.
inline void write_profile_csv(std::ostream& os, const MetricsReport& r, std::span<const DepthSequence> test) {
  os << "date,depth_index,depth_m,mean,lower,upper,observed\n";
  std::vector<double> column;
  for (std::size_t i = 0; i < r.pooled_samples.size(); ++i) {
    const auto& set = r.pooled_samples[i];
    for (std::size_t d = 0; d < set.depths; ++d) {
      column.assign(set.n_samples, 0.0);
      for (std::size_t s = 0; s < set.n_samples; ++s) column[s] = set.temperature_at(s, d);
      const auto ms = mean_std(column);
      os << set.date << ',' << d << ',' << (d < r.depths.size() ? format_double(r.depths[d]) : "") << ','
         << format_double(ms.mean) << ',' << format_double(ms.mean - 2 * ms.std) << ','
         << format_double(ms.mean + 2 * ms.std) << ',';
      if (i < test.size() && test[i].mask[d] != 0.0) os << format_double(test[i].temperature[d]);
      os << '\n';
    }
  }
}

// Long format: one line per (sample, date, depth).
inline void write_samples_csv(std::ostream& os, std::span<const std::vector<McSampleSet>> runs,
                              std::span<const std::uint64_t> seeds) {
  os << "run_seed,sample,mask_seed,date,depth_index,temperature,density\n";
  for (std::size_t r = 0; r < runs.size(); ++r) {
    for (const auto& set : runs[r]) {
      for (std::size_t s = 0; s < set.n_samples; ++s) {
        for (std::size_t d = 0; d < set.depths; ++d) {
          os << seeds[r] << ',' << s << ',' << set.mask_seeds[s] << ',' << set.date << ',' << d << ','
             << format_double(set.temperature_at(s, d)) << ',' << format_double(set.density_at(s, d)) << '\n';
        }
      }
    }
  }
}

}  // namespace pgalstm
