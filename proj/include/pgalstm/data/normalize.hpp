#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "pgalstm/data/dataset.hpp"
#include "pgalstm/errors.hpp"

namespace pgalstm {

// Model input columns: depth first, then the CSV features in schema order.
struct InputLayout {
  std::vector<std::string> names;
  std::vector<std::size_t> date_level;  // drivers shared by all depths of a date
  std::vector<std::size_t> per_depth;   // depth plus depth-varying features

  static InputLayout from_schema(const CsvSchema& schema) {
    InputLayout l;
    l.names.push_back("depth_m");
    l.per_depth.push_back(0);
    for (std::size_t f = 0; f < schema.features.size(); ++f) {
      l.names.push_back(schema.features[f]);
      (schema.is_per_depth(schema.features[f]) ? l.per_depth : l.date_level).push_back(f + 1);
    }
    return l;
  }

  std::size_t width() const { return names.size(); }
};

// z-score statistics fitted on training rows only. Population standard
// deviation, floored at kStdFloor. Temperature labels stay in degC; their
// moments only fix the scale of the model output layer.
struct NormalizationStats {
  static constexpr double kStdFloor = 1e-8;

  std::vector<std::string> names;
  std::vector<double> mean;
  std::vector<double> std;
  double density_mean = 0.0;
  double density_std = 1.0;
  double temperature_mean = 0.0;
  double temperature_std = 1.0;

  double normalize(std::size_t col, double x) const { return (x - mean[col]) / std[col]; }
  double denormalize(std::size_t col, double z) const { return z * std[col] + mean[col]; }
  double normalize_density(double rho) const { return (rho - density_mean) / density_std; }
  double denormalize_density(double z) const { return z * density_std + density_mean; }

  bool operator==(const NormalizationStats&) const = default;
};

struct NormalizedDataset {
  InputLayout layout;
  std::vector<Date> dates;
  std::size_t depths = 0;
  std::vector<double> inputs;       // [date][depth][col]; missing inputs become 0 (the mean)
  std::vector<double> density;      // normalized; NaN where unobserved
  std::vector<double> temperature;  // degC; NaN where unobserved
  std::vector<std::uint8_t> observed;

  std::size_t date_count() const { return dates.size(); }
  std::size_t cell(std::size_t t, std::size_t d) const { return t * depths + d; }
  double input(std::size_t t, std::size_t d, std::size_t c) const {
    return inputs[cell(t, d) * layout.width() + c];
  }
  bool is_observed(std::size_t t, std::size_t d) const { return observed[cell(t, d)] != 0; }
};

namespace detail {

// Two-pass population mean/std over the values produced by `each`.
template <class Each>
std::pair<double, double> population_stats(Each&& each, const std::string& what) {
  double sum = 0.0;
  std::size_t n = 0;
  each([&](double v) {
    sum += v;
    ++n;
  });
  if (n == 0) throw DataError("no training values for '" + what + "' (all missing)");
  const double mean = sum / static_cast<double>(n);
  double ss = 0.0;
  each([&](double v) { ss += (v - mean) * (v - mean); });
  const double sd = std::sqrt(ss / static_cast<double>(n));
  return {mean, std::max(sd, NormalizationStats::kStdFloor)};
}

}  // namespace detail

inline double input_value(const LakeDataset& ds, std::size_t t, std::size_t d, std::size_t col) {
  return col == 0 ? ds.depths[d] : ds.feature(t, d, col - 1);
}

inline NormalizationStats fit_normalization(const LakeDataset& ds, std::span<const std::size_t> train_dates) {
  if (train_dates.empty()) throw DataError("normalization needs at least one training date");
  const auto layout = InputLayout::from_schema(ds.schema);
  NormalizationStats stats;
  stats.names = layout.names;
  for (std::size_t c = 0; c < layout.width(); ++c) {
    auto [m, s] = detail::population_stats(
        [&](auto&& visit) {
          for (auto t : train_dates) {
            for (std::size_t d = 0; d < ds.depth_count(); ++d) {
              const double v = input_value(ds, t, d, c);
              if (!std::isnan(v)) visit(v);
            }
          }
        },
        layout.names[c]);
    stats.mean.push_back(m);
    stats.std.push_back(s);
  }
  auto [dm, dsd] = detail::population_stats(
      [&](auto&& visit) {
        for (auto t : train_dates) {
          for (std::size_t d = 0; d < ds.depth_count(); ++d) {
            if (ds.is_observed(t, d)) visit(ds.density[ds.cell(t, d)]);
          }
        }
      },
      "density");
  stats.density_mean = dm;
  stats.density_std = dsd;
  auto [tm, tsd] = detail::population_stats(
      [&](auto&& visit) {
        for (auto t : train_dates) {
          for (std::size_t d = 0; d < ds.depth_count(); ++d) {
            if (ds.is_observed(t, d)) visit(ds.temperature[ds.cell(t, d)]);
          }
        }
      },
      "temperature");
  stats.temperature_mean = tm;
  stats.temperature_std = tsd;
  return stats;
}

inline NormalizedDataset apply_normalization(const LakeDataset& ds, const NormalizationStats& stats) {
  NormalizedDataset out;
  out.layout = InputLayout::from_schema(ds.schema);
  if (stats.names != out.layout.names) {
    throw DataError("normalization statistics do not match the dataset columns");
  }
  out.dates = ds.dates;
  out.depths = ds.depth_count();
  const std::size_t width = out.layout.width();
  out.inputs.resize(ds.date_count() * out.depths * width);
  out.density = ds.density;
  out.temperature = ds.temperature;
  out.observed = ds.observed;
  for (std::size_t t = 0; t < ds.date_count(); ++t) {
    for (std::size_t d = 0; d < out.depths; ++d) {
      for (std::size_t c = 0; c < width; ++c) {
        const double v = input_value(ds, t, d, c);
        out.inputs[out.cell(t, d) * width + c] = std::isnan(v) ? 0.0 : stats.normalize(c, v);
      }
      if (out.is_observed(t, d)) {
        out.density[out.cell(t, d)] = stats.normalize_density(ds.density[ds.cell(t, d)]);
      }
    }
  }
  return out;
}

inline std::pair<NormalizationStats, NormalizedDataset> fit_and_apply_normalization(
    std::span<const std::size_t> train_dates, const LakeDataset& ds) {
  auto stats = fit_normalization(ds, train_dates);
  auto normalized = apply_normalization(ds, stats);
  return {std::move(stats), std::move(normalized)};
}

}  // namespace pgalstm
