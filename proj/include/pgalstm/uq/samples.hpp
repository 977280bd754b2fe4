#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "pgalstm/errors.hpp"

namespace pgalstm {

// Monte Carlo dropout predictions for one date: n_samples rows x depths
// columns, temperature in degC and density in kg/m^3, real depths only.
struct McSampleSet {
  std::string date;
  std::size_t n_samples = 0;
  std::size_t depths = 0;
  std::vector<double> temperature;
  std::vector<double> density;
  double dropout = 0.0;
  std::vector<std::uint64_t> mask_seeds;

  McSampleSet() = default;
  McSampleSet(std::string date_, std::size_t n, std::size_t d, double p)
      : date(std::move(date_)), n_samples(n), depths(d), temperature(n * d, 0.0),
        density(n * d, 0.0), dropout(p) {}

  std::span<const double> temperature_row(std::size_t s) const {
    return std::span<const double>(temperature).subspan(s * depths, depths);
  }
  std::span<const double> density_row(std::size_t s) const {
    return std::span<const double>(density).subspan(s * depths, depths);
  }
  double temperature_at(std::size_t s, std::size_t d) const { return temperature[s * depths + d]; }
  double density_at(std::size_t s, std::size_t d) const { return density[s * depths + d]; }

  void validate() const {
    if (temperature.size() != n_samples * depths || density.size() != n_samples * depths) {
      throw ShapeError("McSampleSet: matrix size does not match n_samples x depths");
    }
  }
};

}  // namespace pgalstm
