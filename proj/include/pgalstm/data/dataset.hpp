#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "pgalstm/data/date.hpp"
#include "pgalstm/errors.hpp"
#include "pgalstm/physics.hpp"

namespace pgalstm {

// Column layout of a lake CSV: `date,depth_m,<features...>,temperature`.
// Features listed in `per_depth` may vary with depth for a fixed date (the
// optional simulator temperature); every other feature is a date-level
// driver and must be constant across depths.
struct CsvSchema {
  std::vector<std::string> features;
  std::vector<std::string> per_depth;

  static CsvSchema lake(bool simulator_column) {
    CsvSchema s;
    s.features = {"doy",        "air_temp", "shortwave", "longwave", "rel_humidity",
                  "wind_speed", "rain",     "gdd",       "frozen",   "snowing"};
    if (simulator_column) {
      s.features.push_back("glm_temp");
      s.per_depth.push_back("glm_temp");
    }
    return s;
  }

  bool is_per_depth(std::string_view name) const {
    return std::find(per_depth.begin(), per_depth.end(), name) != per_depth.end();
  }

  std::vector<std::string> header() const {
    std::vector<std::string> h{"date", "depth_m"};
    h.insert(h.end(), features.begin(), features.end());
    h.push_back("temperature");
    return h;
  }

  bool operator==(const CsvSchema&) const = default;
};

struct LakeObservation {
  Date date;
  std::size_t depth_index = 0;
  double depth = 0.0;
  std::vector<double> features;
  double temperature = std::numeric_limits<double>::quiet_NaN();

  bool has_label() const { return !std::isnan(temperature); }
};

// Observation grid over (date, depth index). Missing cells hold NaN and are
// tracked by `observed`; density is rho(temperature) exactly where observed.
struct LakeDataset {
  CsvSchema schema;
  std::vector<Date> dates;
  std::vector<double> depths;
  std::vector<double> features;     // [date][depth][feature]
  std::vector<double> temperature;  // [date][depth]
  std::vector<double> density;      // [date][depth]
  std::vector<std::uint8_t> observed;

  std::size_t date_count() const { return dates.size(); }
  std::size_t depth_count() const { return depths.size(); }
  std::size_t feature_count() const { return schema.features.size(); }

  std::size_t cell(std::size_t t, std::size_t d) const { return t * depths.size() + d; }

  double feature(std::size_t t, std::size_t d, std::size_t f) const {
    return features[cell(t, d) * feature_count() + f];
  }
  double& feature(std::size_t t, std::size_t d, std::size_t f) {
    return features[cell(t, d) * feature_count() + f];
  }
  bool is_observed(std::size_t t, std::size_t d) const { return observed[cell(t, d)] != 0; }

  std::size_t observation_count(std::size_t t) const {
    std::size_t n = 0;
    for (std::size_t d = 0; d < depths.size(); ++d) n += observed[cell(t, d)];
    return n;
  }

  std::size_t observation_count() const {
    return static_cast<std::size_t>(std::count(observed.begin(), observed.end(), 1));
  }

  LakeObservation observation(std::size_t t, std::size_t d) const {
    LakeObservation o;
    o.date = dates.at(t);
    o.depth_index = d;
    o.depth = depths.at(d);
    o.features.assign(features.begin() + static_cast<std::ptrdiff_t>(cell(t, d) * feature_count()),
                      features.begin() + static_cast<std::ptrdiff_t>((cell(t, d) + 1) * feature_count()));
    o.temperature = temperature[cell(t, d)];
    return o;
  }

  void resize(std::size_t n_dates, std::size_t n_depths) {
    const auto nan = std::numeric_limits<double>::quiet_NaN();
    features.assign(n_dates * n_depths * feature_count(), nan);
    temperature.assign(n_dates * n_depths, nan);
    density.assign(n_dates * n_depths, nan);
    observed.assign(n_dates * n_depths, 0);
  }

  // Sets a temperature label and its derived density.
  void set_label(std::size_t t, std::size_t d, double y) {
    temperature[cell(t, d)] = y;
    density[cell(t, d)] = physics::density_from_temperature(y);
    observed[cell(t, d)] = 1;
  }
};

namespace detail {

inline std::vector<std::string_view> split_commas(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(',', start);
    out.push_back(line.substr(start, pos == std::string_view::npos ? pos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

// Empty cell -> NaN (missing); anything unparsable is an error.
inline double parse_cell(std::string_view cell, std::size_t line_no, std::string_view column) {
  cell = trim(cell);
  if (cell.empty()) return std::numeric_limits<double>::quiet_NaN();
  double v = 0.0;
  auto [p, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
  if (ec != std::errc() || p != cell.data() + cell.size() || !std::isfinite(v)) {
    throw DataError("line " + std::to_string(line_no) + ": column '" + std::string(column) +
                    "' is not a number: '" + std::string(cell) + "'");
  }
  return v;
}

}  // namespace detail

// Shortest decimal text that parses back to exactly v.
inline std::string format_double(double v) {
  char buf[32];
  auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, p);
}

inline LakeDataset read_csv(std::istream& in, const CsvSchema& schema) {
  std::string line;
  std::size_t line_no = 1;
  if (!std::getline(in, line)) throw DataError("empty CSV");
  {
    const auto header = detail::split_commas(detail::trim(line));
    const auto expected = schema.header();
    for (std::size_t i = 0; i < header.size(); ++i) {
      const auto name = detail::trim(header[i]);
      if (std::find(expected.begin(), expected.end(), name) == expected.end()) {
        throw DataError("unknown column '" + std::string(name) + "'");
      }
    }
    if (header.size() != expected.size()) {
      throw DataError("header has " + std::to_string(header.size()) + " columns, schema expects " +
                      std::to_string(expected.size()));
    }
    for (std::size_t i = 0; i < header.size(); ++i) {
      if (detail::trim(header[i]) != expected[i]) {
        throw DataError("column " + std::to_string(i + 1) + " is '" +
                        std::string(detail::trim(header[i])) + "', expected '" + expected[i] + "'");
      }
    }
  }

  struct Row {
    Date date;
    double depth;
    std::vector<double> features;
    double temperature;
    std::size_t line_no;
  };
  std::vector<Row> rows;
  const std::size_t n_features = schema.features.size();
  while (std::getline(in, line)) {
    ++line_no;
    const auto trimmed = detail::trim(line);
    if (trimmed.empty()) continue;
    const auto cells = detail::split_commas(trimmed);
    if (cells.size() != n_features + 3) {
      throw DataError("line " + std::to_string(line_no) + ": expected " +
                      std::to_string(n_features + 3) + " cells, found " + std::to_string(cells.size()));
    }
    Row r;
    r.line_no = line_no;
    try {
      r.date = Date::parse(detail::trim(cells[0]));
    } catch (const DataError& e) {
      throw DataError("line " + std::to_string(line_no) + ": " + e.what());
    }
    r.depth = detail::parse_cell(cells[1], line_no, "depth_m");
    if (std::isnan(r.depth) || r.depth < 0) {
      throw DataError("line " + std::to_string(line_no) + ": depth_m must be a number >= 0");
    }
    for (std::size_t f = 0; f < n_features; ++f) {
      r.features.push_back(detail::parse_cell(cells[2 + f], line_no, schema.features[f]));
    }
    r.temperature = detail::parse_cell(cells[2 + n_features], line_no, "temperature");
    if (!std::isnan(r.temperature) && !(r.temperature > physics::kMinTemperature)) {
      throw DataError("line " + std::to_string(line_no) + ": temperature out of range");
    }
    rows.push_back(std::move(r));
  }
  if (rows.empty()) throw DataError("CSV has no data rows");

  LakeDataset ds;
  ds.schema = schema;
  // Depth grid from the first date; every date must repeat it in order.
  for (const auto& r : rows) {
    if (r.date != rows.front().date) break;
    if (!ds.depths.empty() && !(r.depth > ds.depths.back())) {
      throw DataError("line " + std::to_string(r.line_no) + ": depth grid is not strictly increasing");
    }
    ds.depths.push_back(r.depth);
  }
  const std::size_t n_depths = ds.depths.size();
  if (rows.size() % n_depths != 0) {
    throw DataError("row count is not a multiple of the depth grid size " + std::to_string(n_depths));
  }
  const std::size_t n_dates = rows.size() / n_depths;
  ds.dates.reserve(n_dates);
  ds.resize(n_dates, n_depths);
  for (std::size_t t = 0; t < n_dates; ++t) {
    const auto& first = rows[t * n_depths];
    if (t > 0 && !(first.date > ds.dates.back())) {
      throw DataError("line " + std::to_string(first.line_no) + ": dates must be strictly increasing");
    }
    ds.dates.push_back(first.date);
    for (std::size_t d = 0; d < n_depths; ++d) {
      const auto& r = rows[t * n_depths + d];
      if (r.date != first.date || r.depth != ds.depths[d]) {
        throw DataError("line " + std::to_string(r.line_no) +
                        ": row does not follow the depth grid (non-monotone or missing depth)");
      }
      for (std::size_t f = 0; f < n_features; ++f) {
        const double v = r.features[f];
        if (d > 0 && !schema.is_per_depth(schema.features[f])) {
          const double surface = ds.feature(t, 0, f);
          const bool same = (std::isnan(v) && std::isnan(surface)) || v == surface;
          if (!same) {
            throw DataError("line " + std::to_string(r.line_no) + ": date-level feature '" +
                            schema.features[f] + "' differs across depths");
          }
        }
        ds.feature(t, d, f) = v;
      }
      if (!std::isnan(r.temperature)) ds.set_label(t, d, r.temperature);
    }
  }
  return ds;
}

inline LakeDataset load_csv(const std::string& path, const CsvSchema& schema) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open data file: " + path);
  return read_csv(in, schema);
}

// Reads the header to decide whether the optional simulator column is
// present, then loads with the matching lake schema.
inline LakeDataset load_lake_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open data file: " + path);
  std::string header;
  std::getline(in, header);
  const bool simulator = header.find("glm_temp") != std::string::npos;
  in.seekg(0);
  return read_csv(in, CsvSchema::lake(simulator));
}

inline void write_csv(std::ostream& out, const LakeDataset& ds) {
  const auto header = ds.schema.header();
  for (std::size_t i = 0; i < header.size(); ++i) out << (i ? "," : "") << header[i];
  out << '\n';
  for (std::size_t t = 0; t < ds.date_count(); ++t) {
    const auto date = ds.dates[t].iso();
    for (std::size_t d = 0; d < ds.depth_count(); ++d) {
      out << date << ',' << format_double(ds.depths[d]);
      for (std::size_t f = 0; f < ds.feature_count(); ++f) {
        const double v = ds.feature(t, d, f);
        out << ',';
        if (!std::isnan(v)) out << format_double(v);
      }
      out << ',';
      if (ds.is_observed(t, d)) out << format_double(ds.temperature[ds.cell(t, d)]);
      out << '\n';
    }
  }
}

inline void save_csv(const std::string& path, const LakeDataset& ds) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write data file: " + path);
  write_csv(out, ds);
}

}  // namespace pgalstm
