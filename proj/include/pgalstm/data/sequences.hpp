#pragma once

#include <cmath>
#include <span>
#include <vector>

#include "pgalstm/core/tensor.hpp"
#include "pgalstm/data/normalize.hpp"
#include "pgalstm/errors.hpp"

namespace pgalstm {

// Date-level drivers for days t-history .. t, oldest first.
struct TemporalWindow {
  std::size_t date_index = 0;
  Tensor steps;  // [history + 1, date-level feature count]
};

struct WindowSet {
  std::vector<TemporalWindow> windows;
  std::vector<std::size_t> dropped;  // dates lacking a full consecutive history
  std::vector<long> slot;            // date index -> position in `windows`, or -1

  const TemporalWindow* for_date(std::size_t t) const {
    if (t >= slot.size() || slot[t] < 0) return nullptr;
    return &windows[static_cast<std::size_t>(slot[t])];
  }
};

inline WindowSet build_windows(const NormalizedDataset& nd, std::size_t history_days = 7) {
  WindowSet set;
  set.slot.assign(nd.date_count(), -1);
  const auto& cols = nd.layout.date_level;
  for (std::size_t t = 0; t < nd.date_count(); ++t) {
    // dates are strictly increasing, so a span of exactly `history_days`
    // calendar days over `history_days` entries means no gaps
    const bool full = t >= history_days &&
                      days_between(nd.dates[t - history_days], nd.dates[t]) ==
                          static_cast<int>(history_days);
    if (!full) {
      set.dropped.push_back(t);
      continue;
    }
    TemporalWindow w;
    w.date_index = t;
    w.steps = Tensor(Shape{history_days + 1, cols.size()});
    for (std::size_t k = 0; k <= history_days; ++k) {
      const std::size_t day = t - history_days + k;
      for (std::size_t c = 0; c < cols.size(); ++c) w.steps.at(k, c) = nd.input(day, 0, cols[c]);
    }
    set.slot[t] = static_cast<long>(set.windows.size());
    set.windows.push_back(std::move(w));
  }
  return set;
}

// One date's depth-ordered model input: `padding` copies of the surface row
// followed by the real depths. Each row is [per-depth inputs, embedding].
struct DepthSequence {
  std::size_t date_index = 0;
  std::size_t padding = 0;
  Tensor inputs;                     // [padding + depths, width]
  std::vector<double> temperature;   // degC, 0 where unobserved
  std::vector<double> density;       // normalized, 0 where unobserved
  std::vector<double> mask;          // 1 observed, 0 missing; real depths only

  std::size_t depths() const { return mask.size(); }
  std::size_t length() const { return padding + depths(); }
  std::size_t width() const { return inputs.cols(); }
  std::size_t observations() const {
    std::size_t n = 0;
    for (double m : mask) n += m > 0 ? 1 : 0;
    return n;
  }
};

inline DepthSequence build_depth_sequence(const NormalizedDataset& nd, std::size_t t,
                                          std::span<const double> embedding, std::size_t padding) {
  const auto& cols = nd.layout.per_depth;
  const std::size_t width = cols.size() + embedding.size();
  DepthSequence seq;
  seq.date_index = t;
  seq.padding = padding;
  seq.inputs = Tensor(Shape{padding + nd.depths, width});
  for (std::size_t row = 0; row < padding + nd.depths; ++row) {
    const std::size_t d = row < padding ? 0 : row - padding;
    for (std::size_t c = 0; c < cols.size(); ++c) seq.inputs.at(row, c) = nd.input(t, d, cols[c]);
    for (std::size_t e = 0; e < embedding.size(); ++e) seq.inputs.at(row, cols.size() + e) = embedding[e];
  }
  seq.temperature.assign(nd.depths, 0.0);
  seq.density.assign(nd.depths, 0.0);
  seq.mask.assign(nd.depths, 0.0);
  for (std::size_t d = 0; d < nd.depths; ++d) {
    if (!nd.is_observed(t, d)) continue;
    seq.mask[d] = 1.0;
    seq.temperature[d] = nd.temperature[nd.cell(t, d)];
    seq.density[d] = nd.density[nd.cell(t, d)];
  }
  return seq;
}

// Step-major batch of depth sequences: steps[k] holds row k of every
// sequence as a [batch, width] matrix.
struct DepthBatch {
  std::size_t batch = 0;
  std::size_t padding = 0;
  std::size_t depths = 0;
  std::size_t width = 0;
  std::vector<Tensor> steps;
  Tensor temperature;  // [batch, depths]
  Tensor density;      // [batch, depths]
  Tensor mask;         // [batch, depths]
  std::size_t observations = 0;
  std::vector<std::size_t> date_index;
};

inline DepthBatch make_batch(std::span<const DepthSequence> seqs, std::span<const std::size_t> which) {
  if (which.empty()) throw DataError("empty batch");
  const auto& first = seqs[which[0]];
  DepthBatch b;
  b.batch = which.size();
  b.padding = first.padding;
  b.depths = first.depths();
  b.width = first.width();
  b.steps.assign(first.length(), Tensor(Shape{b.batch, b.width}));
  b.temperature = Tensor(Shape{b.batch, b.depths});
  b.density = Tensor(Shape{b.batch, b.depths});
  b.mask = Tensor(Shape{b.batch, b.depths});
  for (std::size_t i = 0; i < which.size(); ++i) {
    const auto& s = seqs[which[i]];
    if (s.padding != b.padding || s.depths() != b.depths || s.width() != b.width) {
      throw ShapeError("batch sequences disagree in padding, depth count or width");
    }
    b.date_index.push_back(s.date_index);
    for (std::size_t k = 0; k < s.length(); ++k) {
      for (std::size_t c = 0; c < b.width; ++c) b.steps[k].at(i, c) = s.inputs.at(k, c);
    }
    for (std::size_t d = 0; d < b.depths; ++d) {
      b.temperature.at(i, d) = s.temperature[d];
      b.density.at(i, d) = s.density[d];
      b.mask.at(i, d) = s.mask[d];
    }
    b.observations += s.observations();
  }
  return b;
}

inline DepthBatch make_batch(std::span<const DepthSequence> seqs) {
  std::vector<std::size_t> all(seqs.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  return make_batch(seqs, all);
}

}  // namespace pgalstm
