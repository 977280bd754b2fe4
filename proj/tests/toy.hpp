#pragma once

#include <vector>

#include "pgalstm/core/rng.hpp"
#include "pgalstm/data/sequences.hpp"
#include "pgalstm/models/depth_model.hpp"
#include "pgalstm/physics.hpp"

namespace pgalstm::testing {

struct ToyShape {
  std::size_t sequences = 6;
  std::size_t depths = 5;
  std::size_t padding = 3;
  std::size_t width = 6;
  double observed = 0.7;  // per-cell observation rate
};

// Random inputs, labels from a smooth warm-over-cold profile, and densities
// normalized with mean 998 and std 1.
inline std::vector<DepthSequence> toy_sequences(const ToyShape& s, Rng& rng) {
  std::vector<DepthSequence> out;
  for (std::size_t i = 0; i < s.sequences; ++i) {
    DepthSequence q;
    q.date_index = i;
    q.padding = s.padding;
    q.inputs = Tensor(Shape{s.padding + s.depths, s.width});
    for (std::size_t k = 0; k < q.inputs.size(); ++k) q.inputs[k] = rng.uniform(-1.0, 1.0);
    q.temperature.assign(s.depths, 0.0);
    q.density.assign(s.depths, 0.0);
    q.mask.assign(s.depths, 0.0);
    const double surface = rng.uniform(12.0, 24.0);
    for (std::size_t d = 0; d < s.depths; ++d) {
      if (d > 0 && !rng.bernoulli(s.observed)) continue;
      const double y = surface - 1.5 * static_cast<double>(d);
      q.mask[d] = 1.0;
      q.temperature[d] = y;
      q.density[d] = physics::density_from_temperature(y) - 998.0;
    }
    out.push_back(std::move(q));
  }
  return out;
}

inline ArchConfig toy_arch(std::size_t width = 6) {
  ArchConfig a;
  a.input_width = width;
  a.output_mean = 15.0;
  a.output_scale = 5.0;
  return a;
}

}  // namespace pgalstm::testing
