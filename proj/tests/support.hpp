#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>

#include "pgalstm/core/params.hpp"
#include "pgalstm/core/rng.hpp"
#include "pgalstm/core/tape.hpp"

namespace pgalstm::testing {

// |a - b| / max(|a|, |b|, floor)
inline double relative_error(double a, double b, double floor = 1e-3) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

struct GradCheck {
  double max_rel_error = 0.0;
  double max_abs_error = 0.0;
  std::string worst;  // "name[index]"
  std::size_t checked = 0;
};

using LossBuilder = std::function<Var(Tape&, const BoundParams&)>;

// Central differences with step h against the tape gradient, for every scalar
// of every entry in `params`.
inline GradCheck gradient_check(const ParamSet& params, const LossBuilder& loss, double h = 1e-5) {
  Tape tape;
  const auto bound = bind(tape, params);
  const auto grads = bound.gradients(tape.backward(loss(tape, bound)));

  const auto value_at = [&](const ParamSet& p) {
    Tape t;
    return loss(t, bind(t, p, false)).value().item();
  };

  GradCheck out;
  ParamSet probe = params;
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& v = probe.entry(i).value;
    for (std::size_t j = 0; j < v.size(); ++j) {
      const double x = v[j];
      v[j] = x + h;
      const double up = value_at(probe);
      v[j] = x - h;
      const double down = value_at(probe);
      v[j] = x;
      const double fd = (up - down) / (2 * h);
      const double err = relative_error(grads[i][j], fd);
      out.max_abs_error = std::max(out.max_abs_error, std::abs(grads[i][j] - fd));
      ++out.checked;
      if (err > out.max_rel_error) {
        out.max_rel_error = err;
        out.worst = params.entry(i).name + "[" + std::to_string(j) + "]";
      }
    }
  }
  return out;
}

inline Tensor random_tensor(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor t(std::move(shape));
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(lo, hi);
  return t;
}

}  // namespace pgalstm::testing
