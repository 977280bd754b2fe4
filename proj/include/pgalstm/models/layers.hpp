#pragma once

#include <span>
#include <string>
#include <vector>

#include "pgalstm/core/params.hpp"
#include "pgalstm/core/rng.hpp"
#include "pgalstm/core/tape.hpp"
#include "pgalstm/errors.hpp"

namespace pgalstm {

// Inverted-dropout masks for a forward pass. One [batch, width] mask per
// dropout site; entries are 0 (dropped) or 1/(1-p) (kept). A mask is drawn
// once per forward pass and reused at every depth step, so each batch row
// sees one fixed thinned network. An empty set means no dropout.
struct DropoutMasks {
  std::vector<Tensor> masks;
  double p = 0.0;

  bool active() const { return !masks.empty(); }

  static DropoutMasks sample(std::span<const std::size_t> site_widths, std::size_t batch, double p,
                             Rng& rng) {
    if (!(p >= 0.0 && p < 1.0)) throw UsageError("dropout probability must be in [0, 1)");
    DropoutMasks out;
    out.p = p;
    if (p == 0.0) return out;
    const double keep_scale = 1.0 / (1.0 - p);
    for (auto width : site_widths) {
      Tensor m(Shape{batch, width});
      for (std::size_t i = 0; i < m.size(); ++i) m[i] = rng.bernoulli(p) ? 0.0 : keep_scale;
      out.masks.push_back(std::move(m));
    }
    return out;
  }
};

// Masks placed on a tape as constants. apply() is the identity when there
// is no dropout.
class MaskVars {
 public:
  MaskVars() = default;
  MaskVars(Tape& tape, const DropoutMasks& masks) {
    for (const auto& m : masks.masks) vars_.push_back(tape.constant(m));
  }

  bool active() const { return !vars_.empty(); }

  Var apply(std::size_t site, Var x) const {
    if (vars_.empty()) return x;
    return hadamard(x, vars_.at(site));
  }

  std::size_t size() const { return vars_.size(); }

 private:
  std::vector<Var> vars_;
};

inline Var dense(Var x, Var w, Var b) { return add(matmul(x, w), b); }

inline Var constant_matrix(Tape& tape, std::size_t rows, std::size_t cols, double v) {
  return tape.constant(Tensor(Shape{rows, cols}, v));
}

// Broadcasts a [1, 1] parameter to a [rows, 1] column.
inline Var broadcast_scalar(Tape& tape, Var scalar, std::size_t rows) {
  return matmul(constant_matrix(tape, rows, 1, 1.0), scalar);
}

// The four gate blocks of an LSTM cell.
struct GateVars {
  Var w_i, b_i, w_f, b_f, w_c, b_c, w_o, b_o;

  static GateVars bind(const BoundParams& p, const std::string& prefix) {
    return {p[prefix + "W_i"], p[prefix + "b_i"], p[prefix + "W_f"], p[prefix + "b_f"],
            p[prefix + "W_c"], p[prefix + "b_c"], p[prefix + "W_o"], p[prefix + "b_o"]};
  }
};

// Adds gate weights [input + recurrent, units] and biases [units]. The
// forget-gate bias starts at 1.
inline void add_gate_params(ParamSet& params, const std::string& prefix, std::size_t input_width,
                            std::size_t units, Rng& rng) {
  for (const char* g : {"i", "f", "c", "o"}) {
    params.add(prefix + "W_" + g, glorot_uniform(input_width, units, rng), true);
    params.add(prefix + "b_" + g, Tensor(Shape{units}, std::string(g) == "f" ? 1.0 : 0.0), false);
  }
}

struct CellState {
  Var h;
  Var c;
};

// One LSTM cell update. Each gate consumes [x * m_gate, recurrent...]; the
// dropout masks (sites first_site .. first_site+3) touch only the
// non-recurrent input x.
inline CellState lstm_cell(Var x, std::span<const Var> recurrent, Var c_prev, const GateVars& g,
                           const MaskVars& masks, std::size_t first_site) {
  const auto gate_input = [&](std::size_t k) {
    std::vector<Var> parts{masks.apply(first_site + k, x)};
    parts.insert(parts.end(), recurrent.begin(), recurrent.end());
    return concat(parts);
  };
  const Var in_gate = sigmoid(dense(gate_input(0), g.w_i, g.b_i));
  const Var forget = sigmoid(dense(gate_input(1), g.w_f, g.b_f));
  const Var candidate = tanh(dense(gate_input(2), g.w_c, g.b_c));
  const Var out_gate = sigmoid(dense(gate_input(3), g.w_o, g.b_o));
  const Var c = add(hadamard(forget, c_prev), hadamard(in_gate, candidate));
  const Var h = hadamard(out_gate, tanh(c));
  return {h, c};
}

}  // namespace pgalstm
