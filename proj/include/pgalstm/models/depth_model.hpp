#pragma once

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "pgalstm/core/params.hpp"
#include "pgalstm/core/tape.hpp"
#include "pgalstm/data/sequences.hpp"
#include "pgalstm/errors.hpp"
#include "pgalstm/models/layers.hpp"
#include "pgalstm/physics.hpp"

namespace pgalstm {

enum class ModelKind { Pga, Lstm, Pgl };

inline std::string_view model_name(ModelKind k) {
  switch (k) {
    case ModelKind::Pga: return "pga";
    case ModelKind::Lstm: return "lstm";
    case ModelKind::Pgl: return "pgl";
  }
  return "?";
}

inline ModelKind parse_model_kind(std::string_view s) {
  if (s == "pga") return ModelKind::Pga;
  if (s == "lstm") return ModelKind::Lstm;
  if (s == "pgl") return ModelKind::Pgl;
  throw UsageError("unknown model '" + std::string(s) + "' (expected pga, lstm or pgl)");
}

// PGL shares the plain LSTM architecture; only its training loss differs.
inline bool is_monotone(ModelKind k) { return k == ModelKind::Pga; }

struct ArchConfig {
  std::size_t input_width = 6;      // per-depth inputs + embedding
  std::size_t units = 8;            // recurrent units
  std::size_t delta_layers = 2;     // ELU layers between H_d and delta_d
  std::size_t head_layers = 2;      // ELU layers mapping [X_d, Z_d] to Y_d
  std::size_t baseline_layers = 4;  // ELU layers after the plain LSTM
  std::size_t dense_units = 5;
  double elu_alpha = 1.0;
  double z0_init = -2.0;            // initial density, normalized units
  double output_mean = 0.0;         // fixed affine map from the output unit to degC
  double output_scale = 1.0;

  bool operator==(const ArchConfig&) const = default;
};

// Widths of the dropout sites, in the order the forward pass uses them.
inline std::vector<std::size_t> dropout_sites(ModelKind kind, const ArchConfig& a) {
  std::vector<std::size_t> sites(4, a.input_width);  // gate inputs
  if (is_monotone(kind)) {
    sites.push_back(a.units);
    for (std::size_t i = 0; i < a.delta_layers; ++i) sites.push_back(a.dense_units);
    sites.push_back(a.input_width);
    for (std::size_t i = 0; i < a.head_layers; ++i) sites.push_back(a.dense_units);
  } else {
    sites.push_back(a.units);
    for (std::size_t i = 0; i < a.baseline_layers; ++i) sites.push_back(a.dense_units);
  }
  return sites;
}

namespace detail {

inline void add_dense_stack(ParamSet& p, const std::string& prefix, std::size_t in, std::size_t layers,
                            std::size_t units, Rng& rng) {
  for (std::size_t i = 1; i <= layers; ++i) {
    p.add(prefix + "W_" + std::to_string(i), glorot_uniform(in, units, rng), true);
    p.add(prefix + "b_" + std::to_string(i), Tensor(Shape{units}, 0.0), false);
    in = units;
  }
}

struct DenseStack {
  std::vector<Var> w;
  std::vector<Var> b;

  static DenseStack bind(const BoundParams& p, const std::string& prefix, std::size_t layers) {
    DenseStack s;
    for (std::size_t i = 1; i <= layers; ++i) {
      s.w.push_back(p[prefix + "W_" + std::to_string(i)]);
      s.b.push_back(p[prefix + "b_" + std::to_string(i)]);
    }
    return s;
  }

  // ELU layers, each input passed through its dropout site first.
  Var apply(Var x, const MaskVars& masks, std::size_t first_site, double alpha) const {
    for (std::size_t i = 0; i < w.size(); ++i) {
      x = elu(dense(masks.apply(first_site + i, x), w[i], b[i]), alpha);
    }
    return x;
  }
};

}  // namespace detail

inline ParamSet init_depth_params(ModelKind kind, const ArchConfig& a, Rng& rng) {
  ParamSet p;
  if (is_monotone(kind)) {
    add_gate_params(p, "mono.", a.input_width + a.units + 1, a.units, rng);
    detail::add_dense_stack(p, "mono.", a.units, a.delta_layers, a.dense_units, rng);
    p.add("mono.W_delta", glorot_uniform(a.delta_layers ? a.dense_units : a.units, 1, rng), true);
    p.add("mono.b_delta", Tensor(Shape{1}, 0.0), false);
    p.add("mono.z0", Tensor(Shape{1, 1}, a.z0_init), false);
    detail::add_dense_stack(p, "head.", a.input_width + 1, a.head_layers, a.dense_units, rng);
    p.add("head.W_out", glorot_uniform(a.head_layers ? a.dense_units : a.input_width + 1, 1, rng), true);
    p.add("head.b_out", Tensor(Shape{1}, 0.0), false);
  } else {
    add_gate_params(p, "lstm.", a.input_width + a.units, a.units, rng);
    detail::add_dense_stack(p, "dense.", a.units, a.baseline_layers, a.dense_units, rng);
    p.add("dense.W_out", glorot_uniform(a.baseline_layers ? a.dense_units : a.units, 1, rng), true);
    p.add("dense.b_out", Tensor(Shape{1}, 0.0), false);
  }
  return p;
}

// ---- monotonicity-preserving LSTM ---------------------------------------

struct MonoLstmVars {
  GateVars gates;
  detail::DenseStack stack;
  Var w_delta, b_delta, z0;

  static MonoLstmVars bind(const BoundParams& p, const ArchConfig& a) {
    return {GateVars::bind(p, "mono."), detail::DenseStack::bind(p, "mono.", a.delta_layers),
            p["mono.W_delta"], p["mono.b_delta"], p["mono.z0"]};
  }
};

struct MonoLstmState {
  Var h;  // [batch, units]
  Var c;  // [batch, units]
  Var z;  // [batch, 1], normalized density
};

struct MonoStep {
  MonoLstmState state;
  Var delta;  // [batch, 1], >= 0
};

// Gates read [X_d, H_{d-1}, Z_{d-1}]; a dense ELU stack on H_d feeds a ReLU
// that yields the increment delta_d >= 0, and Z_d = Z_{d-1} + delta_d.
// Sites 0-3 mask X for each gate; sites 4.. mask the dense-stack inputs.
inline MonoStep mono_lstm_step(Var x, const MonoLstmState& prev, const MonoLstmVars& v,
                               const MaskVars& masks, double elu_alpha = 1.0) {
  const Var recurrent[] = {prev.h, prev.z};
  const CellState cell = lstm_cell(x, recurrent, prev.c, v.gates, masks, 0);
  const std::size_t k = v.stack.w.size();
  const Var top = v.stack.apply(cell.h, masks, 4, elu_alpha);
  const Var delta = relu(dense(masks.apply(4 + k, top), v.w_delta, v.b_delta));
  return {{cell.h, cell.c, add(prev.z, delta)}, delta};
}

struct MonoForward {
  std::size_t padding = 0;
  std::vector<Var> z;      // per step, padded steps included, each [batch, 1]
  std::vector<Var> h;
  std::vector<Var> delta;
  Var z_real;              // [batch, depths], padded steps excluded
};

inline MonoForward mono_lstm_forward(Tape& tape, const MonoLstmVars& v, std::span<const Tensor> steps,
                                     std::size_t padding, const MaskVars& masks,
                                     double elu_alpha = 1.0) {
  if (steps.empty()) throw ShapeError("mono_lstm_forward: empty sequence");
  if (padding >= steps.size()) throw ShapeError("mono_lstm_forward: sequence is all padding");
  const std::size_t batch = steps[0].rows();
  const std::size_t units = v.gates.b_i.value().size();
  MonoLstmState state{constant_matrix(tape, batch, units, 0.0), constant_matrix(tape, batch, units, 0.0),
                      broadcast_scalar(tape, v.z0, batch)};
  MonoForward out;
  out.padding = padding;
  for (const auto& step : steps) {
    const auto s = mono_lstm_step(tape.constant(step), state, v, masks, elu_alpha);
    state = s.state;
    out.z.push_back(state.z);
    out.h.push_back(state.h);
    out.delta.push_back(s.delta);
  }
  out.z_real = concat(std::vector<Var>(out.z.begin() + static_cast<std::ptrdiff_t>(padding), out.z.end()));
  return out;
}

// ---- density -> temperature head ----------------------------------------

struct HeadVars {
  detail::DenseStack stack;
  Var w_out, b_out;

  static HeadVars bind(const BoundParams& p, const ArchConfig& a) {
    return {detail::DenseStack::bind(p, "head.", a.head_layers), p["head.W_out"], p["head.b_out"]};
  }
};

// Maps [X_d, Z_d] to a temperature. Nothing forces Y to be monotone in Z:
// one density corresponds to a cold and a warm temperature. Dropout masks
// X_d but never Z_d, and the inputs of the later layers.
inline Var head_forward(Var x, Var z, const HeadVars& v, const MaskVars& masks, std::size_t first_site,
                        double elu_alpha = 1.0) {
  Var h = concat({masks.apply(first_site, x), z});
  const std::size_t layers = v.stack.w.size();
  for (std::size_t i = 0; i < layers; ++i) {
    if (i > 0) h = masks.apply(first_site + i, h);
    h = elu(dense(h, v.stack.w[i], v.stack.b[i]), elu_alpha);
  }
  if (layers > 0) h = masks.apply(first_site + layers, h);
  return dense(h, v.w_out, v.b_out);
}

// ---- full models ---------------------------------------------------------

inline Var to_celsius(Tape& tape, Var raw, const ArchConfig& a) {
  return add(scale(raw, a.output_scale), tape.constant(Tensor::scalar(a.output_mean)));
}

struct DepthOutputs {
  Var temperature;             // [batch, depths], degC
  std::optional<Var> density;  // [batch, depths], normalized (monotone model only)
};

inline DepthOutputs pga_forward(Tape& tape, const BoundParams& p, const ArchConfig& a,
                                const DepthBatch& batch, const MaskVars& masks) {
  if (batch.width != a.input_width) {
    throw ShapeError("pga_forward: batch width " + std::to_string(batch.width) +
                     " does not match model input width " + std::to_string(a.input_width));
  }
  const auto mono = MonoLstmVars::bind(p, a);
  const auto head = HeadVars::bind(p, a);
  const auto fwd = mono_lstm_forward(tape, mono, batch.steps, batch.padding, masks, a.elu_alpha);
  const std::size_t head_site = 4 + a.delta_layers + 1;
  std::vector<Var> temps;
  for (std::size_t d = 0; d < batch.depths; ++d) {
    const std::size_t k = batch.padding + d;
    temps.push_back(head_forward(tape.constant(batch.steps[k]), fwd.z[k], head, masks, head_site,
                                 a.elu_alpha));
  }
  return {to_celsius(tape, concat(temps), a), fwd.z_real};
}

// Baseline: LSTM over depth, a stack of ELU layers on H_d, scalar output.
inline Var plain_lstm_forward(Tape& tape, const BoundParams& p, const ArchConfig& a,
                              const DepthBatch& batch, const MaskVars& masks) {
  if (batch.width != a.input_width) throw ShapeError("plain_lstm_forward: batch width mismatch");
  if (batch.steps.empty()) throw ShapeError("plain_lstm_forward: empty sequence");
  const auto gates = GateVars::bind(p, "lstm.");
  const auto stack = detail::DenseStack::bind(p, "dense.", a.baseline_layers);
  const Var w_out = p["dense.W_out"];
  const Var b_out = p["dense.b_out"];
  CellState state{constant_matrix(tape, batch.batch, a.units, 0.0),
                  constant_matrix(tape, batch.batch, a.units, 0.0)};
  std::vector<Var> temps;
  for (std::size_t k = 0; k < batch.steps.size(); ++k) {
    const Var rec[] = {state.h};
    state = lstm_cell(tape.constant(batch.steps[k]), rec, state.c, gates, masks, 0);
    if (k < batch.padding) continue;
    const Var top = stack.apply(state.h, masks, 4, a.elu_alpha);
    temps.push_back(dense(masks.apply(4 + a.baseline_layers, top), w_out, b_out));
  }
  return to_celsius(tape, concat(temps), a);
}

inline DepthOutputs depth_forward(ModelKind kind, Tape& tape, const BoundParams& p, const ArchConfig& a,
                                  const DepthBatch& batch, const MaskVars& masks) {
  if (is_monotone(kind)) return pga_forward(tape, p, a, batch, masks);
  return {plain_lstm_forward(tape, p, a, batch, masks), std::nullopt};
}

// Mean over consecutive depth pairs (and batch rows) of
// ReLU(rho(Y_d) - rho(Y_{d+1})), in normalized density units.
inline Var pgl_physics_loss(Var temperature, double density_std) {
  const std::size_t depths = temperature.value().cols();
  if (depths < 2) throw ShapeError("physics loss needs a profile of at least 2 depths");
  const Var rho = physics::density(temperature);
  const Var gap = sub(slice_cols(rho, 0, depths - 1), slice_cols(rho, 1, depths));
  return scale(mean(relu(gap)), 1.0 / density_std);
}

}  // namespace pgalstm
