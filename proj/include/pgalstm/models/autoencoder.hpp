#pragma once

#include <span>
#include <vector>

#include "pgalstm/core/params.hpp"
#include "pgalstm/core/tape.hpp"
#include "pgalstm/data/sequences.hpp"
#include "pgalstm/models/layers.hpp"

namespace pgalstm {

struct AutoencoderConfig {
  std::size_t features = 10;      // date-level drivers per step
  std::size_t embedding = 5;      // size of the temporal embedding
  std::size_t decoder_units = 16;
  std::size_t steps = 8;          // 7 days of history plus the target date

  void validate() const {
    if (embedding == 0 || decoder_units == 0 || steps == 0) {
      throw UsageError("autoencoder sizes must be positive");
    }
    if (embedding >= features) {
      throw UsageError("embedding must be smaller than the input feature count");
    }
  }
};

// Encoder LSTM (hidden size = embedding) reads the window; its last hidden
// state is the embedding. Decoder LSTM is fed the embedding at every step
// and a linear layer maps its hidden state back to the driver vector.
inline ParamSet init_autoencoder(const AutoencoderConfig& cfg, Rng& rng) {
  cfg.validate();
  ParamSet p;
  add_gate_params(p, "enc.", cfg.features + cfg.embedding, cfg.embedding, rng);
  add_gate_params(p, "dec.", cfg.embedding + cfg.decoder_units, cfg.decoder_units, rng);
  p.add("dec.W_out", glorot_uniform(cfg.decoder_units, cfg.features, rng), true);
  p.add("dec.b_out", Tensor(Shape{cfg.features}, 0.0), false);
  return p;
}

// Step-major window batch: steps[k] is [batch, features].
inline std::vector<Tensor> make_window_batch(std::span<const TemporalWindow> windows,
                                             std::span<const std::size_t> which) {
  if (which.empty()) throw DataError("empty window batch");
  const auto& first = windows[which[0]].steps;
  std::vector<Tensor> steps(first.rows(), Tensor(Shape{which.size(), first.cols()}));
  for (std::size_t i = 0; i < which.size(); ++i) {
    const auto& w = windows[which[i]].steps;
    if (w.rows() != first.rows() || w.cols() != first.cols()) {
      throw ShapeError("windows in a batch differ in shape");
    }
    for (std::size_t k = 0; k < w.rows(); ++k) {
      for (std::size_t c = 0; c < w.cols(); ++c) steps[k].at(i, c) = w.at(k, c);
    }
  }
  return steps;
}

struct AutoencoderOutput {
  Var embedding;                    // [batch, embedding]
  std::vector<Var> reconstruction;  // steps x [batch, features]
};

inline AutoencoderOutput autoencoder_forward(Tape& tape, const BoundParams& p,
                                             const AutoencoderConfig& cfg,
                                             std::span<const Tensor> window) {
  if (window.size() != cfg.steps) {
    throw ShapeError("autoencoder expects a window of " + std::to_string(cfg.steps) +
                     " steps, got " + std::to_string(window.size()));
  }
  const std::size_t batch = window[0].rows();
  const MaskVars no_dropout;
  const auto enc = GateVars::bind(p, "enc.");
  CellState state{constant_matrix(tape, batch, cfg.embedding, 0.0),
                  constant_matrix(tape, batch, cfg.embedding, 0.0)};
  for (const auto& step : window) {
    if (step.cols() != cfg.features) throw ShapeError("window feature width mismatch");
    const Var x = tape.constant(step);
    const Var rec[] = {state.h};
    state = lstm_cell(x, rec, state.c, enc, no_dropout, 0);
  }
  AutoencoderOutput out;
  out.embedding = state.h;

  const auto dec = GateVars::bind(p, "dec.");
  CellState d{constant_matrix(tape, batch, cfg.decoder_units, 0.0),
              constant_matrix(tape, batch, cfg.decoder_units, 0.0)};
  for (std::size_t k = 0; k < cfg.steps; ++k) {
    const Var rec[] = {d.h};
    d = lstm_cell(out.embedding, rec, d.c, dec, no_dropout, 0);
    out.reconstruction.push_back(dense(d.h, p["dec.W_out"], p["dec.b_out"]));
  }
  return out;
}

// Mean squared error over every step and feature of the window.
inline Var reconstruction_loss(Tape& tape, const AutoencoderOutput& out, std::span<const Tensor> window) {
  std::vector<Var> errs;
  for (std::size_t k = 0; k < window.size(); ++k) {
    errs.push_back(sub(out.reconstruction[k], tape.constant(window[k])));
  }
  return mean(square(concat(errs)));
}

// Embeddings for every window under frozen parameters, keyed like the
// window set (date index -> embedding, empty when the date has none).
inline std::vector<std::vector<double>> compute_embeddings(const ParamSet& params,
                                                           const AutoencoderConfig& cfg,
                                                           const WindowSet& windows,
                                                           std::size_t date_count) {
  std::vector<std::vector<double>> out(date_count);
  constexpr std::size_t kChunk = 256;
  for (std::size_t start = 0; start < windows.windows.size(); start += kChunk) {
    const std::size_t end = std::min(windows.windows.size(), start + kChunk);
    std::vector<std::size_t> which;
    for (std::size_t i = start; i < end; ++i) which.push_back(i);
    Tape tape;
    const auto bound = bind(tape, params, false);
    const auto batch = make_window_batch(windows.windows, which);
    const auto result = autoencoder_forward(tape, bound, cfg, batch);
    const Tensor& e = result.embedding.value();
    for (std::size_t i = 0; i < which.size(); ++i) {
      auto& dst = out[windows.windows[which[i]].date_index];
      dst.assign(e.data() + i * cfg.embedding, e.data() + (i + 1) * cfg.embedding);
    }
  }
  return out;
}

}  // namespace pgalstm
