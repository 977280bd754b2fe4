#pragma once

#include <chrono>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "pgalstm/core/optimizer.hpp"
#include "pgalstm/core/params.hpp"
#include "pgalstm/core/rng.hpp"
#include "pgalstm/data/dataset.hpp"
#include "pgalstm/data/sequences.hpp"
#include "pgalstm/errors.hpp"
#include "pgalstm/models/autoencoder.hpp"
#include "pgalstm/models/depth_model.hpp"
#include "pgalstm/training/loss.hpp"

namespace pgalstm {

struct TrainConfig {
  LossWeights weights;
  double learning_rate = 3e-3;
  std::size_t epochs = 400;
  std::size_t batch_size = 32;
  double dropout = 0.2;
  bool train_dropout = true;  // apply dropout during training steps
  std::size_t patience = 50;  // epochs without validation improvement; 0 disables
  double clip_norm = 1.0;     // global gradient-norm ceiling; 0 disables
  std::uint64_t seed = 0;

  void validate() const {
    weights.validate();
    if (!(learning_rate > 0.0)) throw UsageError("learning rate must be positive");
    if (batch_size == 0) throw UsageError("batch size must be positive");
    if (!(dropout >= 0.0 && dropout < 1.0)) throw UsageError("dropout must be in [0, 1)");
    if (!(clip_norm >= 0.0)) throw UsageError("clip_norm must be >= 0");
  }
};

// Rescales the gradients so their joint L2 norm is at most `max_norm`.
inline void clip_gradients(std::vector<Tensor>& grads, double max_norm) {
  if (max_norm <= 0.0) return;
  double ss = 0.0;
  for (const auto& g : grads) {
    for (double v : g.values()) ss += v * v;
  }
  const double norm = std::sqrt(ss);
  if (!std::isfinite(norm)) throw NumericalError("non-finite gradient norm");
  if (norm <= max_norm) return;
  const double f = max_norm / norm;
  for (auto& g : grads) {
    for (std::size_t i = 0; i < g.size(); ++i) g[i] *= f;
  }
}

struct TrainedModel {
  ModelKind kind = ModelKind::Pga;
  ArchConfig arch;
  ParamSet params;
};

struct EpochRecord {
  std::size_t epoch = 0;
  LossValues loss;  // batch means of the weighted terms
  double val_rmse = std::numeric_limits<double>::quiet_NaN();
  double seconds = 0.0;
};

struct TrainReport {
  std::vector<EpochRecord> epochs;
  std::size_t best_epoch = 0;
  double best_val_rmse = std::numeric_limits<double>::quiet_NaN();
  bool early_stopped = false;
  bool diverged = false;
  std::string divergence;

  static constexpr const char* kCsvHeader = "epoch,y_loss,z_loss,r_loss,phy_loss,val_rmse,seconds";

  // With `timing` false the seconds column is omitted, which makes the
  // output a pure function of the inputs and seed.
  void write_csv(std::ostream& os, bool timing = true) const {
    std::string header = kCsvHeader;
    if (!timing) header.resize(header.rfind(','));
    os << header << '\n';
    for (const auto& e : epochs) {
      os << e.epoch << ',' << format_double(e.loss.y) << ',' << format_double(e.loss.z) << ','
         << format_double(e.loss.r) << ',' << format_double(e.loss.phy) << ',' << format_double(e.val_rmse);
      if (timing) os << ',' << format_double(e.seconds);
      os << '\n';
    }
  }
};

struct TrainResult {
  TrainedModel model;
  TrainReport report;
};

struct Prediction {
  Tensor temperature;             // [sequences, depths], degC
  std::optional<Tensor> density;  // normalized, monotone model only
};

namespace detail {

inline void copy_rows(const Tensor& src, Tensor& dst, std::size_t row0) {
  const std::size_t cols = src.cols();
  std::copy(src.data(), src.data() + src.size(), dst.data() + row0 * cols);
}

}  // namespace detail

// Forward pass over every sequence, optionally with a fixed dropout mask
// set per row. `masks` must have one row per sequence when given.
inline Prediction predict(const TrainedModel& m, std::span<const DepthSequence> seqs,
                          const DropoutMasks* masks = nullptr, std::size_t chunk = 512) {
  if (seqs.empty()) throw DataError("predict: no sequences");
  Prediction out;
  const std::size_t depths = seqs[0].depths();
  out.temperature = Tensor(Shape{seqs.size(), depths});
  if (is_monotone(m.kind)) out.density = Tensor(Shape{seqs.size(), depths});
  for (std::size_t start = 0; start < seqs.size(); start += chunk) {
    const std::size_t end = std::min(seqs.size(), start + chunk);
    std::vector<std::size_t> which(end - start);
    std::iota(which.begin(), which.end(), start);
    const auto batch = make_batch(seqs, which);
    Tape tape;
    const auto bound = bind(tape, m.params, false);
    MaskVars mv;
    if (masks && masks->active()) {
      DropoutMasks slice;
      slice.p = masks->p;
      for (const auto& full : masks->masks) {
        Tensor part(Shape{which.size(), full.cols()});
        std::copy(full.data() + start * full.cols(), full.data() + end * full.cols(), part.data());
        slice.masks.push_back(std::move(part));
      }
      mv = MaskVars(tape, slice);
    }
    const auto o = depth_forward(m.kind, tape, bound, m.arch, batch, mv);
    detail::copy_rows(o.temperature.value(), out.temperature, start);
    if (o.density) detail::copy_rows(o.density->value(), *out.density, start);
  }
  return out;
}

// Root mean squared temperature error over observed cells.
inline double masked_rmse(const Tensor& predicted, std::span<const DepthSequence> seqs) {
  double ss = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < seqs.size(); ++i) {
    for (std::size_t d = 0; d < seqs[i].depths(); ++d) {
      if (seqs[i].mask[d] == 0.0) continue;
      const double e = predicted.at(i, d) - seqs[i].temperature[d];
      ss += e * e;
      ++n;
    }
  }
  if (n == 0) throw DataError("rmse over zero observations");
  return std::sqrt(ss / static_cast<double>(n));
}

// One optimizer step on a batch; returns the loss values. Throws
// NumericalError on a non-finite loss or gradient, before touching params.
inline LossValues train_step(const TrainedModel& m, ParamSet& params, Adam& adam, const DepthBatch& batch,
                             const DropoutMasks& masks, const LossWeights& weights, double density_std,
                             double clip_norm = 0.0) {
  Tape tape;
  const auto bound = bind(tape, params, true);
  const MaskVars mv(tape, masks);
  const auto out = depth_forward(m.kind, tape, bound, m.arch, batch, mv);
  const auto terms = composite_loss(tape, m.kind, out, batch, bound, weights, density_std);
  auto grads = bound.gradients(tape.backward(terms.total));
  clip_gradients(grads, clip_norm);
  adam.step(params, grads);
  return LossValues::of(terms);
}

using EpochCallback = std::function<void(const EpochRecord&)>;

// Mini-batch Adam with early stopping on validation RMSE. The returned
// parameters are those of the best validation epoch (the last epoch when
// there is no validation set). A non-finite loss stops training and keeps
// the last good parameters.
inline TrainResult train_model(ModelKind kind, ArchConfig arch, std::span<const DepthSequence> train,
                               std::span<const DepthSequence> val, const TrainConfig& cfg,
                               double density_std, const EpochCallback& on_epoch = {}) {
  cfg.validate();
  if (train.empty()) throw DataError("no training sequences");
  arch.input_width = train[0].width();

  Rng root(cfg.seed);
  Rng init_rng = root.derive(1);
  Rng order_rng = root.derive(2);
  Rng dropout_rng = root.derive(3);

  TrainResult result;
  result.model = {kind, arch, init_depth_params(kind, arch, init_rng)};
  auto& report = result.report;
  ParamSet& params = result.model.params;
  ParamSet best = params;
  Adam adam(AdamConfig{cfg.learning_rate});
  const auto sites = dropout_sites(kind, arch);
  const double p = cfg.train_dropout ? cfg.dropout : 0.0;

  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    order_rng.shuffle(order);
    EpochRecord rec;
    rec.epoch = epoch;
    std::size_t batches = 0;
    try {
      for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
        const std::size_t end = std::min(order.size(), start + cfg.batch_size);
        const std::span<const std::size_t> which(order.data() + start, end - start);
        const auto batch = make_batch(train, which);
        if (batch.observations == 0) continue;
        const auto masks = DropoutMasks::sample(sites, batch.batch, p, dropout_rng);
        const auto v = train_step(result.model, params, adam, batch, masks, cfg.weights, density_std, cfg.clip_norm);
        rec.loss.y += v.y;
        rec.loss.z += v.z;
        rec.loss.r += v.r;
        rec.loss.phy += v.phy;
        rec.loss.total += v.total;
        ++batches;
      }
    } catch (const NumericalError& e) {
      report.diverged = true;
      report.divergence = "epoch " + std::to_string(epoch) + ": " + e.what();
      break;
    }
    if (batches > 0) {
      const double inv = 1.0 / static_cast<double>(batches);
      rec.loss.y *= inv;
      rec.loss.z *= inv;
      rec.loss.r *= inv;
      rec.loss.phy *= inv;
      rec.loss.total *= inv;
    }
    if (!val.empty()) rec.val_rmse = masked_rmse(predict(result.model, val).temperature, val);
    rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    report.epochs.push_back(rec);
    if (on_epoch) on_epoch(rec);

    if (val.empty()) {
      report.best_epoch = epoch;
      continue;
    }
    if (std::isnan(report.best_val_rmse) || rec.val_rmse < report.best_val_rmse) {
      report.best_val_rmse = rec.val_rmse;
      report.best_epoch = epoch;
      best = params;
    } else if (cfg.patience > 0 && epoch - report.best_epoch >= cfg.patience) {
      report.early_stopped = true;
      break;
    }
  }
  if (!val.empty() && report.best_epoch > 0) params = best;
  return result;
}

// ---- temporal autoencoder pretraining ------------------------------------

struct PretrainConfig {
  std::size_t epochs = 60;
  std::size_t batch_size = 32;
  double learning_rate = 3e-3;
  std::uint64_t seed = 0;

  void validate() const {
    if (batch_size == 0) throw UsageError("batch size must be positive");
    if (!(learning_rate > 0.0)) throw UsageError("learning rate must be positive");
  }
};

struct PretrainResult {
  ParamSet params;
  std::vector<double> train_mse;  // per epoch, mean over batches
  double initial_val_mse = std::numeric_limits<double>::quiet_NaN();
  double final_val_mse = std::numeric_limits<double>::quiet_NaN();
};

inline double reconstruction_mse(const ParamSet& params, const AutoencoderConfig& cfg,
                                 std::span<const TemporalWindow> windows) {
  if (windows.empty()) throw DataError("no windows to evaluate");
  double total = 0.0;
  constexpr std::size_t kChunk = 256;
  for (std::size_t start = 0; start < windows.size(); start += kChunk) {
    const std::size_t end = std::min(windows.size(), start + kChunk);
    std::vector<std::size_t> which(end - start);
    std::iota(which.begin(), which.end(), start);
    Tape tape;
    const auto bound = bind(tape, params, false);
    const auto batch = make_window_batch(windows, which);
    const auto out = autoencoder_forward(tape, bound, cfg, batch);
    total += reconstruction_loss(tape, out, batch).value().item() * static_cast<double>(which.size());
  }
  return total / static_cast<double>(windows.size());
}

// Trains the encoder and decoder on reconstruction error. Zero epochs
// returns the seeded initialization unchanged.
inline PretrainResult pretrain_autoencoder(const AutoencoderConfig& ae, std::span<const TemporalWindow> train,
                                           std::span<const TemporalWindow> val, const PretrainConfig& cfg) {
  ae.validate();
  cfg.validate();
  Rng root(cfg.seed);
  Rng init_rng = root.derive(11);
  Rng order_rng = root.derive(12);
  PretrainResult result;
  result.params = init_autoencoder(ae, init_rng);
  if (!val.empty()) result.initial_val_mse = reconstruction_mse(result.params, ae, val);
  if (cfg.epochs > 0 && train.empty()) throw DataError("no training windows for the autoencoder");

  Adam adam(AdamConfig{cfg.learning_rate});
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    order_rng.shuffle(order);
    double sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      const std::span<const std::size_t> which(order.data() + start, end - start);
      Tape tape;
      const auto bound = bind(tape, result.params, true);
      const auto batch = make_window_batch(train, which);
      const auto out = autoencoder_forward(tape, bound, ae, batch);
      const Var loss = reconstruction_loss(tape, out, batch);
      adam.step(result.params, bound.gradients(tape.backward(loss)));
      sum += loss.value().item();
      ++batches;
    }
    result.train_mse.push_back(sum / static_cast<double>(batches));
  }
  if (!val.empty()) result.final_val_mse = reconstruction_mse(result.params, ae, val);
  return result;
}

}  // namespace pgalstm
