#pragma once

#include <span>
#include <string>
#include <vector>

#include "pgalstm/config.hpp"
#include "pgalstm/core/checkpoint.hpp"
#include "pgalstm/data/normalize.hpp"
#include "pgalstm/data/sequences.hpp"
#include "pgalstm/data/split.hpp"
#include "pgalstm/training/train.hpp"
#include "pgalstm/uq/mc.hpp"
#include "pgalstm/uq/metrics.hpp"

namespace pgalstm {

// Split, normalization and driver windows: everything derived from the raw
// dataset before any model is involved.
struct PreparedData {
  Split split;
  std::vector<std::size_t> fit_dates;  // training dates used for gradient steps
  std::vector<std::size_t> val_dates;  // trailing training dates for early stopping
  NormalizationStats stats;
  NormalizedDataset data;
  WindowSet windows;
  std::vector<double> depths;  // metres

  std::size_t driver_count() const { return data.layout.date_level.size(); }
};

inline PreparedData prepare_data(const LakeDataset& ds, const ExperimentConfig& cfg) {
  PreparedData p;
  p.split = split_train_test(ds, cfg.train_years, cfg.train_fraction, cfg.split_seed);
  if (p.split.train.empty()) throw DataError("split selected no training dates");
  std::tie(p.fit_dates, p.val_dates) = holdout_last(p.split.train, cfg.val_fraction);
  if (p.fit_dates.empty()) throw DataError("validation holdout left no training dates");
  std::tie(p.stats, p.data) = fit_and_apply_normalization(p.split.train, ds);
  p.windows = build_windows(p.data, cfg.window);
  p.depths = ds.depths;
  return p;
}

inline std::vector<TemporalWindow> windows_for(const WindowSet& set, std::span<const std::size_t> dates) {
  std::vector<TemporalWindow> out;
  for (auto t : dates) {
    if (const auto* w = set.for_date(t)) out.push_back(*w);
  }
  return out;
}

inline AutoencoderConfig autoencoder_config(const PreparedData& p, const ExperimentConfig& cfg) {
  return cfg.autoencoder(p.driver_count());
}

// Pretrains on windows of the fitting dates; validation windows give the
// held-out reconstruction error.
inline PretrainResult pretrain_encoder(const PreparedData& p, const ExperimentConfig& cfg) {
  const auto fit = windows_for(p.windows, p.fit_dates);
  const auto val = windows_for(p.windows, p.val_dates);
  return pretrain_autoencoder(autoencoder_config(p, cfg), fit, val, cfg.pretrain);
}

struct SequenceSets {
  std::vector<DepthSequence> fit;
  std::vector<DepthSequence> val;
  std::vector<DepthSequence> test;  // test dates holding at least one observation
  std::vector<std::string> test_labels;
  std::size_t skipped = 0;          // dates without a full driver window
};

inline SequenceSets build_sequences(const PreparedData& p, const std::vector<std::vector<double>>& embeddings,
                                    const ExperimentConfig& cfg) {
  SequenceSets s;
  const auto collect = [&](std::span<const std::size_t> dates, std::vector<DepthSequence>& out, bool label) {
    for (auto t : dates) {
      if (embeddings[t].empty()) {
        ++s.skipped;
        continue;
      }
      out.push_back(build_depth_sequence(p.data, t, embeddings[t], cfg.padding));
      if (out.back().observations() == 0) {
        out.pop_back();
        continue;
      }
      if (label) s.test_labels.push_back(p.data.dates[t].iso());
    }
  };
  collect(p.fit_dates, s.fit, false);
  collect(p.val_dates, s.val, false);
  collect(p.split.test, s.test, true);
  if (s.fit.empty()) throw DataError("no training dates have a full driver window");
  return s;
}

inline ArchConfig arch_for(const ExperimentConfig& cfg, const PreparedData& p, std::size_t input_width) {
  ArchConfig a = cfg.arch;
  a.input_width = input_width;
  a.output_mean = p.stats.temperature_mean;
  a.output_scale = p.stats.temperature_std;
  return a;
}

inline std::uint64_t run_seed(const ExperimentConfig& cfg, std::size_t run) { return cfg.train.seed + run; }

inline TrainResult train_run(ModelKind kind, const PreparedData& p, const SequenceSets& seqs,
                             const ExperimentConfig& cfg, std::size_t run, const EpochCallback& on_epoch = {}) {
  TrainConfig tc = cfg.train;
  tc.seed = run_seed(cfg, run);
  return train_model(kind, arch_for(cfg, p, seqs.fit[0].width()), seqs.fit, seqs.val, tc, p.stats.density_std,
                     on_epoch);
}

// Rebuilds a trained model from a checkpoint, checking that its tensors
// match the architecture implied by the configuration and data.
inline TrainedModel restore_model(const Checkpoint& ckpt, ModelKind kind, const ArchConfig& arch) {
  if (ckpt.model_id != model_name(kind)) {
    throw DataError("checkpoint holds model '" + ckpt.model_id + "', expected '" + std::string(model_name(kind)) +
                    "'");
  }
  Rng scratch(0);
  const ParamSet expected = init_depth_params(kind, arch, scratch);
  bool ok = expected.size() == ckpt.params.size();
  for (std::size_t i = 0; ok && i < expected.size(); ++i) {
    const auto& a = expected.entry(i);
    const auto& b = ckpt.params.entry(i);
    ok = a.name == b.name && a.value.shape() == b.value.shape() && a.weight == b.weight;
  }
  if (!ok) throw DataError("checkpoint tensors do not match the configured architecture (schema mismatch)");
  return {kind, arch, ckpt.params};
}

inline ParamSet restore_encoder(const Checkpoint& ckpt, const AutoencoderConfig& ae) {
  if (ckpt.model_id != "autoencoder") throw DataError("checkpoint is not an autoencoder: " + ckpt.model_id);
  Rng scratch(0);
  const ParamSet expected = init_autoencoder(ae, scratch);
  bool ok = expected.size() == ckpt.params.size();
  for (std::size_t i = 0; ok && i < expected.size(); ++i) {
    ok = expected.entry(i).name == ckpt.params.entry(i).name &&
         expected.entry(i).value.shape() == ckpt.params.entry(i).value.shape();
  }
  if (!ok) throw DataError("encoder checkpoint does not match the configured autoencoder (schema mismatch)");
  return ckpt.params;
}

// ---- evaluation ------------------------------------------------------------

struct MetricsReport {
  std::string model;
  std::vector<std::uint64_t> seeds;
  std::vector<RunMetrics> runs;
  // spread of the per-run statistics across runs
  MeanStd run_rmse_per_sample;
  MeanStd run_rmse_mean;
  MeanStd run_inconsistency_per_sample;
  MeanStd run_inconsistency_mean;
  // every sample of every run pooled per date
  RunMetrics pooled;
  CalibrationCurve calibration;  // from the pooled samples
  std::vector<McSampleSet> pooled_samples;
  std::vector<double> depths;
};

// Concatenates the sample rows of several runs date by date.
inline std::vector<McSampleSet> pool_samples(std::span<const std::vector<McSampleSet>> runs) {
  if (runs.empty()) throw DataError("no runs to pool");
  std::vector<McSampleSet> pooled = runs[0];
  for (std::size_t r = 1; r < runs.size(); ++r) {
    if (runs[r].size() != pooled.size()) throw ShapeError("runs disagree on the test dates");
    for (std::size_t i = 0; i < pooled.size(); ++i) {
      auto& dst = pooled[i];
      const auto& src = runs[r][i];
      if (src.date != dst.date || src.depths != dst.depths) throw ShapeError("runs disagree on the test dates");
      dst.n_samples += src.n_samples;
      dst.temperature.insert(dst.temperature.end(), src.temperature.begin(), src.temperature.end());
      dst.density.insert(dst.density.end(), src.density.begin(), src.density.end());
      dst.mask_seeds.insert(dst.mask_seeds.end(), src.mask_seeds.begin(), src.mask_seeds.end());
    }
  }
  return pooled;
}

inline MetricsReport build_report(ModelKind kind, std::span<const std::uint64_t> seeds,
                                  std::span<const std::vector<McSampleSet>> run_samples,
                                  std::span<const DepthSequence> test, std::span<const double> depths,
                                  const physics::ToleranceSpec& tol) {
  if (test.empty()) throw DataError("evaluation needs a nonempty test set");
  std::vector<Observed> truth;
  for (const auto& s : test) truth.push_back(Observed::of(s));
  MetricsReport r;
  r.model = std::string(model_name(kind));
  r.seeds.assign(seeds.begin(), seeds.end());
  r.depths.assign(depths.begin(), depths.end());
  std::vector<double> ps, pm, ips, im;
  for (const auto& sets : run_samples) {
    r.runs.push_back(evaluate_samples(sets, truth, is_monotone(kind), tol));
    ps.push_back(r.runs.back().rmse_per_sample.mean);
    pm.push_back(r.runs.back().rmse_mean);
    ips.push_back(r.runs.back().inconsistency_per_sample);
    im.push_back(r.runs.back().inconsistency_mean);
  }
  r.run_rmse_per_sample = mean_std(ps);
  r.run_rmse_mean = mean_std(pm);
  r.run_inconsistency_per_sample = mean_std(ips);
  r.run_inconsistency_mean = mean_std(im);
  r.pooled_samples = pool_samples(run_samples);
  r.pooled = evaluate_samples(r.pooled_samples, truth, is_monotone(kind), tol);
  if (!r.pooled.percentiles.empty()) r.calibration = calibration_curve(r.pooled.percentiles);
  return r;
}

// MC-samples each trained model on the test dates and reports.
inline MetricsReport evaluate_models(ModelKind kind, std::span<const TrainedModel> models,
                                     std::span<const std::uint64_t> seeds, const PreparedData& p,
                                     const SequenceSets& seqs, const ExperimentConfig& cfg) {
  if (seqs.test.empty()) throw DataError("evaluation needs a nonempty test set");
  std::vector<std::vector<McSampleSet>> samples;
  for (const auto& m : models) samples.push_back(mc_sample(m, seqs.test, seqs.test_labels, p.stats, cfg.mc));
  return build_report(kind, seeds, samples, seqs.test, p.depths, {cfg.density_tolerance});
}

}  // namespace pgalstm
