#pragma once

#include <algorithm>
#include <cstdint>
#include <exception>
#include <mutex>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "pgalstm/core/rng.hpp"
#include "pgalstm/data/sequences.hpp"
#include "pgalstm/errors.hpp"
#include "pgalstm/physics.hpp"
#include "pgalstm/training/train.hpp"
#include "pgalstm/uq/samples.hpp"

namespace pgalstm {

struct McConfig {
  std::size_t samples = 100;
  double dropout = 0.2;
  std::uint64_t seed = 0;
  unsigned threads = 1;

  void validate() const {
    if (samples == 0) throw UsageError("sample count must be positive");
    if (!(dropout >= 0.0 && dropout < 1.0)) throw UsageError("MC dropout probability must be in [0, 1)");
  }
};

// Seed of the mask stream for sample row s.
inline std::uint64_t mc_mask_seed(std::uint64_t seed, std::size_t s) { return Rng(seed).derive(s).seed(); }

// Draws `samples` dropout networks over frozen parameters. Sample s uses one
// mask set, drawn from its own stream, with an independent row per date;
// every date is predicted under it. Rows are independent, so they may run
// on several threads without changing the result.
inline std::vector<McSampleSet> mc_sample(const TrainedModel& model, std::span<const DepthSequence> seqs,
                                          std::span<const std::string> date_labels,
                                          const NormalizationStats& stats, const McConfig& cfg) {
  cfg.validate();
  if (seqs.empty()) throw DataError("mc_sample: no dates to sample");
  if (date_labels.size() != seqs.size()) throw ShapeError("mc_sample: one label per date required");
  const std::size_t depths = seqs[0].depths();
  std::vector<McSampleSet> sets;
  sets.reserve(seqs.size());
  for (std::size_t i = 0; i < seqs.size(); ++i) {
    sets.emplace_back(date_labels[i], cfg.samples, depths, cfg.dropout);
    for (std::size_t s = 0; s < cfg.samples; ++s) sets.back().mask_seeds.push_back(mc_mask_seed(cfg.seed, s));
  }
  const auto sites = dropout_sites(model.kind, model.arch);

  const auto run_sample = [&](std::size_t s) {
    Rng rng(sets[0].mask_seeds[s]);
    const auto masks = DropoutMasks::sample(sites, seqs.size(), cfg.dropout, rng);
    const auto pred = predict(model, seqs, &masks);
    for (std::size_t i = 0; i < seqs.size(); ++i) {
      auto& set = sets[i];
      for (std::size_t d = 0; d < depths; ++d) {
        const double y = pred.temperature.at(i, d);
        set.temperature[s * depths + d] = y;
        set.density[s * depths + d] = pred.density ? stats.denormalize_density(pred.density->at(i, d))
                                                   : physics::density_from_temperature(y);
      }
    }
  };

  const unsigned workers = std::max(1u, std::min<unsigned>(cfg.threads, static_cast<unsigned>(cfg.samples)));
  if (workers == 1) {
    for (std::size_t s = 0; s < cfg.samples; ++s) run_sample(s);
    return sets;
  }
  std::exception_ptr failure;
  std::mutex failure_mutex;
  std::vector<std::thread> pool;
  for (unsigned w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      try {
        for (std::size_t s = w; s < cfg.samples; s += workers) run_sample(s);
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
  return sets;
}

}  // namespace pgalstm
