#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "pgalstm/core/rng.hpp"
#include "pgalstm/data/dataset.hpp"
#include "pgalstm/errors.hpp"

namespace pgalstm {

// Date indices, ascending.
struct Split {
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
  Date block_end;  // first date after the training block
  std::size_t block_observations = 0;
  std::size_t target_observations = 0;
  std::size_t selected_observations = 0;
};

// The first `train_years` calendar years form the training block; every
// later date is test. Inside the block, dates with observations are visited
// in seeded random order and accumulated until their observation count
// reaches `fraction` of the block's observations.
inline Split split_train_test(const LakeDataset& ds, int train_years, double fraction, std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction <= 1.0)) throw UsageError("train fraction must be in (0, 1]");
  if (train_years <= 0) throw UsageError("train years must be positive");
  if (ds.dates.empty()) throw DataError("cannot split an empty dataset");
  Split split;
  split.block_end = ds.dates.front().plus_years(train_years);
  const Date required_end = ds.dates.front().plus_years(train_years + 1).plus_days(-1);
  if (ds.dates.back() < required_end) {
    throw DataError("dataset must span at least " + std::to_string(train_years + 1) +
                    " years to hold out a test period");
  }
  std::vector<std::size_t> candidates;
  for (std::size_t t = 0; t < ds.date_count(); ++t) {
    if (ds.dates[t] < split.block_end) {
      const auto n = ds.observation_count(t);
      split.block_observations += n;
      if (n > 0) candidates.push_back(t);
    } else {
      split.test.push_back(t);
    }
  }
  split.target_observations = static_cast<std::size_t>(
      std::ceil(fraction * static_cast<double>(split.block_observations)));
  Rng rng(seed);
  rng.shuffle(candidates);
  for (auto t : candidates) {
    if (split.selected_observations >= split.target_observations) break;
    split.train.push_back(t);
    split.selected_observations += ds.observation_count(t);
  }
  std::sort(split.train.begin(), split.train.end());
  return split;
}

// Chronologically last `fraction` of the dates go to validation.
inline std::pair<std::vector<std::size_t>, std::vector<std::size_t>> holdout_last(
    std::span<const std::size_t> dates, double fraction) {
  if (!(fraction >= 0.0 && fraction < 1.0)) throw UsageError("validation fraction must be in [0, 1)");
  const auto n_val = static_cast<std::size_t>(std::floor(fraction * static_cast<double>(dates.size())));
  const auto cut = static_cast<std::ptrdiff_t>(dates.size() - n_val);
  return {std::vector<std::size_t>(dates.begin(), dates.begin() + cut),
          std::vector<std::size_t>(dates.begin() + cut, dates.end())};
}

}  // namespace pgalstm
