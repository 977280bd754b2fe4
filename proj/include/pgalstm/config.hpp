#pragma once

#include <charconv>
#include <cstdint>
#include <fstream>
#include <functional>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <type_traits>
#include <vector>

#include "pgalstm/data/dataset.hpp"
#include "pgalstm/data/synthetic.hpp"
#include "pgalstm/errors.hpp"
#include "pgalstm/models/autoencoder.hpp"
#include "pgalstm/models/depth_model.hpp"
#include "pgalstm/training/train.hpp"
#include "pgalstm/uq/mc.hpp"

namespace pgalstm {

// Every tunable of a run. Defaults follow the reference model setup:
// 7-day window, 5-d embedding, padding 10, 8 units, 5-unit ELU layers,
// dropout 0.2 and 100 MC samples.
struct ExperimentConfig {
  SyntheticConfig synthetic;
  std::uint64_t data_seed = 7;

  int train_years = 4;
  double train_fraction = 0.4;
  std::uint64_t split_seed = 0;
  double val_fraction = 0.2;

  std::size_t window = 7;
  std::size_t embedding = 5;
  std::size_t decoder_units = 16;
  std::size_t padding = 10;
  ArchConfig arch;

  PretrainConfig pretrain{.epochs = 60, .batch_size = 32, .learning_rate = 3e-3, .seed = 0};

  std::string model = "pga";
  TrainConfig train;
  std::size_t runs = 1;  // training runs; run r uses seed + r

  McConfig mc;
  double density_tolerance = 1e-5;

  void validate() const {
    parse_model_kind(model);
    train.validate();
    pretrain.validate();
    mc.validate();
    physics::ToleranceSpec{density_tolerance}.validate();
    if (runs == 0) throw UsageError("runs must be positive");
    if (window == 0) throw UsageError("window must be positive");
    if (!(val_fraction >= 0.0 && val_fraction < 1.0)) throw UsageError("val_fraction must be in [0, 1)");
  }

  AutoencoderConfig autoencoder(std::size_t features) const {
    AutoencoderConfig ae;
    ae.features = features;
    ae.embedding = embedding;
    ae.decoder_units = decoder_units;
    ae.steps = window + 1;
    return ae;
  }
};

namespace config_detail {

template <class T>
T parse_value(std::string_view key, const std::string& text) {
  const auto bad = [&] { return UsageError("invalid value '" + text + "' for key '" + std::string(key) + "'"); };
  if constexpr (std::is_same_v<T, std::string>) {
    return text;
  } else if constexpr (std::is_same_v<T, bool>) {
    if (text == "true" || text == "1") return true;
    if (text == "false" || text == "0") return false;
    throw bad();
  } else {
    T v{};
    const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
    if (ec != std::errc() || ptr != text.data() + text.size()) throw bad();
    return v;
  }
}

template <class T>
std::string format_value(const T& v) {
  if constexpr (std::is_same_v<T, std::string>) {
    return v;
  } else if constexpr (std::is_same_v<T, bool>) {
    return v ? "true" : "false";
  } else if constexpr (std::is_floating_point_v<T>) {
    return format_double(v);
  } else {
    return std::to_string(v);
  }
}

}  // namespace config_detail

struct ConfigKey {
  std::string name;
  std::string help;
  std::function<std::string(const ExperimentConfig&)> get;
  std::function<void(ExperimentConfig&, const std::string&)> set;
};

inline const std::vector<ConfigKey>& config_keys() {
  static const std::vector<ConfigKey> keys = [] {
    std::vector<ConfigKey> k;
    const auto add = [&k](std::string name, std::string help, auto member) {
      using T = std::remove_cvref_t<decltype(member(std::declval<ExperimentConfig&>()))>;
      const std::string key = name;
      k.push_back({std::move(name), std::move(help),
                   [member](const ExperimentConfig& c) {
                     return config_detail::format_value(member(const_cast<ExperimentConfig&>(c)));
                   },
                   [member, key](ExperimentConfig& c, const std::string& v) {
                     member(c) = config_detail::parse_value<T>(key, v);
                   }});
    };
#define PGALSTM_KEY(name, help, expr) add(name, help, [](ExperimentConfig& c) -> auto& { return expr; })
    PGALSTM_KEY("years", "synthetic data: years to generate", c.synthetic.years);
    PGALSTM_KEY("depths", "synthetic data: depth grid size", c.synthetic.depths);
    PGALSTM_KEY("depth_step", "synthetic data: metres between depths", c.synthetic.depth_step);
    PGALSTM_KEY("noise_sd", "synthetic data: label noise (degC)", c.synthetic.noise_sd);
    PGALSTM_KEY("thermocline_depth", "synthetic data: mid-summer thermocline (m)", c.synthetic.thermocline_depth);
    PGALSTM_KEY("observation_rate", "synthetic data: share of dates with a profile", c.synthetic.observation_rate);
    PGALSTM_KEY("depth_dropout", "synthetic data: per-depth missing rate", c.synthetic.depth_dropout);
    PGALSTM_KEY("simulator_column", "synthetic data: emit a glm_temp column", c.synthetic.simulator_column);
    PGALSTM_KEY("start_date", "synthetic data: first date (ISO)", c.synthetic.start_date);
    PGALSTM_KEY("data_seed", "synthetic data: seed", c.data_seed);
    PGALSTM_KEY("train_years", "split: leading years eligible for training", c.train_years);
    PGALSTM_KEY("train_fraction", "split: share of block observations to train on", c.train_fraction);
    PGALSTM_KEY("split_seed", "split: date sampling seed", c.split_seed);
    PGALSTM_KEY("val_fraction", "split: trailing share of training dates for validation", c.val_fraction);
    PGALSTM_KEY("window", "days of driver history per embedding", c.window);
    PGALSTM_KEY("embedding", "temporal embedding size", c.embedding);
    PGALSTM_KEY("decoder_units", "autoencoder decoder units", c.decoder_units);
    PGALSTM_KEY("padding", "surface copies prepended to each profile", c.padding);
    PGALSTM_KEY("units", "depth LSTM units", c.arch.units);
    PGALSTM_KEY("dense_units", "units per ELU layer", c.arch.dense_units);
    PGALSTM_KEY("delta_layers", "ELU layers before the density increment", c.arch.delta_layers);
    PGALSTM_KEY("head_layers", "ELU layers of the temperature head", c.arch.head_layers);
    PGALSTM_KEY("baseline_layers", "ELU layers of the baseline LSTMs", c.arch.baseline_layers);
    PGALSTM_KEY("z0_init", "initial surface density (normalized)", c.arch.z0_init);
    PGALSTM_KEY("ae_epochs", "autoencoder pretraining epochs", c.pretrain.epochs);
    PGALSTM_KEY("ae_batch_size", "autoencoder windows per batch", c.pretrain.batch_size);
    PGALSTM_KEY("ae_learning_rate", "autoencoder learning rate", c.pretrain.learning_rate);
    PGALSTM_KEY("ae_seed", "autoencoder seed", c.pretrain.seed);
    PGALSTM_KEY("model", "depth model: pga, lstm or pgl", c.model);
    PGALSTM_KEY("epochs", "training epochs", c.train.epochs);
    PGALSTM_KEY("batch_size", "dates per batch", c.train.batch_size);
    PGALSTM_KEY("learning_rate", "Adam learning rate", c.train.learning_rate);
    PGALSTM_KEY("dropout", "training dropout probability", c.train.dropout);
    PGALSTM_KEY("train_dropout", "apply dropout while training", c.train.train_dropout);
    PGALSTM_KEY("patience", "early-stopping patience in epochs (0 disables)", c.train.patience);
    PGALSTM_KEY("clip_norm", "gradient-norm ceiling (0 disables)", c.train.clip_norm);
    PGALSTM_KEY("seed", "training seed of the first run", c.train.seed);
    PGALSTM_KEY("lambda_z", "density loss weight", c.train.weights.lambda_z);
    PGALSTM_KEY("lambda_r", "weight-norm penalty", c.train.weights.lambda_r);
    PGALSTM_KEY("lambda_phy", "physics loss weight (pgl)", c.train.weights.lambda_phy);
    PGALSTM_KEY("runs", "training runs with consecutive seeds", c.runs);
    PGALSTM_KEY("mc_samples", "MC dropout samples per date", c.mc.samples);
    PGALSTM_KEY("mc_dropout", "MC dropout probability", c.mc.dropout);
    PGALSTM_KEY("mc_seed", "MC mask seed", c.mc.seed);
    PGALSTM_KEY("threads", "threads for MC sampling", c.mc.threads);
    PGALSTM_KEY("density_tolerance", "monotonicity tolerance (kg/m^3)", c.density_tolerance);
#undef PGALSTM_KEY
    return k;
  }();
  return keys;
}

inline const ConfigKey& config_key(std::string_view name) {
  for (const auto& k : config_keys()) {
    if (k.name == name) return k;
  }
  throw UsageError("unknown config key '" + std::string(name) + "'");
}

inline void set_config_value(ExperimentConfig& cfg, std::string_view key, const std::string& value) {
  config_key(key).set(cfg, value);
}

// key = value lines; '#' starts a comment.
inline void apply_config_text(ExperimentConfig& cfg, std::istream& in, const std::string& source = "config") {
  std::string line;
  for (std::size_t n = 1; std::getline(in, line); ++n) {
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    const std::string body(detail::trim(line));
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string::npos) {
      throw UsageError(source + ":" + std::to_string(n) + ": expected key = value");
    }
    const std::string key(detail::trim(std::string_view(body).substr(0, eq)));
    try {
      set_config_value(cfg, key, std::string(detail::trim(std::string_view(body).substr(eq + 1))));
    } catch (const UsageError& e) {
      throw UsageError(source + ":" + std::to_string(n) + ": " + e.what());
    }
  }
}

inline void apply_config_file(ExperimentConfig& cfg, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open config file: " + path);
  apply_config_text(cfg, in, path);
}

inline std::map<std::string, std::string> config_snapshot(const ExperimentConfig& cfg) {
  std::map<std::string, std::string> out;
  for (const auto& k : config_keys()) out[k.name] = k.get(cfg);
  return out;
}

inline void write_config(std::ostream& os, const ExperimentConfig& cfg) {
  for (const auto& k : config_keys()) os << k.name << " = " << k.get(cfg) << '\n';
}

}  // namespace pgalstm
