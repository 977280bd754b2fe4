#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "pgalstm/config.hpp"
#include "pgalstm/core/checkpoint.hpp"
#include "pgalstm/data/dataset.hpp"
#include "pgalstm/data/synthetic.hpp"
#include "pgalstm/errors.hpp"
#include "pgalstm/manifest.hpp"
#include "pgalstm/pipeline.hpp"
#include "pgalstm/report.hpp"
#include "pgalstm/version.hpp"

namespace fs = std::filesystem;
using namespace pgalstm;

namespace {

struct Options {
  std::string config_file;
  std::string manifest_file;
  std::string dir = "run";
  std::string data;
  std::map<std::string, std::string> values;
  std::map<std::string, CLI::Option*> flags;
};

struct Context {
  ExperimentConfig cfg;
  std::string dir;
  std::string data_path;
  RunManifest manifest;

  std::string path(const std::string& name) const { return (fs::path(dir) / name).string(); }
  std::string encoder_path() const { return path("encoder.ckpt"); }
  std::string model_stem(std::size_t run) const { return cfg.model + "_run" + std::to_string(run); }
  std::string manifest_path() const {
    const bool per_model = manifest.command != "generate-data" && manifest.command != "pretrain-encoder" &&
                           manifest.command != "report";
    return path("manifest_" + manifest.command + (per_model ? "_" + cfg.model : "") + ".json");
  }
};

void add_common(CLI::App* sub, Options& o, bool data_seed_alias) {
  sub->add_option("--config", o.config_file, "key = value configuration file");
  sub->add_option("--manifest", o.manifest_file, "reuse the configuration recorded in a run manifest");
  sub->add_option("--dir", o.dir, "working directory for inputs and outputs")->capture_default_str();
  sub->add_option("--data", o.data, "lake CSV (default: <dir>/lake.csv)");
  for (const auto& key : config_keys()) {
    if (data_seed_alias && key.name == "seed") continue;
    o.flags[key.name] = sub->add_option("--" + key.name, o.values[key.name], key.help);
  }
  if (data_seed_alias) o.flags["seed"] = sub->add_option("--seed", o.values["seed"], "alias of --data_seed");
}

Context resolve(const Options& o, const std::string& command, bool data_seed_alias) {
  Context ctx;
  ctx.manifest.command = command;
  if (!o.config_file.empty()) apply_config_file(ctx.cfg, o.config_file);
  if (!o.manifest_file.empty()) apply_manifest_config(ctx.cfg, o.manifest_file);
  for (const auto& [key, opt] : o.flags) {
    if (opt->count() == 0) continue;
    const std::string target = data_seed_alias && key == "seed" ? "data_seed" : key;
    set_config_value(ctx.cfg, target, o.values.at(key));
  }
  ctx.cfg.validate();
  ctx.dir = o.dir;
  ctx.data_path = o.data.empty() ? ctx.path("lake.csv") : o.data;
  fs::create_directories(ctx.dir);
  ctx.manifest.config = config_snapshot(ctx.cfg);
  return ctx;
}

template <class Writer>
void write_output(Context& ctx, const std::string& path, Writer&& write) {
  {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write " + path);
    write(out);
    if (!out) throw DataError("failed writing " + path);
  }
  ctx.manifest.add_output(path);
}

void finish(Context& ctx) {
  const auto path = ctx.manifest_path();
  ctx.manifest.save(path);
  std::cout << "manifest: " << path << '\n';
}

LakeDataset load_data(Context& ctx) {
  if (!fs::exists(ctx.data_path)) {
    throw DataError("missing dataset: " + ctx.data_path + " (run generate-data or pass --data)");
  }
  auto ds = load_lake_csv(ctx.data_path);
  ctx.manifest.add_input(ctx.data_path);
  return ds;
}

Checkpoint load_ckpt(Context& ctx, const std::string& path, const std::string& hint) {
  if (!fs::exists(path)) throw DataError("missing checkpoint: " + path + " (" + hint + ")");
  auto c = load_checkpoint(path);
  ctx.manifest.add_input(path);
  return c;
}

// Dataset, split and embeddings from the stored encoder.
struct Staged {
  PreparedData prep;
  SequenceSets seqs;
};

Staged stage(Context& ctx) {
  const auto ds = load_data(ctx);
  Staged s{prepare_data(ds, ctx.cfg), {}};
  const auto ae = autoencoder_config(s.prep, ctx.cfg);
  const auto enc = restore_encoder(load_ckpt(ctx, ctx.encoder_path(), "run pretrain-encoder first"), ae);
  const auto emb = compute_embeddings(enc, ae, s.prep.windows, s.prep.data.date_count());
  s.seqs = build_sequences(s.prep, emb, ctx.cfg);
  return s;
}

struct LoadedModels {
  std::vector<TrainedModel> models;
  std::vector<std::uint64_t> seeds;
};

LoadedModels load_models(Context& ctx, const Staged& s) {
  const auto kind = parse_model_kind(ctx.cfg.model);
  const auto arch = arch_for(ctx.cfg, s.prep, s.seqs.fit[0].width());
  LoadedModels out;
  for (std::size_t r = 0; r < ctx.cfg.runs; ++r) {
    const auto ckpt = load_ckpt(ctx, ctx.path(ctx.model_stem(r) + ".ckpt"), "run train --model " + ctx.cfg.model);
    out.models.push_back(restore_model(ckpt, kind, arch));
    out.seeds.push_back(run_seed(ctx.cfg, r));
  }
  return out;
}

std::vector<std::vector<McSampleSet>> sample_all(const Context& ctx, const Staged& s, const LoadedModels& m) {
  if (s.seqs.test.empty()) throw DataError("test period holds no observed dates with a full driver window");
  std::vector<std::vector<McSampleSet>> out;
  for (const auto& model : m.models) out.push_back(mc_sample(model, s.seqs.test, s.seqs.test_labels, s.prep.stats, ctx.cfg.mc));
  return out;
}

// ---- commands ----------------------------------------------------------------

void cmd_generate(Context& ctx) {
  const auto ds = generate_synthetic(ctx.cfg.synthetic, ctx.cfg.data_seed);
  if (fs::path(ctx.data_path).has_parent_path()) fs::create_directories(fs::path(ctx.data_path).parent_path());
  write_output(ctx, ctx.data_path, [&](std::ostream& os) { write_csv(os, ds); });
  ctx.manifest.summary = {{"dates", ds.date_count()}, {"depths", ds.depth_count()},
                          {"observations", ds.observation_count()}};
  std::cout << "wrote " << ctx.data_path << ": " << ds.date_count() << " dates x " << ds.depth_count()
            << " depths, " << ds.observation_count() << " observations\n";
}

void cmd_pretrain(Context& ctx) {
  const auto ds = load_data(ctx);
  const auto prep = prepare_data(ds, ctx.cfg);
  const auto result = pretrain_encoder(prep, ctx.cfg);
  write_output(ctx, ctx.encoder_path(), [&](std::ostream& os) {
    const auto bytes = encode_checkpoint({"autoencoder", result.params});
    os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  });
  write_output(ctx, ctx.path("encoder_report.csv"), [&](std::ostream& os) {
    os << "epoch,train_mse\n";
    for (std::size_t e = 0; e < result.train_mse.size(); ++e) os << e + 1 << ',' << format_double(result.train_mse[e]) << '\n';
  });
  ctx.manifest.summary = {{"initial_val_mse", result.initial_val_mse}, {"final_val_mse", result.final_val_mse}};
  std::cout << "encoder: held-out reconstruction MSE " << result.initial_val_mse << " -> " << result.final_val_mse
            << '\n';
}

void cmd_train(Context& ctx) {
  const auto s = stage(ctx);
  const auto kind = parse_model_kind(ctx.cfg.model);
  std::string divergence;
  auto& runs = ctx.manifest.summary["runs"] = nlohmann::ordered_json::array();
  for (std::size_t r = 0; r < ctx.cfg.runs; ++r) {
    const auto result = train_run(kind, s.prep, s.seqs, ctx.cfg, r);
    const auto stem = ctx.model_stem(r);
    write_output(ctx, ctx.path(stem + ".ckpt"), [&](std::ostream& os) {
      const auto bytes = encode_checkpoint({std::string(model_name(kind)), result.model.params});
      os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    });
    write_output(ctx, ctx.path(stem + "_train.csv"), [&](std::ostream& os) { result.report.write_csv(os); });
    const auto& rep = result.report;
    runs.push_back({{"seed", run_seed(ctx.cfg, r)},
                    {"epochs", rep.epochs.size()},
                    {"best_epoch", rep.best_epoch},
                    {"best_val_rmse", rep.best_val_rmse},
                    {"early_stopped", rep.early_stopped},
                    {"diverged", rep.diverged}});
    std::cout << ctx.cfg.model << " run " << r << " (seed " << run_seed(ctx.cfg, r) << "): " << rep.epochs.size()
              << " epochs, best validation RMSE " << rep.best_val_rmse << " at epoch " << rep.best_epoch << '\n';
    if (rep.diverged) {
      divergence = rep.divergence;
      break;
    }
  }
  if (!divergence.empty()) {
    finish(ctx);
    throw NumericalError("training diverged (" + divergence + "); last good parameters were saved");
  }
}

void cmd_sample(Context& ctx) {
  const auto s = stage(ctx);
  const auto m = load_models(ctx, s);
  const auto samples = sample_all(ctx, s, m);
  write_output(ctx, ctx.path(ctx.cfg.model + "_samples.csv"),
               [&](std::ostream& os) { write_samples_csv(os, samples, m.seeds); });
  std::cout << "sampled " << ctx.cfg.mc.samples << " dropout networks x " << m.models.size() << " runs on "
            << s.seqs.test.size() << " test dates\n";
}

void cmd_evaluate(Context& ctx) {
  const auto s = stage(ctx);
  const auto m = load_models(ctx, s);
  const auto samples = sample_all(ctx, s, m);
  const auto kind = parse_model_kind(ctx.cfg.model);
  const auto report = build_report(kind, m.seeds, samples, s.seqs.test, s.prep.depths, {ctx.cfg.density_tolerance});
  write_output(ctx, ctx.path(ctx.cfg.model + "_metrics.json"), [&](std::ostream& os) { write_metrics_json(os, report); });
  write_output(ctx, ctx.path(ctx.cfg.model + "_calibration.csv"),
               [&](std::ostream& os) { write_calibration_csv(os, report.calibration); });
  write_output(ctx, ctx.path(ctx.cfg.model + "_profile.csv"),
               [&](std::ostream& os) { write_profile_csv(os, report, s.seqs.test); });
  std::cout << ctx.cfg.model << ": per-sample RMSE " << report.pooled.rmse_per_sample.mean << " +- "
            << report.pooled.rmse_per_sample.std << ", mean RMSE " << report.pooled.rmse_mean
            << ", physical inconsistency " << report.pooled.inconsistency_per_sample << " (per sample) / "
            << report.pooled.inconsistency_mean << " (mean)\n";
}

void cmd_calibrate(Context& ctx) {
  const auto s = stage(ctx);
  const auto m = load_models(ctx, s);
  const auto samples = sample_all(ctx, s, m);
  const auto kind = parse_model_kind(ctx.cfg.model);
  const auto report = build_report(kind, m.seeds, samples, s.seqs.test, s.prep.depths, {ctx.cfg.density_tolerance});
  write_output(ctx, ctx.path(ctx.cfg.model + "_calibration.csv"),
               [&](std::ostream& os) { write_calibration_csv(os, report.calibration); });
  ctx.manifest.summary = {{"observations", report.pooled.percentiles.size()},
                          {"degenerate", report.pooled.degenerate},
                          {"max_deviation", report.calibration.max_deviation()}};
  std::cout << "calibration: " << report.pooled.percentiles.size() << " observations, max deviation from the "
            << "diagonal " << report.calibration.max_deviation() << " points\n";
}

void cmd_report(Context& ctx) {
  std::vector<nlohmann::json> found;
  for (const char* m : {"pga", "lstm", "pgl"}) {
    const auto path = ctx.path(std::string(m) + "_metrics.json");
    if (!fs::exists(path)) continue;
    try {
      found.push_back(nlohmann::json::parse(read_file(path)));
    } catch (const nlohmann::json::exception& e) {
      throw DataError("malformed metrics file " + path + ": " + e.what());
    }
    ctx.manifest.add_input(path);
  }
  if (found.empty()) throw DataError("no <model>_metrics.json in " + ctx.dir + " (run evaluate first)");
  const auto num = [](const nlohmann::json& j) { return format_double(j.get<double>()); };
  write_output(ctx, ctx.path("summary.csv"), [&](std::ostream& os) {
    os << "model,runs,rmse_per_sample,rmse_per_sample_std,rmse_mean,inconsistency_per_sample,inconsistency_mean\n";
    for (const auto& j : found) {
      const auto& p = j["pooled"];
      os << j["model"].get<std::string>() << ',' << j["runs"].get<std::size_t>() << ','
         << num(p["rmse_per_sample"]["mean"]) << ',' << num(p["rmse_per_sample"]["std"]) << ','
         << num(p["rmse_mean"]) << ',' << num(p["inconsistency_per_sample"]) << ',' << num(p["inconsistency_mean"])
         << '\n';
    }
  });
  write_output(ctx, ctx.path("report.md"), [&](std::ostream& os) {
    os << "| model | runs | per-sample RMSE (degC) | mean RMSE (degC) | inconsistency per sample | inconsistency of "
          "mean |\n|---|---|---|---|---|---|\n";
    char buf[160];
    for (const auto& j : found) {
      const auto& p = j["pooled"];
      std::snprintf(buf, sizeof buf, "| %s | %zu | %.2f +- %.2f | %.2f | %.3f | %.3f |\n",
                    j["model"].get<std::string>().c_str(), j["runs"].get<std::size_t>(),
                    p["rmse_per_sample"]["mean"].get<double>(), p["rmse_per_sample"]["std"].get<double>(),
                    p["rmse_mean"].get<double>(), p["inconsistency_per_sample"].get<double>(),
                    p["inconsistency_mean"].get<double>());
      os << buf;
    }
  });
  std::cout << "wrote " << ctx.path("summary.csv") << " and " << ctx.path("report.md") << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Monotone density LSTM toolkit: data, training, MC-dropout sampling and evaluation"};
  app.set_version_flag("--version", std::string(kToolkitVersion));
  app.require_subcommand(1);

  struct Command {
    const char* name;
    const char* help;
    void (*run)(Context&);
    Options options;
    CLI::App* app = nullptr;
  };
  std::vector<Command> commands;
  commands.reserve(7);
  commands.push_back({"generate-data", "write a synthetic stratified-lake CSV", cmd_generate, {}});
  commands.push_back({"pretrain-encoder", "pretrain the driver-window autoencoder", cmd_pretrain, {}});
  commands.push_back({"train", "train a depth model (--model pga|lstm|pgl)", cmd_train, {}});
  commands.push_back({"sample", "draw MC-dropout samples on the test dates", cmd_sample, {}});
  commands.push_back({"evaluate", "sample and write the metrics report", cmd_evaluate, {}});
  commands.push_back({"calibrate", "write the percentile calibration curve", cmd_calibrate, {}});
  commands.push_back({"report", "tabulate the metrics of every evaluated model", cmd_report, {}});
  for (auto& c : commands) {
    c.app = app.add_subcommand(c.name, c.help);
    add_common(c.app, c.options, std::string_view(c.name) == "generate-data");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    for (auto& c : commands) {
      if (!c.app->parsed()) continue;
      auto ctx = resolve(c.options, c.name, std::string_view(c.name) == "generate-data");
      c.run(ctx);
      finish(ctx);
    }
    return 0;
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return 1;
  } catch (const NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << '\n';
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return 2;
  }
}
