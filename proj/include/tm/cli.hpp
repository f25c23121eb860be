#pragma once

// Operator surface. Subcommands train / eval / verify / predict, each driven
// by a key=value config file plus --set overrides. Exit codes: 0 success,
// 1 config or checkpoint error, 2 data error, 3 numerical abort.

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "tm/checkpoint.hpp"
#include "tm/config.hpp"
#include "tm/data.hpp"
#include "tm/model.hpp"
#include "tm/train.hpp"
#include "tm/verify.hpp"

namespace timemachine::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 1;
inline constexpr int kExitData = 2;
inline constexpr int kExitNumeric = 3;

struct PreparedData {
  data::RawSeries series;
  data::SplitSpec splits;
  data::Scaler scaler;
  Tensor standardized;
};

inline PreparedData prepare_data(const RunConfig& cfg, std::size_t L, std::size_t T) {
  PreparedData d;
  d.series = data::load_csv(cfg.data_path);
  d.splits = data::split(d.series, data::parse_dataset_class(cfg.dataset_class));
  d.scaler = data::fit_scaler(d.series, d.splits);
  d.standardized = data::transform(d.series.values, d.scaler);
  (void)L;
  (void)T;
  return d;
}

inline void write_text(const std::filesystem::path& p, const std::string& text) {
  std::ofstream os(p);
  os << text;
  if (!os) throw ConfigError("cannot write " + p.string());
}

inline int cmd_train(RunConfig cfg, std::ostream& log = std::cout) {
  cfg.model.validate();
  cfg.training.validate();
  const std::size_t L = cfg.model.L, T = cfg.model.T;
  PreparedData d = prepare_data(cfg, L, T);
  cfg.model.M = d.series.channels();
  std::filesystem::create_directories(cfg.out_dir);
  write_text(std::filesystem::path(cfg.out_dir) / "config.txt", effective_config_text(cfg));

  const auto train_ds = data::make_windows(d.standardized, d.splits, data::Split::train, L, T);
  const auto val_ds = data::make_windows(d.standardized, d.splits, data::Split::val, L, T);
  const auto test_ds = data::make_windows(d.standardized, d.splits, data::Split::test, L, T);

  TimeMachineModel model(cfg.model);
  log << "training: " << model.num_trainable() << " trainable parameters, mode="
      << checkpoint::mode_str(model.resolved_mode()) << ", " << train_ds.size()
      << " train windows\n";

  std::ofstream epochs_csv(std::filesystem::path(cfg.out_dir) / "epochs.csv");
  epochs_csv << train::epoch_log_header() << "\n";
  auto on_epoch = [&](const train::EpochRow& r) {
    epochs_csv << train::epoch_log_row(r) << "\n";
    epochs_csv.flush();
    log << "epoch " << r.epoch << ": train_mse=" << r.train_mse << " val_mse=" << r.val_mse
        << " val_mae=" << r.val_mae << "\n";
  };
  const auto clock = cfg.log_walltime ? train::wall_clock() : train::fixed_clock();
  const train::TrainResult res =
      train::train_loop(model, train_ds, val_ds, cfg.training, clock, on_epoch);
  train::restore_params(model, res.best_params);

  const auto ckpt_path = std::filesystem::path(cfg.out_dir) / "checkpoint.tmck";
  checkpoint::save(ckpt_path.string(), model,
                   {cfg.training.seed, res.best_epoch, res.best_val_mse});

  const train::Metrics test = train::evaluate_windows(model, test_ds, cfg.training.batch_size);
  nlohmann::json metrics = {{"best_epoch", res.best_epoch},
                            {"best_val_mse", res.best_val_mse},
                            {"best_val_mae", res.best_val_mae},
                            {"test_mse", test.mse},
                            {"test_mae", test.mae}};
  if (cfg.eval_baseline) {
    const train::Metrics base = train::persistence_baseline(test_ds, cfg.model.M);
    metrics["persistence_mse"] = base.mse;
    metrics["persistence_mae"] = base.mae;
  }
  write_text(std::filesystem::path(cfg.out_dir) / "metrics.json", metrics.dump(2) + "\n");
  log << "best epoch " << res.best_epoch << ", val_mse=" << res.best_val_mse
      << ", test_mse=" << test.mse << ", test_mae=" << test.mae << "\n";
  return kExitOk;
}

inline int cmd_eval(const RunConfig& cfg, std::ostream& log = std::cout) {
  if (cfg.checkpoint_path.empty()) throw ConfigError("eval requires checkpoint=<path>");
  checkpoint::Loaded loaded = checkpoint::load(cfg.checkpoint_path);
  TimeMachineModel& model = *loaded.model;
  RunConfig dcfg = cfg;
  PreparedData d = prepare_data(dcfg, model.config().L, model.config().T);
  if (d.series.channels() != model.config().M)
    throw checkpoint::CheckpointError(
        "channel count mismatch: checkpoint expects M=" + std::to_string(model.config().M) +
        ", dataset has M=" + std::to_string(d.series.channels()));
  const auto test_ds = data::make_windows(d.standardized, d.splits, data::Split::test,
                                          model.config().L, model.config().T);
  const train::Metrics m = train::evaluate_windows(model, test_ds, cfg.training.batch_size);
  nlohmann::json report = {{"horizon", model.config().T},
                           {"test_mse", m.mse},
                           {"test_mae", m.mae},
                           {"windows", test_ds.size()}};
  if (cfg.eval_baseline) {
    const train::Metrics base = train::persistence_baseline(test_ds, model.config().M);
    report["persistence_mse"] = base.mse;
    report["persistence_mae"] = base.mae;
  }
  log << report.dump(2) << "\n";
  if (!cfg.out_dir.empty()) {
    std::filesystem::create_directories(cfg.out_dir);
    write_text(std::filesystem::path(cfg.out_dir) / "eval_metrics.json",
               report.dump(2) + "\n");
  }
  return kExitOk;
}

inline int cmd_verify(const RunConfig& cfg, std::ostream& log = std::cout) {
  const auto checks = verify::run_all(cfg.model.seed);
  bool all_pass = true;
  log << std::left;
  for (const auto& c : checks) {
    all_pass = all_pass && c.pass;
    log << (c.pass ? "[PASS] " : "[FAIL] ") << std::setw(40) << c.name
        << " max_err=" << std::scientific << std::setprecision(3) << c.max_err
        << " threshold=" << c.threshold << std::defaultfloat << "\n";
  }
  log << (all_pass ? "verify: all checks passed\n" : "verify: FAILURES present\n");
  return all_pass ? kExitOk : kExitNumeric;
}

inline int cmd_predict(const RunConfig& cfg, std::ostream& log = std::cout) {
  if (cfg.checkpoint_path.empty()) throw ConfigError("predict requires checkpoint=<path>");
  checkpoint::Loaded loaded = checkpoint::load(cfg.checkpoint_path);
  TimeMachineModel& model = *loaded.model;
  PreparedData d = prepare_data(cfg, model.config().L, model.config().T);
  if (d.series.channels() != model.config().M)
    throw checkpoint::CheckpointError(
        "channel count mismatch: checkpoint expects M=" + std::to_string(model.config().M) +
        ", dataset has M=" + std::to_string(d.series.channels()));
  const std::size_t L = model.config().L, T = model.config().T, M = model.config().M;
  const auto test_ds = data::make_windows(d.standardized, d.splits, data::Split::test, L, T);
  if (cfg.window_index >= test_ds.size())
    throw ConfigError("window_index " + std::to_string(cfg.window_index) +
                      " out of range (have " + std::to_string(test_ds.size()) +
                      " test windows)");
  Tensor x({1, M, L}), y({1, M, T});
  test_ds.fill_sample(cfg.window_index, 0, x, y);
  const Tensor pred = model.predict(x);
  std::filesystem::create_directories(cfg.out_dir);
  const auto path = std::filesystem::path(cfg.out_dir) /
                    ("predict_" + std::to_string(cfg.window_index) + ".csv");
  std::ofstream os(path);
  os << "channel,t,truth,prediction\n";
  os.precision(17);
  for (std::size_t m = 0; m < M; ++m)
    for (std::size_t t = 0; t < T; ++t)
      os << d.series.channel_names[m] << ',' << t << ',' << y[m * T + t] << ','
         << pred[m * T + t] << "\n";
  if (!os) throw ConfigError("cannot write " + path.string());
  log << "wrote " << path.string() << " (" << (T * M) << " rows)\n";
  return kExitOk;
}

// subcommand dispatch shared by main() and the tests
inline int run(const std::vector<std::string>& args, std::ostream& log = std::cout,
               std::ostream& err = std::cerr) {
  try {
    if (args.empty())
      throw ConfigError("usage: tm train|eval|verify|predict --config <path> [--set k=v ...]");
    const std::string& cmd = args[0];
    std::string config_path;
    std::vector<std::string> sets;
    for (std::size_t i = 1; i < args.size(); ++i) {
      if (args[i] == "--config" && i + 1 < args.size()) config_path = args[++i];
      else if (args[i] == "--set" && i + 1 < args.size()) sets.push_back(args[++i]);
      else throw ConfigError("unexpected argument '" + args[i] + "'");
    }
    RunConfig cfg;
    if (!config_path.empty()) cfg = load_config(config_path);
    else if (cmd != "verify") throw ConfigError(cmd + " requires --config <path>");
    for (const auto& kv : sets) apply_assignment(cfg, kv, "--set");
    apply_env_overrides(cfg);
    if (cmd == "train") return cmd_train(cfg, log);
    if (cmd == "eval") return cmd_eval(cfg, log);
    if (cmd == "verify") return cmd_verify(cfg, log);
    if (cmd == "predict") return cmd_predict(cfg, log);
    throw ConfigError("unknown command '" + cmd + "'");
  } catch (const data::DataError& e) {
    err << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const NumericError& e) {
    err << "numerical abort: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const checkpoint::CheckpointError& e) {
    err << "checkpoint error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    err << "config error: " << e.what() << "\n";
    return kExitConfig;
  }
}

}  // namespace timemachine::cli
