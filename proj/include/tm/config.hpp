#pragma once

// Declarative run configuration. Flat `key = value` text file, '#' comments,
// unknown keys rejected. CLI --set overrides file keys, TM_SEED overrides the
// seed, and the merged effective config is written into the output directory.

#include <cstdlib>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "tm/checkpoint.hpp"
#include "tm/data.hpp"
#include "tm/model.hpp"
#include "tm/train.hpp"

namespace timemachine {

struct RunConfig {
  // data
  std::string data_path;
  std::string dataset_class = "ratio";  // etth | ettm | ratio
  // model
  ModelConfig model;
  // training
  train::TrainConfig training;
  // command surface
  std::string out_dir = "out";
  std::string checkpoint_path;   // eval / predict input
  std::size_t window_index = 0;  // predict
  bool eval_baseline = false;    // emit persistence metrics alongside
  bool log_walltime = true;      // false -> zero seconds column (reproducible logs)
};

namespace detail {

inline bool parse_bool(const std::string& v, const std::string& key) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError("key '" + key + "': expected boolean, got '" + v + "'");
}

template <class T>
T parse_num(const std::string& v, const std::string& key) {
  std::istringstream is(v);
  T out;
  is >> out;
  if (is.fail() || !is.eof())
    throw ConfigError("key '" + key + "': cannot parse '" + v + "'");
  return out;
}

}  // namespace detail

inline void apply_key(RunConfig& c, const std::string& key, const std::string& value) {
  using detail::parse_bool;
  using detail::parse_num;
  if (key == "data_path") c.data_path = value;
  else if (key == "dataset_class") { data::parse_dataset_class(value); c.dataset_class = value; }
  else if (key == "out_dir") c.out_dir = value;
  else if (key == "checkpoint") c.checkpoint_path = value;
  else if (key == "window_index") c.window_index = parse_num<std::size_t>(value, key);
  else if (key == "eval_baseline") c.eval_baseline = parse_bool(value, key);
  else if (key == "log_walltime") c.log_walltime = parse_bool(value, key);
  else if (key == "lookback") c.model.L = parse_num<std::size_t>(value, key);
  else if (key == "horizon") c.model.T = parse_num<std::size_t>(value, key);
  else if (key == "n1") c.model.n1 = parse_num<std::size_t>(value, key);
  else if (key == "n2") c.model.n2 = parse_num<std::size_t>(value, key);
  else if (key == "dropout") c.model.dropout_p = parse_num<double>(value, key);
  else if (key == "channel_mode") c.model.channel_mode = checkpoint::mode_from_str(value);
  else if (key == "norm_mode") c.model.norm_mode = checkpoint::norm_from_str(value);
  else if (key == "ssm_state") c.model.ssm_state = parse_num<std::size_t>(value, key);
  else if (key == "expand") c.model.expand = parse_num<std::size_t>(value, key);
  else if (key == "conv_width") c.model.conv_width = parse_num<std::size_t>(value, key);
  else if (key == "ssm_skip") c.model.ssm_skip = parse_bool(value, key);
  else if (key == "revin_affine") c.model.revin_affine = parse_bool(value, key);
  else if (key == "residual_pre") c.model.residual_pre = parse_bool(value, key);
  else if (key == "residual_post") c.model.residual_post = parse_bool(value, key);
  else if (key == "seed") {
    const auto s = parse_num<std::uint64_t>(value, key);
    c.model.seed = s;
    c.training.seed = s;
  } else if (key == "epochs") c.training.epochs = parse_num<std::size_t>(value, key);
  else if (key == "batch_size") c.training.batch_size = parse_num<std::size_t>(value, key);
  else if (key == "lr") c.training.lr = parse_num<double>(value, key);
  else if (key == "grad_clip") c.training.grad_clip = parse_num<double>(value, key);
  else throw ConfigError("unknown config key '" + key + "'");
}

inline void apply_assignment(RunConfig& c, const std::string& kv, const std::string& where) {
  const auto eq = kv.find('=');
  if (eq == std::string::npos)
    throw ConfigError(where + ": expected key=value, got '" + kv + "'");
  auto trim = [](std::string s) {
    const auto a = s.find_first_not_of(" \t");
    const auto b = s.find_last_not_of(" \t");
    return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
  };
  apply_key(c, trim(kv.substr(0, eq)), trim(kv.substr(eq + 1)));
}

inline RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  RunConfig c;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    const auto a = line.find_first_not_of(" \t\r");
    if (a == std::string::npos) continue;
    apply_assignment(c, line, path + ":" + std::to_string(lineno));
  }
  return c;
}

inline void apply_env_overrides(RunConfig& c) {
  if (const char* s = std::getenv("TM_SEED")) apply_key(c, "seed", s);
}

inline std::string effective_config_text(const RunConfig& c) {
  std::ostringstream os;
  os.precision(17);
  os << "data_path = " << c.data_path << "\n"
     << "dataset_class = " << c.dataset_class << "\n"
     << "out_dir = " << c.out_dir << "\n"
     << "checkpoint = " << c.checkpoint_path << "\n"
     << "window_index = " << c.window_index << "\n"
     << "eval_baseline = " << (c.eval_baseline ? "true" : "false") << "\n"
     << "log_walltime = " << (c.log_walltime ? "true" : "false") << "\n"
     << "lookback = " << c.model.L << "\n"
     << "horizon = " << c.model.T << "\n"
     << "n1 = " << c.model.n1 << "\n"
     << "n2 = " << c.model.n2 << "\n"
     << "dropout = " << c.model.dropout_p << "\n"
     << "channel_mode = " << checkpoint::mode_str(c.model.channel_mode) << "\n"
     << "norm_mode = " << checkpoint::norm_str(c.model.norm_mode) << "\n"
     << "ssm_state = " << c.model.ssm_state << "\n"
     << "expand = " << c.model.expand << "\n"
     << "conv_width = " << c.model.conv_width << "\n"
     << "ssm_skip = " << (c.model.ssm_skip ? "true" : "false") << "\n"
     << "revin_affine = " << (c.model.revin_affine ? "true" : "false") << "\n"
     << "residual_pre = " << (c.model.residual_pre ? "true" : "false") << "\n"
     << "residual_post = " << (c.model.residual_post ? "true" : "false") << "\n"
     << "seed = " << c.model.seed << "\n"
     << "epochs = " << c.training.epochs << "\n"
     << "batch_size = " << c.training.batch_size << "\n"
     << "lr = " << c.training.lr << "\n"
     << "grad_clip = " << c.training.grad_clip << "\n";
  return os.str();
}

}  // namespace timemachine
