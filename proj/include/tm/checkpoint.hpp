#pragma once

// Checkpoint persistence. Binary layout:
//   magic "TMCK"
//   u32 LE format version (currently 1)
//   u64 LE metadata length, then that many bytes of UTF-8 JSON
//     (model config snapshot including M, run metadata, parameter count)
//   per-parameter records, in the model's deterministic name order:
//     u64 LE name length + name bytes
//     u8 dtype tag (f32 = 0, f64 = 1)
//     u32 LE rank, then rank u64 LE dims
//     raw little-endian element bytes
// load(save(model)) reproduces forward outputs bit-exactly at the stored
// precision. Loading refuses a checkpoint whose channel count differs from
// the requested dataset.

#include <cstdint>
#include <cstring>
#include <fstream>
#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

#include "tm/model.hpp"

namespace timemachine::checkpoint {

struct CheckpointError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline constexpr std::uint32_t kFormatVersion = 1;

inline std::string mode_str(ChannelMode m) {
  switch (m) {
    case ChannelMode::mixing: return "mixing";
    case ChannelMode::independence: return "independence";
    default: return "auto";
  }
}

inline ChannelMode mode_from_str(const std::string& s) {
  if (s == "mixing") return ChannelMode::mixing;
  if (s == "independence") return ChannelMode::independence;
  if (s == "auto") return ChannelMode::auto_select;
  throw ConfigError("unknown channel_mode '" + s + "'");
}

inline std::string norm_str(NormMode m) {
  switch (m) {
    case NormMode::revin: return "revin";
    case NormMode::zscore_internal: return "zscore_internal";
    default: return "none";
  }
}

inline NormMode norm_from_str(const std::string& s) {
  if (s == "revin") return NormMode::revin;
  if (s == "zscore_internal") return NormMode::zscore_internal;
  if (s == "none") return NormMode::none;
  throw ConfigError("unknown norm_mode '" + s + "'");
}

inline nlohmann::json config_to_json(const ModelConfig& c) {
  return {{"L", c.L},
          {"T", c.T},
          {"M", c.M},
          {"n1", c.n1},
          {"n2", c.n2},
          {"dropout", c.dropout_p},
          {"channel_mode", mode_str(c.channel_mode)},
          {"norm_mode", norm_str(c.norm_mode)},
          {"ssm_state", c.ssm_state},
          {"expand", c.expand},
          {"conv_width", c.conv_width},
          {"seed", c.seed},
          {"ssm_skip", c.ssm_skip},
          {"revin_affine", c.revin_affine},
          {"residual_pre", c.residual_pre},
          {"residual_post", c.residual_post}};
}

inline ModelConfig config_from_json(const nlohmann::json& j) {
  ModelConfig c;
  c.L = j.at("L");
  c.T = j.at("T");
  c.M = j.at("M");
  c.n1 = j.at("n1");
  c.n2 = j.at("n2");
  c.dropout_p = j.at("dropout");
  c.channel_mode = mode_from_str(j.at("channel_mode"));
  c.norm_mode = norm_from_str(j.at("norm_mode"));
  c.ssm_state = j.at("ssm_state");
  c.expand = j.at("expand");
  c.conv_width = j.at("conv_width");
  c.seed = j.at("seed");
  c.ssm_skip = j.at("ssm_skip");
  c.revin_affine = j.at("revin_affine");
  c.residual_pre = j.at("residual_pre");
  c.residual_post = j.at("residual_post");
  return c;
}

namespace detail {

template <class T>
void write_le(std::ostream& os, T v) {
  unsigned char buf[sizeof(T)];
  for (std::size_t i = 0; i < sizeof(T); ++i) buf[i] = (unsigned char)((std::uint64_t)v >> (8 * i));
  os.write(reinterpret_cast<const char*>(buf), sizeof(T));
}

template <class T>
T read_le(std::istream& is) {
  unsigned char buf[sizeof(T)];
  is.read(reinterpret_cast<char*>(buf), sizeof(T));
  std::uint64_t v = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) v |= (std::uint64_t)buf[i] << (8 * i);
  return (T)v;
}

inline void write_f64_le(std::ostream& os, double d) {
  std::uint64_t bits;
  std::memcpy(&bits, &d, 8);
  write_le<std::uint64_t>(os, bits);
}

inline double read_f64_le(std::istream& is) {
  const std::uint64_t bits = read_le<std::uint64_t>(is);
  double d;
  std::memcpy(&d, &bits, 8);
  return d;
}

inline float read_f32_le(std::istream& is) {
  const std::uint32_t bits = read_le<std::uint32_t>(is);
  float f;
  std::memcpy(&f, &bits, 4);
  return f;
}

}  // namespace detail

struct RunMeta {
  std::uint64_t seed = 0;
  std::size_t epoch = 0;
  double val_mse = 0;
};

inline void save(const std::string& path, const TimeMachineModel& model,
                 const RunMeta& meta) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw CheckpointError("cannot open checkpoint for writing: " + path);
  os.write("TMCK", 4);
  detail::write_le<std::uint32_t>(os, kFormatVersion);
  nlohmann::json j = {{"config", config_to_json(model.config())},
                      {"precision", "f64"},
                      {"seed", meta.seed},
                      {"epoch", meta.epoch},
                      {"val_mse", meta.val_mse},
                      {"param_count", model.parameters().size()}};
  const std::string md = j.dump();
  detail::write_le<std::uint64_t>(os, md.size());
  os.write(md.data(), (std::streamsize)md.size());
  for (const Parameter* p : model.parameters()) {
    detail::write_le<std::uint64_t>(os, p->name.size());
    os.write(p->name.data(), (std::streamsize)p->name.size());
    os.put(char(1));  // f64
    detail::write_le<std::uint32_t>(os, (std::uint32_t)p->value.rank());
    for (std::size_t d : p->value.shape()) detail::write_le<std::uint64_t>(os, d);
    for (double v : p->value.vec()) detail::write_f64_le(os, v);
  }
  if (!os) throw CheckpointError("write failure on checkpoint: " + path);
}

struct Loaded {
  std::unique_ptr<TimeMachineModel> model;
  RunMeta meta;
};

inline Loaded load(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw CheckpointError("cannot open checkpoint: " + path);
  char magic[4] = {};
  is.read(magic, 4);
  if (!is || std::string(magic, 4) != "TMCK")
    throw CheckpointError(path + ": bad magic bytes (not a TMCK checkpoint)");
  const auto version = detail::read_le<std::uint32_t>(is);
  if (version != kFormatVersion)
    throw CheckpointError(path + ": unsupported format version " + std::to_string(version));
  const auto md_len = detail::read_le<std::uint64_t>(is);
  std::string md(md_len, '\0');
  is.read(md.data(), (std::streamsize)md_len);
  if (!is) throw CheckpointError(path + ": truncated metadata");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(md);
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(path + ": corrupt metadata: " + e.what());
  }
  Loaded out{std::make_unique<TimeMachineModel>(config_from_json(j.at("config"))), {}};
  out.meta.seed = j.value("seed", std::uint64_t{0});
  out.meta.epoch = j.value("epoch", std::size_t{0});
  out.meta.val_mse = j.value("val_mse", 0.0);
  const std::size_t count = j.at("param_count");
  for (std::size_t i = 0; i < count; ++i) {
    const auto name_len = detail::read_le<std::uint64_t>(is);
    std::string name(name_len, '\0');
    is.read(name.data(), (std::streamsize)name_len);
    const int dtype = is.get();
    const auto rank = detail::read_le<std::uint32_t>(is);
    Shape shape(rank);
    for (auto& d : shape) d = detail::read_le<std::uint64_t>(is);
    if (!is) throw CheckpointError(path + ": truncated record header for " + name);
    Tensor t(shape);
    for (auto& v : t.vec())
      v = (dtype == 0) ? (double)detail::read_f32_le(is) : detail::read_f64_le(is);
    if (!is) throw CheckpointError(path + ": truncated data for " + name);
    Parameter* p = out.model->find_param(name);
    if (!p) throw CheckpointError(path + ": unknown parameter '" + name + "'");
    if (p->value.shape() != t.shape())
      throw CheckpointError(path + ": shape mismatch for " + name + ": checkpoint " +
                            shape_str(t.shape()) + " vs model " + shape_str(p->value.shape()));
    p->value = std::move(t);
  }
  return out;
}

}  // namespace timemachine::checkpoint
