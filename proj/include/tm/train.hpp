#pragma once

// Optimization and evaluation: L2 objective, Adam with bias correction,
// epoch loop with validation-based model selection, MSE/MAE metrics and the
// persistence baseline. Metrics are computed on the standardized scale.

#include <chrono>
#include <cstdint>
#include <functional>
#include <map>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "tm/data.hpp"
#include "tm/model.hpp"

namespace timemachine::train {

struct Metrics {
  double mse = 0;
  double mae = 0;
};

inline double mse(const Tensor& pred, const Tensor& target) {
  require_same_shape(pred, target, "mse");
  double s = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double d = pred[i] - target[i];
    s += d * d;
  }
  return s / double(pred.size());
}

inline double mae(const Tensor& pred, const Tensor& target) {
  require_same_shape(pred, target, "mae");
  double s = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) s += std::abs(pred[i] - target[i]);
  return s / double(pred.size());
}

inline Var mse_loss(const Var& pred, const Tensor& target) {
  Var diff = ops::sub(pred, pred.tape()->leaf(target));
  return ops::mean(ops::mul(diff, diff));
}

// ---- Adam -------------------------------------------------------------------

struct AdamState {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::uint64_t t = 0;
  std::map<std::string, Tensor> m, v;
};

inline void adam_step(const std::vector<Parameter*>& params, AdamState& st) {
  st.t += 1;
  const double bc1 = 1.0 - std::pow(st.beta1, double(st.t));
  const double bc2 = 1.0 - std::pow(st.beta2, double(st.t));
  for (Parameter* p : params) {
    if (!p->trainable) continue;
    auto [mi, _1] = st.m.try_emplace(p->name, Tensor::zeros(p->value.shape()));
    auto [vi, _2] = st.v.try_emplace(p->name, Tensor::zeros(p->value.shape()));
    Tensor& m = mi->second;
    Tensor& v = vi->second;
    for (std::size_t i = 0; i < p->value.size(); ++i) {
      const double g = p->grad[i];
      m[i] = st.beta1 * m[i] + (1.0 - st.beta1) * g;
      v[i] = st.beta2 * v[i] + (1.0 - st.beta2) * g * g;
      p->value[i] -= st.lr * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + st.eps);
    }
  }
}

// global-norm gradient clip; no-op when max_norm <= 0
inline void clip_grad_norm(const std::vector<Parameter*>& params, double max_norm) {
  if (max_norm <= 0) return;
  double sq = 0;
  for (const Parameter* p : params)
    if (p->trainable)
      for (double g : p->grad.vec()) sq += g * g;
  const double norm = std::sqrt(sq);
  if (norm <= max_norm) return;
  const double scale = max_norm / norm;
  for (Parameter* p : params)
    if (p->trainable)
      for (auto& g : p->grad.vec()) g *= scale;
}

// ---- training loop ----------------------------------------------------------

struct TrainConfig {
  std::size_t epochs = 100;
  std::size_t batch_size = 32;
  double lr = 1e-3;
  std::uint64_t seed = 1;
  double grad_clip = 0.0;  // off by default

  void validate() const {
    if (epochs < 1) throw ConfigError("epochs must be >= 1");
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (lr <= 0) throw ConfigError("lr must be > 0");
  }
};

struct EpochRow {
  std::size_t epoch;
  double train_mse, val_mse, val_mae, seconds;
};

struct TrainResult {
  std::vector<EpochRow> log;
  std::size_t best_epoch = 0;
  double best_val_mse = 0;
  double best_val_mae = 0;
  std::vector<Tensor> best_params;  // snapshot in model parameter order
};

inline std::string epoch_log_header() { return "epoch,train_mse,val_mse,val_mae,seconds"; }

inline std::string epoch_log_row(const EpochRow& r) {
  std::ostringstream os;
  os.precision(17);
  os << r.epoch << ',' << r.train_mse << ',' << r.val_mse << ',' << r.val_mae << ','
     << r.seconds;
  return os.str();
}

inline Metrics evaluate_windows(TimeMachineModel& model, const data::WindowDataset& ds,
                                std::size_t batch_size) {
  const std::size_t M = model.config().M, L = ds.L, T = ds.T;
  double se = 0, ae = 0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < ds.size(); i += batch_size) {
    const std::size_t bs = std::min(batch_size, ds.size() - i);
    Tensor x({bs, M, L}), y({bs, M, T});
    for (std::size_t b = 0; b < bs; ++b) ds.fill_sample(i + b, b, x, y);
    const Tensor pred = model.predict(x);
    for (std::size_t k = 0; k < pred.size(); ++k) {
      const double d = pred[k] - y[k];
      se += d * d;
      ae += std::abs(d);
    }
    count += pred.size();
  }
  return {se / double(count), ae / double(count)};
}

// repeat the last observed value for all T steps; the minimal sanity competitor
inline Metrics persistence_baseline(const data::WindowDataset& ds, std::size_t M) {
  double se = 0, ae = 0;
  std::size_t count = 0;
  Tensor x({1, M, ds.L}), y({1, M, ds.T});
  for (std::size_t i = 0; i < ds.size(); ++i) {
    ds.fill_sample(i, 0, x, y);
    for (std::size_t m = 0; m < M; ++m) {
      const double last = x[m * ds.L + ds.L - 1];
      for (std::size_t t = 0; t < ds.T; ++t) {
        const double d = last - y[m * ds.T + t];
        se += d * d;
        ae += std::abs(d);
        ++count;
      }
    }
  }
  return {se / double(count), ae / double(count)};
}

using Clock = std::function<double()>;

inline Clock wall_clock() {
  const auto t0 = std::chrono::steady_clock::now();
  return [t0] {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  };
}

// all-zero clock for byte-reproducible logs
inline Clock fixed_clock() {
  return [] { return 0.0; };
}

inline std::string param_norm_report(const std::vector<Parameter*>& params) {
  std::ostringstream os;
  for (const Parameter* p : params) {
    double sq = 0;
    for (double v : p->value.vec()) sq += v * v;
    os << "  " << p->name << " |theta|=" << std::sqrt(sq) << "\n";
  }
  return os.str();
}

inline TrainResult train_loop(TimeMachineModel& model, const data::WindowDataset& train_ds,
                              const data::WindowDataset& val_ds, const TrainConfig& cfg,
                              Clock clock = {},
                              const std::function<void(const EpochRow&)>& on_epoch = {}) {
  cfg.validate();
  if (!clock) clock = wall_clock();
  const std::size_t M = model.config().M, L = train_ds.L, T = train_ds.T;
  Rng shuffle_rng(cfg.seed ^ 0xA5A5A5A5DEADBEEFull);
  AdamState adam;
  adam.lr = cfg.lr;
  TrainResult res;
  res.best_val_mse = std::numeric_limits<double>::infinity();
  std::vector<std::size_t> order(train_ds.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const double t_start = clock();
    shuffle_rng.shuffle(order);
    double loss_sum = 0;
    std::size_t loss_count = 0;
    for (std::size_t i = 0; i < order.size(); i += cfg.batch_size) {
      const std::size_t bs = std::min(cfg.batch_size, order.size() - i);
      Tensor x({bs, M, L}), y({bs, M, T});
      for (std::size_t b = 0; b < bs; ++b) train_ds.fill_sample(order[i + b], b, x, y);
      model.zero_grad();
      try {
        Tape tape;
        Var pred = model.forward(tape, x, true);
        Var loss = mse_loss(pred, y);
        const double lv = loss.value()[0];
        loss_sum += lv * double(y.size());
        loss_count += y.size();
        tape.backward(loss);
      } catch (const NumericError& e) {
        throw NumericError("non-finite value at epoch " + std::to_string(epoch) +
                           ", batch " + std::to_string(i / cfg.batch_size) + ": " + e.what() +
                           "\nparameter norms:\n" + param_norm_report(model.parameters()));
      }
      clip_grad_norm(model.parameters(), cfg.grad_clip);
      adam_step(model.parameters(), adam);
    }
    const Metrics val = evaluate_windows(model, val_ds, cfg.batch_size);
    EpochRow row{epoch, loss_sum / double(loss_count), val.mse, val.mae, clock() - t_start};
    res.log.push_back(row);
    if (on_epoch) on_epoch(row);
    if (val.mse < res.best_val_mse) {
      res.best_val_mse = val.mse;
      res.best_val_mae = val.mae;
      res.best_epoch = epoch;
      res.best_params.clear();
      for (const Parameter* p : model.parameters()) res.best_params.push_back(p->value);
    }
  }
  return res;
}

inline void restore_params(TimeMachineModel& model, const std::vector<Tensor>& snapshot) {
  const auto& params = model.parameters();
  if (snapshot.size() != params.size())
    throw ConfigError("parameter snapshot size mismatch");
  for (std::size_t i = 0; i < params.size(); ++i) params[i]->value = snapshot[i];
}

}  // namespace timemachine::train
