#pragma once

// The TimeMachine network: instance normalization, two-stage embedding E1/E2,
// four Mamba blocks arranged as outer/inner pairs (one block of each pair
// runs on the axis-transposed view), residual wiring, and two-stage output
// projection P1/P2. Both channel modes share one code path; channel
// independence only changes the initial reshape B x M x L -> (B*M) x 1 x L.

#include <algorithm>
#include <cstdint>
#include <string>
#include <vector>

#include "tm/mamba.hpp"
#include "tm/tape.hpp"

namespace timemachine {

enum class ChannelMode { mixing, independence, auto_select };
enum class NormMode { revin, zscore_internal, none };

inline ChannelMode resolve_channel_mode(std::size_t M, std::size_t L, ChannelMode mode) {
  if (mode != ChannelMode::auto_select) return mode;
  // mixing pays off when the channel count is comparable to the look-back
  return (2 * M >= L) ? ChannelMode::mixing : ChannelMode::independence;
}

struct ModelConfig {
  std::size_t L = 96;   // look-back
  std::size_t T = 96;   // horizon
  std::size_t M = 1;    // channels
  std::size_t n1 = 256;
  std::size_t n2 = 128;
  double dropout_p = 0.1;
  ChannelMode channel_mode = ChannelMode::auto_select;
  NormMode norm_mode = NormMode::revin;
  std::size_t ssm_state = 256;  // N
  std::size_t expand = 1;       // E
  std::size_t conv_width = 2;   // w
  std::uint64_t seed = 1;
  bool ssm_skip = true;
  bool revin_affine = true;
  bool residual_pre = true;   // x2 into x3, before P1
  bool residual_post = true;  // x1 added to x4, after P1

  void validate() const {
    if (L < 1 || T < 1 || M < 1) throw ConfigError("L, T, M must be >= 1");
    if (n1 <= n2) throw ConfigError("n1 must exceed n2 (got n1=" + std::to_string(n1) +
                                    ", n2=" + std::to_string(n2) + ")");
    if (dropout_p < 0.0 || dropout_p >= 1.0)
      throw ConfigError("dropout rate must be in [0,1)");
    if (ssm_state < 1 || expand < 1 || conv_width < 1)
      throw ConfigError("N, E, w must be >= 1");
  }
};

inline constexpr double kRevinEps = 1e-5;

// Per-forward-pass instance statistics over the look-back axis.
struct RevInState {
  Tensor mean;  // [B, M]
  Tensor std;   // [B, M], epsilon-guarded
};

class TimeMachineModel {
 public:
  explicit TimeMachineModel(ModelConfig cfg)
      : cfg_(std::move(cfg)), dropout_rng_(cfg_.seed ^ 0x9E3779B97F4A7C15ull) {
    cfg_.validate();
    mode_ = resolve_channel_mode(cfg_.M, cfg_.L, cfg_.channel_mode);
    const std::size_t S = trans_dim();
    Rng rng(cfg_.seed);
    auto lin = [&](const std::string& name, std::size_t din, std::size_t dout,
                   Parameter& w, Parameter& b) {
      const double bound = 1.0 / std::sqrt(double(din));
      Tensor wt({din, dout}), bt({dout});
      for (auto& v : wt.vec()) v = rng.uniform(-bound, bound);
      for (auto& v : bt.vec()) v = rng.uniform(-bound, bound);
      w = Parameter("model/" + name + "/weight", std::move(wt));
      b = Parameter("model/" + name + "/bias", std::move(bt));
    };
    lin("E1", cfg_.L, cfg_.n1, e1_w_, e1_b_);
    lin("E2", cfg_.n1, cfg_.n2, e2_w_, e2_b_);
    lin("P1", cfg_.n2, cfg_.n1, p1_w_, p1_b_);
    lin("P2", 2 * cfg_.n1, cfg_.T, p2_w_, p2_b_);
    revin_gain_ = Parameter("model/revin/gain", Tensor::full({cfg_.M}, 1.0));
    revin_shift_ = Parameter("model/revin/shift", Tensor::zeros({cfg_.M}));
    const bool revin_trainable = cfg_.norm_mode == NormMode::revin && cfg_.revin_affine;
    revin_gain_.trainable = revin_trainable;
    revin_shift_.trainable = revin_trainable;
    inner_seq_ = make_mamba_block("model/mamba_inner_seq", cfg_.n2, cfg_.expand,
                                  cfg_.ssm_state, cfg_.conv_width, rng, cfg_.ssm_skip);
    inner_trans_ = make_mamba_block("model/mamba_inner_trans", S, cfg_.expand,
                                    cfg_.ssm_state, cfg_.conv_width, rng, cfg_.ssm_skip);
    outer_seq_ = make_mamba_block("model/mamba_outer_seq", cfg_.n1, cfg_.expand,
                                  cfg_.ssm_state, cfg_.conv_width, rng, cfg_.ssm_skip);
    outer_trans_ = make_mamba_block("model/mamba_outer_trans", S, cfg_.expand,
                                    cfg_.ssm_state, cfg_.conv_width, rng, cfg_.ssm_skip);
    if (!cfg_.ssm_skip)
      for (MambaBlock* b : {&inner_seq_, &inner_trans_, &outer_seq_, &outer_trans_})
        b->skip.trainable = false;
    collect_params();
  }

  // params_ holds pointers into this object
  TimeMachineModel(const TimeMachineModel&) = delete;
  TimeMachineModel& operator=(const TimeMachineModel&) = delete;

  const ModelConfig& config() const { return cfg_; }
  ChannelMode resolved_mode() const { return mode_; }

  // token dimension seen by the transposed block of each pair
  std::size_t trans_dim() const { return mode_ == ChannelMode::mixing ? cfg_.M : 1; }

  // lexicographic by name, deterministic
  const std::vector<Parameter*>& parameters() const { return params_; }

  Parameter* find_param(const std::string& name) {
    for (Parameter* p : params_)
      if (p->name == name) return p;
    return nullptr;
  }

  void zero_grad() {
    for (Parameter* p : params_) p->zero_grad();
  }

  std::size_t num_trainable() const {
    std::size_t n = 0;
    for (const Parameter* p : params_)
      if (p->trainable) n += p->value.size();
    return n;
  }

  RevInState compute_stats(const Tensor& x) const {
    const std::size_t B = x.dim(0), M = x.dim(1), L = x.dim(2);
    RevInState st{Tensor({B, M}), Tensor({B, M})};
    for (std::size_t b = 0; b < B; ++b)
      for (std::size_t m = 0; m < M; ++m) {
        const double* row = x.data() + (b * M + m) * L;
        double mu = 0;
        for (std::size_t l = 0; l < L; ++l) mu += row[l];
        mu /= double(L);
        double var = 0;
        for (std::size_t l = 0; l < L; ++l) var += (row[l] - mu) * (row[l] - mu);
        var /= double(L);
        st.mean[b * M + m] = mu;
        st.std[b * M + m] = std::sqrt(var);
      }
    return st;
  }

  // x: [B, M, L] -> Var of shape [B, M, T]; training toggles dropout
  Var forward(Tape& t, const Tensor& x, bool training) {
    if (x.rank() != 3 || x.dim(1) != cfg_.M || x.dim(2) != cfg_.L)
      throw DimensionError("forward input stage: expected [B," + std::to_string(cfg_.M) +
                           "," + std::to_string(cfg_.L) + "], got " + shape_str(x.shape()));
    const std::size_t B = x.dim(0), M = cfg_.M, L = cfg_.L, T = cfg_.T;
    Var xv = t.leaf(x);

    // 1. normalization (before any reshape)
    RevInState st;
    Var x0 = xv;
    if (cfg_.norm_mode == NormMode::revin) {
      st = compute_stats(x);
      Tensor neg_mean({B, M, L}), inv_std({B, M, L});
      for (std::size_t b = 0; b < B; ++b)
        for (std::size_t m = 0; m < M; ++m)
          for (std::size_t l = 0; l < L; ++l) {
            neg_mean[(b * M + m) * L + l] = -st.mean[b * M + m];
            inv_std[(b * M + m) * L + l] = 1.0 / (st.std[b * M + m] + kRevinEps);
          }
      x0 = ops::mul_const(ops::add_const(xv, std::move(neg_mean)), std::move(inv_std));
      if (cfg_.revin_affine)
        x0 = ops::channel_scale_shift(x0, t.param(revin_gain_), t.param(revin_shift_));
    }
    // zscore_internal: dataset-level scaling is the data pipeline's job; identity here

    // 2. channel-mode reshape
    const bool indep = mode_ == ChannelMode::independence;
    if (indep) x0 = ops::reshape(x0, {B * M, 1, L});

    // 3. two-stage embedding with dropout
    Var x1 = ops::affine(x0, t.param(e1_w_), t.param(e1_b_));
    Var u1 = ops::dropout(x1, cfg_.dropout_p, training, dropout_rng_);
    Var x2 = ops::affine(u1, t.param(e2_w_), t.param(e2_b_));
    Var u2 = ops::dropout(x2, cfg_.dropout_p, training, dropout_rng_);

    // 4. inner Mamba pair at level n2
    Var v_l = mamba_forward(t, u2, inner_seq_, training);
    Var v_r = ops::transpose_last2(
        mamba_forward(t, ops::transpose_last2(u2), inner_trans_, training));
    Var x3 = ops::add(v_l, v_r);
    if (cfg_.residual_pre) x3 = ops::add(x3, x2);

    // 5. projection back to level n1
    Var x4 = ops::affine(x3, t.param(p1_w_), t.param(p1_b_));

    // 6. outer Mamba pair at level n1
    Var vs_l = mamba_forward(t, u1, outer_seq_, training);
    Var vs_r = ops::transpose_last2(
        mamba_forward(t, ops::transpose_last2(u1), outer_trans_, training));
    Var x5 = ops::add(vs_l, vs_r);

    // 7. concatenate the two pair outputs (with the post-P1 residual)
    Var right = cfg_.residual_post ? ops::add(x4, x1) : x4;
    Var x6 = ops::concat_last(x5, right);

    // 8. final projection to the horizon
    Var y = ops::affine(x6, t.param(p2_w_), t.param(p2_b_));
    if (indep) y = ops::reshape(y, {B, M, T});

    // 9. invert the instance normalization
    if (cfg_.norm_mode == NormMode::revin) {
      if (cfg_.revin_affine) {
        Var inv_gain = ops::reciprocal(t.param(revin_gain_));
        Var neg_shift = ops::mul(ops::neg(t.param(revin_shift_)), inv_gain);
        y = ops::channel_scale_shift(y, inv_gain, neg_shift);
      }
      Tensor std_e({B, M, T}), mean_e({B, M, T});
      for (std::size_t b = 0; b < B; ++b)
        for (std::size_t m = 0; m < M; ++m)
          for (std::size_t tt = 0; tt < T; ++tt) {
            std_e[(b * M + m) * T + tt] = st.std[b * M + m] + kRevinEps;
            mean_e[(b * M + m) * T + tt] = st.mean[b * M + m];
          }
      y = ops::add_const(ops::mul_const(y, std::move(std_e)), std::move(mean_e));
    }
    return y;
  }

  Tensor predict(const Tensor& x) {
    Tape t;
    return forward(t, x, false).value();
  }

  MambaBlock& inner_seq() { return inner_seq_; }
  MambaBlock& inner_trans() { return inner_trans_; }
  MambaBlock& outer_seq() { return outer_seq_; }
  MambaBlock& outer_trans() { return outer_trans_; }
  Rng& dropout_rng() { return dropout_rng_; }

 private:
  void collect_params() {
    params_.clear();
    for (Parameter* p : {&e1_w_, &e1_b_, &e2_w_, &e2_b_, &p1_w_, &p1_b_, &p2_w_, &p2_b_})
      params_.push_back(p);
    if (cfg_.norm_mode == NormMode::revin && cfg_.revin_affine) {
      params_.push_back(&revin_gain_);
      params_.push_back(&revin_shift_);
    }
    inner_seq_.collect(params_);
    inner_trans_.collect(params_);
    outer_seq_.collect(params_);
    outer_trans_.collect(params_);
    std::sort(params_.begin(), params_.end(),
              [](const Parameter* a, const Parameter* b) { return a->name < b->name; });
    for (std::size_t i = 1; i < params_.size(); ++i)
      if (params_[i]->name == params_[i - 1]->name)
        throw ConfigError("duplicate parameter name " + params_[i]->name);
  }

  ModelConfig cfg_;
  ChannelMode mode_;
  Rng dropout_rng_;
  Parameter e1_w_, e1_b_, e2_w_, e2_b_, p1_w_, p1_b_, p2_w_, p2_b_;
  Parameter revin_gain_, revin_shift_;
  MambaBlock inner_seq_, inner_trans_, outer_seq_, outer_trans_;
  std::vector<Parameter*> params_;
};

// Closed-form trainable-scalar count for a config; cross-checked in tests
// against enumeration of an instantiated model.
inline std::size_t count_params(const ModelConfig& cfg) {
  const ChannelMode mode = resolve_channel_mode(cfg.M, cfg.L, cfg.channel_mode);
  const std::size_t S = mode == ChannelMode::mixing ? cfg.M : 1;
  auto block = [&](std::size_t dm) {
    const std::size_t D = cfg.expand * dm, N = cfg.ssm_state, w = cfg.conv_width;
    std::size_t n = 2 * (dm * D + D);   // in_proj a/b
    n += w * D + D;                     // conv
    n += 3 * D * N;                     // a_log, wB, wC
    n += 3 * D;                         // wdelta_down, wdelta_up, delta_bias
    if (cfg.ssm_skip) n += D;           // skip gain
    n += D * dm + dm;                   // out_proj
    return n;
  };
  std::size_t n = 0;
  n += cfg.L * cfg.n1 + cfg.n1;          // E1
  n += cfg.n1 * cfg.n2 + cfg.n2;         // E2
  n += cfg.n2 * cfg.n1 + cfg.n1;         // P1
  n += 2 * cfg.n1 * cfg.T + cfg.T;       // P2
  if (cfg.norm_mode == NormMode::revin && cfg.revin_affine) n += 2 * cfg.M;
  n += block(cfg.n1) + block(cfg.n2) + 2 * block(S);
  return n;
}

}  // namespace timemachine
