#pragma once

// Verification suites: central finite-difference gradient checks, scan vs.
// unrolled-oracle equivalence, causality perturbation probes, RevIN round
// trip, and parameter-count cross-checks. Shared by the `tm verify` command
// and the test binaries.

#include <functional>
#include <string>
#include <vector>

#include "tm/model.hpp"
#include "tm/ssm.hpp"
#include "tm/train.hpp"

namespace timemachine::verify {

struct Check {
  std::string name;
  double max_err = 0;
  double threshold = 0;
  bool pass = false;
};

inline Check make_check(std::string name, double err, double threshold) {
  return {std::move(name), err, threshold, err < threshold};
}

// ---- finite differences -----------------------------------------------------

inline constexpr double kFdStep = 1e-5;
inline constexpr double kFdRelTol = 1e-4;
inline constexpr double kFdAbsFloor = 1e-6;  // FD noise floor for tiny gradients

// Central finite-difference check of every entry of every listed parameter
// against the analytic gradient of the scalar produced by make_loss.
// Returns the largest |fd - g| / max(|fd|, |g|, floor/rel) over all entries.
template <class F>
double gradcheck_max_err(const std::vector<Parameter*>& params, F&& make_loss,
                         double h = kFdStep) {
  for (Parameter* p : params) p->zero_grad();
  {
    Tape t;
    Var loss = make_loss(t);
    t.backward(loss);
  }
  std::vector<Tensor> analytic;
  analytic.reserve(params.size());
  for (Parameter* p : params) analytic.push_back(p->grad);
  auto eval = [&] {
    Tape t;
    return make_loss(t).value()[0];
  };
  double max_err = 0;
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    Parameter* p = params[pi];
    if (!p->trainable) continue;
    for (std::size_t i = 0; i < p->value.size(); ++i) {
      const double saved = p->value[i];
      p->value[i] = saved + h;
      const double fp = eval();
      p->value[i] = saved - h;
      const double fm = eval();
      p->value[i] = saved;
      const double fd = (fp - fm) / (2.0 * h);
      const double g = analytic[pi][i];
      const double denom = std::max({std::abs(fd), std::abs(g), kFdAbsFloor / kFdRelTol});
      max_err = std::max(max_err, std::abs(fd - g) / denom);
    }
  }
  return max_err;
}

// ---- random SSM instances ---------------------------------------------------

inline ssm::SsmParams random_ssm_params(std::size_t D, std::size_t N, Rng& rng) {
  ssm::SsmParams p = ssm::make_ssm_params(D, N, rng);
  // perturb away from the structured defaults
  for (auto& v : p.a_log.vec()) v += 0.3 * rng.normal();
  for (auto& v : p.delta_bias.vec()) v += rng.uniform(-1.0, 1.0);
  for (auto& v : p.skip.vec()) v = rng.normal();
  return p;
}

inline Tensor random_tensor(Shape s, Rng& rng, double scale = 1.0) {
  Tensor t(std::move(s));
  for (auto& v : t.vec()) v = scale * rng.normal();
  return t;
}

// max abs diff between the recurrent scan and the unrolled oracle over
// `instances` random problems with seq <= 64, D <= 8, N <= 16
inline double scan_vs_oracle_max_diff(std::size_t instances, std::uint64_t seed,
                                      const std::function<Tensor(const Tensor&, const ssm::SsmParams&)>&
                                          scan_impl = ssm::selective_scan) {
  Rng rng(seed);
  double worst = 0;
  for (std::size_t it = 0; it < instances; ++it) {
    const std::size_t seq = 1 + rng.below(64);
    const std::size_t D = 1 + rng.below(8);
    const std::size_t N = 1 + rng.below(16);
    ssm::SsmParams p = random_ssm_params(D, N, rng);
    const Tensor u = random_tensor({seq, D}, rng);
    const Tensor a = scan_impl(u, p);
    const Tensor b = ssm::scan_oracle(u, p);
    for (std::size_t i = 0; i < a.size(); ++i)
      worst = std::max(worst, std::abs(a[i] - b[i]));
  }
  return worst;
}

// ---- causality probes -------------------------------------------------------

// largest change in y[0..t_perturb-1] after perturbing x[t_perturb]; must be 0
template <class F>
double causality_leak(F&& forward, const Tensor& x, std::size_t seq, std::size_t d,
                      Rng& rng) {
  const Tensor y0 = forward(x);
  double worst = 0;
  for (std::size_t t = 1; t < seq; ++t) {
    Tensor xp = x;
    for (std::size_t c = 0; c < d; ++c) xp[t * d + c] += 1.0 + rng.uniform();
    const Tensor y1 = forward(xp);
    for (std::size_t s = 0; s < t; ++s)
      for (std::size_t c = 0; c < d; ++c)
        worst = std::max(worst, std::abs(y1[s * d + c] - y0[s * d + c]));
  }
  return worst;
}

inline double conv_causality_leak(std::uint64_t seed) {
  Rng rng(seed);
  const std::size_t seq = 12, d = 3, w = 4;
  Parameter kernel("k", random_tensor({w, d}, rng));
  Parameter bias("b", random_tensor({d}, rng));
  const Tensor x = random_tensor({seq, d}, rng);
  auto fwd = [&](const Tensor& in) {
    Tape t;
    return ops::causal_conv1d(t.leaf(in), t.param(kernel), t.param(bias)).value();
  };
  return causality_leak(fwd, x, seq, d, rng);
}

inline double mamba_causality_leak(std::uint64_t seed) {
  Rng rng(seed);
  const std::size_t seq = 10, dm = 4;
  MambaBlock block = make_mamba_block("probe", dm, 1, 3, 2, rng);
  const Tensor x = random_tensor({seq, dm}, rng);
  auto fwd = [&](const Tensor& in) {
    Tape t;
    const std::size_t S = in.dim(0), D = in.dim(1);
    Var v = mamba_forward(t, t.leaf(in.reshaped({1, S, D})), block, false);
    return v.value().reshaped({S, D});
  };
  return causality_leak(fwd, x, seq, dm, rng);
}

// ---- RevIN round trip -------------------------------------------------------

// denormalize(normalize(x)) with identity affine, per-(instance, channel)
// statistics over the look-back axis
inline double revin_roundtrip_max_err(std::uint64_t seed) {
  Rng rng(seed);
  const std::size_t B = 3, M = 4, L = 17;
  Tensor x = random_tensor({B, M, L}, rng, 5.0);
  for (auto& v : x.vec()) v += 2.5;
  ModelConfig cfg;
  cfg.M = M;
  cfg.L = L;
  TimeMachineModel probe(cfg);  // only used for its stats routine
  const RevInState st = probe.compute_stats(x);
  double worst = 0;
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t m = 0; m < M; ++m)
      for (std::size_t l = 0; l < L; ++l) {
        const double denom = st.std[b * M + m] + kRevinEps;
        const double n = (x[(b * M + m) * L + l] - st.mean[b * M + m]) / denom;
        const double back = n * denom + st.mean[b * M + m];
        worst = std::max(worst, std::abs(back - x[(b * M + m) * L + l]));
      }
  return worst;
}

// ---- parameter counting -----------------------------------------------------

inline double count_params_err(const ModelConfig& cfg) {
  TimeMachineModel model(cfg);
  const auto closed = count_params(cfg);
  const auto enumerated = model.num_trainable();
  return std::abs(double(closed) - double(enumerated));
}

// ---- bundled suite (tm verify) ----------------------------------------------

inline std::vector<Check> run_all(std::uint64_t seed) {
  std::vector<Check> checks;
  checks.push_back(make_check("scan_vs_oracle(100 random instances)",
                              scan_vs_oracle_max_diff(100, seed), 1e-10));
  {
    Rng rng(seed + 1);
    Parameter x("x", random_tensor({3, 4}, rng));
    Parameter w("w", random_tensor({4, 5}, rng));
    Parameter b("b", random_tensor({5}, rng));
    const double err = gradcheck_max_err({&x, &w, &b}, [&](Tape& t) {
      return ops::mean(ops::affine(t.param(x), t.param(w), t.param(b)));
    });
    checks.push_back(make_check("gradcheck(affine)", err, kFdRelTol));
  }
  {
    Rng rng(seed + 2);
    const std::size_t seq = 6, D = 3, N = 4;
    ssm::SsmParams sp = random_ssm_params(D, N, rng);
    Parameter u("u", random_tensor({1, seq, D}, rng));
    Parameter a_log("a_log", sp.a_log), wB("wB", sp.wB), wC("wC", sp.wC),
        wdd("wdd", sp.wdelta_down), wdu("wdu", sp.wdelta_up),
        dbias("dbias", sp.delta_bias), skip("skip", sp.skip);
    std::vector<Parameter*> ps{&u, &a_log, &wB, &wC, &wdd, &wdu, &dbias, &skip};
    const double err = gradcheck_max_err(ps, [&](Tape& t) {
      ssm::SsmVars v;
      v.a_log = t.param(a_log);
      v.wB = t.param(wB);
      v.wC = t.param(wC);
      v.wdelta_down = t.param(wdd);
      v.wdelta_up = t.param(wdu);
      v.delta_bias = t.param(dbias);
      v.skip = t.param(skip);
      return ops::mean(ssm::selective_scan_batched(t.param(u), v));
    });
    checks.push_back(make_check("gradcheck(selective_scan)", err, kFdRelTol));
  }
  {
    Rng rng(seed + 3);
    MambaBlock block = make_mamba_block("verify", 3, 1, 2, 2, rng);
    Parameter x("x", random_tensor({1, 4, 3}, rng));
    std::vector<Parameter*> ps{&x};
    block.collect(ps);
    const double err = gradcheck_max_err(ps, [&](Tape& t) {
      return ops::mean(mamba_forward(t, t.param(x), block, false));
    });
    checks.push_back(make_check("gradcheck(mamba_block)", err, kFdRelTol));
  }
  {
    ModelConfig cfg;
    cfg.L = 8;
    cfg.T = 4;
    cfg.M = 2;
    cfg.n1 = 8;
    cfg.n2 = 4;
    cfg.ssm_state = 2;
    cfg.expand = 1;
    cfg.conv_width = 2;
    cfg.dropout_p = 0.0;
    cfg.seed = seed + 4;
    TimeMachineModel model(cfg);
    Rng rng(seed + 5);
    const Tensor x = random_tensor({1, cfg.M, cfg.L}, rng);
    const double err = gradcheck_max_err(model.parameters(), [&](Tape& t) {
      return ops::mean(model.forward(t, x, false));
    });
    checks.push_back(make_check("gradcheck(model end-to-end)", err, kFdRelTol));
  }
  checks.push_back(make_check("revin_round_trip", revin_roundtrip_max_err(seed + 6), 1e-6));
  checks.push_back(make_check("causality(causal_conv1d)", conv_causality_leak(seed + 7), 1e-300));
  checks.push_back(make_check("causality(mamba_block)", mamba_causality_leak(seed + 8), 1e-300));
  {
    ModelConfig cfg;
    cfg.M = 7;
    cfg.n1 = 16;
    cfg.n2 = 8;
    cfg.ssm_state = 4;
    checks.push_back(make_check("count_params(enumeration)", count_params_err(cfg), 0.5));
    cfg.L = 96;
    const auto c96 = count_params(cfg);
    cfg.L = 192;
    const auto c192 = count_params(cfg);
    cfg.L = 336;
    const auto c336 = count_params(cfg);
    const double err = std::abs(double(c192 - c96) - double(96 * cfg.n1)) +
                       std::abs(double(c336 - c192) - double(144 * cfg.n1));
    checks.push_back(make_check("count_params(linear in L)", err, 0.5));
  }
  return checks;
}

}  // namespace timemachine::verify
