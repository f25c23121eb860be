#pragma once

// Selective state-space engine. Zero-order-hold discretization of the
// diagonal continuous system and the input-selective sequential scan, plus a
// naive unrolled oracle kept structurally independent for equivalence tests.
//
// Discrete step, elementwise over (d, n) with z = delta[d] * A[d,n]:
//   Abar = exp(z)
//   Bbar = ((exp(z) - 1) / z) * delta[d] * B[n]
// The (exp(z)-1)/z factor switches to its series 1 + z/2 + z^2/6 below
// |z| < 1e-5.

#include <cmath>
#include <vector>

#include "tm/tape.hpp"
#include "tm/tensor.hpp"

namespace timemachine::ssm {

inline constexpr double kPhiSeriesCutoff = 1e-5;

// (exp(z) - 1) / z with series fallback near zero
inline double phi(double z) {
  if (std::abs(z) < kPhiSeriesCutoff) return 1.0 + z / 2.0 + z * z / 6.0;
  return std::expm1(z) / z;
}

// d/dz phi(z) = (exp(z)(z - 1) + 1) / z^2. The direct form cancels
// catastrophically for small z (error ~ eps/z^2), so the series branch is
// wider than phi's.
inline constexpr double kDphiSeriesCutoff = 1e-3;

inline double dphi(double z) {
  if (std::abs(z) < kDphiSeriesCutoff)
    return 0.5 + z / 3.0 + z * z / 8.0 + z * z * z / 30.0;
  return (std::exp(z) * (z - 1.0) + 1.0) / (z * z);
}

// Coefficient set for one selective SSM of dimension factor D, state size N.
// A = -exp(a_log) elementwise, so A is strictly negative by construction.
struct SsmParams {
  Tensor a_log;       // [D, N]
  Tensor wB;          // [D, N]  (projection D -> N, no bias)
  Tensor wC;          // [D, N]
  Tensor wdelta_down; // [D]     (projection D -> 1)
  Tensor wdelta_up;   // [D]     (projection 1 -> D)
  Tensor delta_bias;  // [D]
  Tensor skip;        // [D]     passthrough gain
  bool use_skip = true;

  std::size_t dim() const { return a_log.dim(0); }
  std::size_t state() const { return a_log.dim(1); }

  Tensor a_continuous() const {
    Tensor a = a_log;
    for (auto& v : a.vec()) v = -std::exp(v);
    return a;
  }
};

// default initialization: a_log[d,n] = ln(n+1); delta_bias such that
// softplus(delta_bias) is log-uniform in [1e-3, 1e-1]; skip = 1
inline SsmParams make_ssm_params(std::size_t D, std::size_t N, Rng& rng,
                                 bool use_skip = true) {
  SsmParams p;
  p.a_log = Tensor({D, N});
  for (std::size_t d = 0; d < D; ++d)
    for (std::size_t n = 0; n < N; ++n) p.a_log[d * N + n] = std::log(double(n + 1));
  auto fan_in_uniform = [&](Shape s, std::size_t fan) {
    Tensor t(std::move(s));
    const double bound = 1.0 / std::sqrt(double(fan));
    for (auto& v : t.vec()) v = rng.uniform(-bound, bound);
    return t;
  };
  p.wB = fan_in_uniform({D, N}, D);
  p.wC = fan_in_uniform({D, N}, D);
  p.wdelta_down = fan_in_uniform({D}, D);
  p.wdelta_up = fan_in_uniform({D}, 1);
  p.delta_bias = Tensor({D});
  for (std::size_t d = 0; d < D; ++d) {
    const double dt = std::exp(rng.uniform(std::log(1e-3), std::log(1e-1)));
    p.delta_bias[d] = std::log(std::expm1(dt));  // inverse softplus
  }
  p.skip = Tensor::full({D}, 1.0);
  p.use_skip = use_skip;
  return p;
}

// Input-dependent coefficients for one token u_k in R^D:
//   B = wB' u, C = wC' u, delta = softplus(delta_bias + wdelta_up * (wdelta_down' u))
struct Selectivity {
  Tensor B;      // [N]
  Tensor C;      // [N]
  Tensor delta;  // [D]
};

inline Selectivity selectivity(const Tensor& u_k, const SsmParams& p) {
  const std::size_t D = p.dim(), N = p.state();
  if (u_k.size() != D)
    throw DimensionError("selectivity: token " + shape_str(u_k.shape()) + " vs D=" +
                         std::to_string(D));
  Selectivity s;
  s.B = Tensor({N});
  s.C = Tensor({N});
  s.delta = Tensor({D});
  for (std::size_t d = 0; d < D; ++d)
    for (std::size_t n = 0; n < N; ++n) {
      s.B[n] += p.wB[d * N + n] * u_k[d];
      s.C[n] += p.wC[d * N + n] * u_k[d];
    }
  double down = 0;
  for (std::size_t d = 0; d < D; ++d) down += p.wdelta_down[d] * u_k[d];
  for (std::size_t d = 0; d < D; ++d)
    s.delta[d] = ops::softplus_scalar(p.delta_bias[d] + p.wdelta_up[d] * down);
  return s;
}

// ZOH step matrices from the continuous diagonal system
struct Discretized {
  Tensor Abar;  // [D, N]
  Tensor Bbar;  // [D, N]
};

inline Discretized discretize(const Tensor& A_dc, const Tensor& B_k, const Tensor& delta_k) {
  const std::size_t D = A_dc.dim(0), N = A_dc.dim(1);
  if (B_k.size() != N || delta_k.size() != D)
    throw DimensionError("discretize: A " + shape_str(A_dc.shape()) + " B " +
                         shape_str(B_k.shape()) + " delta " + shape_str(delta_k.shape()));
  Discretized out{Tensor({D, N}), Tensor({D, N})};
  for (std::size_t d = 0; d < D; ++d)
    for (std::size_t n = 0; n < N; ++n) {
      const double a = A_dc[d * N + n];
      if (a >= 0.0)
        throw NumericError("discretize: nonnegative A entry " + std::to_string(a) +
                           " at (" + std::to_string(d) + "," + std::to_string(n) + ")");
      const double z = delta_k[d] * a;
      out.Abar[d * N + n] = std::exp(z);
      out.Bbar[d * N + n] = phi(z) * delta_k[d] * B_k[n];
    }
  return out;
}

// ---- differentiable scan ----------------------------------------------------
// Fused recurrence over a batch of sequences with analytic backward (BPTT).
//   u      [R, S, D]   scan input
//   A      [D, N]      strictly negative diagonal coefficients
//   B, C   [R, S, N]   input-dependent projections
//   delta  [R, S, D]   positive step sizes
//   skip   [D]         passthrough gain (pass a zero tensor to disable)
// Forward keeps the state trajectory h for the backward sweep; everything
// else is recomputed from the saved inputs.

inline Var scan_core(const Var& u, const Var& A, const Var& B, const Var& C,
                     const Var& delta, const Var& skip) {
  Tape* t = u.tape();
  const Tensor& vu = u.value();
  const Tensor& vA = A.value();
  if (vu.rank() != 3 || vA.rank() != 2)
    throw DimensionError("scan_core: u " + shape_str(vu.shape()) + " A " +
                         shape_str(vA.shape()));
  const std::size_t R = vu.dim(0), S = vu.dim(1), D = vu.dim(2), N = vA.dim(1);
  if (vA.dim(0) != D || B.value().shape() != Shape{R, S, N} ||
      C.value().shape() != Shape{R, S, N} || delta.value().shape() != Shape{R, S, D} ||
      skip.value().shape() != Shape{D})
    throw DimensionError("scan_core: inconsistent operand shapes, u " +
                         shape_str(vu.shape()) + " A " + shape_str(vA.shape()) + " B " +
                         shape_str(B.value().shape()) + " delta " +
                         shape_str(delta.value().shape()));
  for (double a : vA.vec())
    if (a >= 0.0) throw NumericError("scan_core: nonnegative A entry");

  const Tensor& vB = B.value();
  const Tensor& vC = C.value();
  const Tensor& vdt = delta.value();
  const Tensor& vskip = skip.value();

  Tensor out({R, S, D});
  // state trajectory, h[r, k, d, n] for k = 1..S (h_0 = 0)
  auto hsave = std::make_shared<std::vector<double>>(R * S * D * N, 0.0);
  {
    std::vector<double> h(D * N);
    for (std::size_t r = 0; r < R; ++r) {
      std::fill(h.begin(), h.end(), 0.0);
      for (std::size_t k = 0; k < S; ++k) {
        const double* uk = vu.data() + (r * S + k) * D;
        const double* bk = vB.data() + (r * S + k) * N;
        const double* ck = vC.data() + (r * S + k) * N;
        const double* dk = vdt.data() + (r * S + k) * D;
        double* hk = hsave->data() + ((r * S + k) * D) * N;
        double* vout = out.data() + (r * S + k) * D;
        for (std::size_t d = 0; d < D; ++d) {
          double acc = 0;
          for (std::size_t n = 0; n < N; ++n) {
            const double z = dk[d] * vA[d * N + n];
            const double abar = std::exp(z);
            const double bbar = phi(z) * dk[d] * bk[n];
            const double hv = abar * h[d * N + n] + bbar * uk[d];
            h[d * N + n] = hv;
            hk[d * N + n] = hv;
            acc += ck[n] * hv;
          }
          vout[d] = acc + vskip[d] * uk[d];
        }
      }
    }
  }

  const std::size_t iu = u.id(), iA = A.id(), iB = B.id(), iC = C.id(),
                    idt = delta.id(), isk = skip.id();
  return t->emit(
      std::move(out),
      [iu, iA, iB, iC, idt, isk, hsave, R, S, D, N](Tape& tp, std::size_t self) {
        const Tensor& g = tp.grad(self);
        const Tensor& vu = tp.value(iu);
        const Tensor& vA = tp.value(iA);
        const Tensor& vB = tp.value(iB);
        const Tensor& vC = tp.value(iC);
        const Tensor& vdt = tp.value(idt);
        const Tensor& vskip = tp.value(isk);
        Tensor& gu = tp.grad(iu);
        Tensor& gA = tp.grad(iA);
        Tensor& gB = tp.grad(iB);
        Tensor& gC = tp.grad(iC);
        Tensor& gdt = tp.grad(idt);
        Tensor& gskip = tp.grad(isk);
        std::vector<double> dh_next(D * N);
        for (std::size_t r = 0; r < R; ++r) {
          std::fill(dh_next.begin(), dh_next.end(), 0.0);
          for (std::size_t k = S; k-- > 0;) {
            const double* gv = g.data() + (r * S + k) * D;
            const double* uk = vu.data() + (r * S + k) * D;
            const double* bk = vB.data() + (r * S + k) * N;
            const double* ck = vC.data() + (r * S + k) * N;
            const double* dk = vdt.data() + (r * S + k) * D;
            const double* hk = hsave->data() + ((r * S + k) * D) * N;
            const double* hprev =
                (k > 0) ? hsave->data() + ((r * S + k - 1) * D) * N : nullptr;
            for (std::size_t d = 0; d < D; ++d) {
              double du = gv[d] * vskip[d];
              gskip[d] += gv[d] * uk[d];
              double ddelta = 0;
              for (std::size_t n = 0; n < N; ++n) {
                const double dh = ck[n] * gv[d] + dh_next[d * N + n];
                gC[(r * S + k) * N + n] += gv[d] * hk[d * N + n];
                const double a = vA[d * N + n];
                const double z = dk[d] * a;
                const double abar = std::exp(z);
                const double ph = phi(z);
                const double hp = hprev ? hprev[d * N + n] : 0.0;
                const double dAbar = dh * hp;
                const double dBbar = dh * uk[d];
                du += dh * ph * dk[d] * bk[n];  // dh * Bbar / u via Bbar factor
                const double dz = dAbar * abar + dBbar * dphi(z) * dk[d] * bk[n];
                ddelta += dz * a + dBbar * ph * bk[n];
                gA[d * N + n] += dz * dk[d];
                gB[(r * S + k) * N + n] += dBbar * ph * dk[d];
                dh_next[d * N + n] = dh * abar;
              }
              gdt[(r * S + k) * D + d] += ddelta;
              gu[(r * S + k) * D + d] += du;
            }
          }
        }
      },
      "scan_core");
}

// tape-resident SSM coefficients (parameter nodes)
struct SsmVars {
  Var a_log, wB, wC, wdelta_down, wdelta_up, delta_bias, skip;
  bool use_skip = true;
};

// Selective scan over a batch of sequences u [R, S, D]: derives (B, C, delta)
// from the input tokens, discretizes, and runs the recurrence. Differentiable
// through the whole chain.
inline Var selective_scan_batched(const Var& u, const SsmVars& p) {
  Tape& t = *u.tape();
  const std::size_t R = u.value().dim(0), S = u.value().dim(1), D = u.value().dim(2);
  Var A = ops::neg(ops::exp(p.a_log));
  Var B = ops::linear(u, p.wB);  // [R,S,N]
  Var C = ops::linear(u, p.wC);
  Var down = ops::linear(u, ops::reshape(p.wdelta_down, {D, 1}));         // [R,S,1]
  Var pre = ops::linear(down, ops::reshape(p.wdelta_up, {1, D}));         // [R,S,D]
  Var delta = ops::softplus(ops::bias_add(pre, p.delta_bias));
  Var skip = p.use_skip ? p.skip : t.leaf(Tensor::zeros({D}));
  (void)R;
  (void)S;
  return scan_core(u, A, B, C, delta, skip);
}

// Single-sequence convenience surface: u [S, D] -> v [S, D], plain tensors.
inline Tensor selective_scan(const Tensor& u, const SsmParams& p) {
  Tape t;
  SsmVars v;
  // leaves, not parameters: no gradient bookkeeping needed here
  v.a_log = t.leaf(p.a_log);
  v.wB = t.leaf(p.wB);
  v.wC = t.leaf(p.wC);
  v.wdelta_down = t.leaf(p.wdelta_down);
  v.wdelta_up = t.leaf(p.wdelta_up);
  v.delta_bias = t.leaf(p.delta_bias);
  v.skip = t.leaf(p.skip);
  v.use_skip = p.use_skip;
  const std::size_t S = u.dim(0), D = u.dim(1);
  Var uv = t.leaf(u.reshaped({1, S, D}));
  return selective_scan_batched(uv, v).value().reshaped({S, D});
}

// ---- oracle -----------------------------------------------------------------
// Independent re-derivation of the recurrence as an explicitly unrolled
// product-sum:
//   v_k[d] = sum_{j<=k} C_k . (prod_{i=j+1..k} Abar_i[d,:]) Bbar_j[d,:] u_j[d]
//            + skip[d] u_k[d]
// Shares no code with scan_core beyond the coefficient definitions.

inline Tensor scan_oracle(const Tensor& u, const SsmParams& p) {
  const std::size_t S = u.dim(0), D = u.dim(1), N = p.state();
  if (u.dim(1) != p.dim())
    throw DimensionError("scan_oracle: u " + shape_str(u.shape()) + " vs D=" +
                         std::to_string(p.dim()));
  const Tensor A = p.a_continuous();
  std::vector<Selectivity> sel;
  std::vector<Discretized> dc;
  sel.reserve(S);
  dc.reserve(S);
  for (std::size_t k = 0; k < S; ++k) {
    Tensor uk({D});
    for (std::size_t d = 0; d < D; ++d) uk[d] = u[k * D + d];
    sel.push_back(selectivity(uk, p));
    dc.push_back(discretize(A, sel.back().B, sel.back().delta));
  }
  Tensor v({S, D});
  std::vector<double> prod(N);
  for (std::size_t k = 0; k < S; ++k)
    for (std::size_t d = 0; d < D; ++d) {
      double acc = 0;
      std::fill(prod.begin(), prod.end(), 1.0);  // running prod_{i=j+1..k} Abar_i
      for (std::size_t j = k + 1; j-- > 0;) {
        if (j < k)
          for (std::size_t n = 0; n < N; ++n) prod[n] *= dc[j + 1].Abar[d * N + n];
        for (std::size_t n = 0; n < N; ++n)
          acc += sel[k].C[n] * prod[n] * dc[j].Bbar[d * N + n] * u[j * D + d];
      }
      if (p.use_skip) acc += p.skip[d] * u[k * D + d];
      v[k * D + d] = acc;
    }
  return v;
}

}  // namespace timemachine::ssm
