#pragma once

// One Mamba block: gated two-branch structure around the selective scan.
//   branch 1: in_proj_a -> causal conv -> SiLU -> selective scan
//   branch 2: in_proj_b -> SiLU (gate)
//   output:   out_proj(branch1 * gate)
// Shape-preserving over its token sequence for any length.

#include <cmath>
#include <string>
#include <vector>

#include "tm/ssm.hpp"
#include "tm/tape.hpp"

namespace timemachine {

struct MambaBlock {
  std::size_t d_model = 0;
  std::size_t expand = 1;      // inner dim = expand * d_model
  std::size_t state = 16;      // N
  std::size_t conv_width = 2;  // w

  Parameter in_proj_a_w, in_proj_a_b;
  Parameter in_proj_b_w, in_proj_b_b;
  Parameter conv_kernel, conv_bias;
  Parameter a_log, wB, wC, wdelta_down, wdelta_up, delta_bias, skip;
  Parameter out_w, out_b;
  bool use_skip = true;

  std::size_t inner_dim() const { return expand * d_model; }

  void collect(std::vector<Parameter*>& out) {
    for (Parameter* p : {&in_proj_a_w, &in_proj_a_b, &in_proj_b_w, &in_proj_b_b,
                         &conv_kernel, &conv_bias, &a_log, &wB, &wC, &wdelta_down,
                         &wdelta_up, &delta_bias, &skip, &out_w, &out_b})
      out.push_back(p);
  }
};

// Projections use fan-in uniform init; conv kernel uniform in [-1/sqrt(w), 1/sqrt(w)].
inline MambaBlock make_mamba_block(const std::string& prefix, std::size_t d_model,
                                   std::size_t expand, std::size_t state,
                                   std::size_t conv_width, Rng& rng,
                                   bool use_skip = true) {
  MambaBlock b;
  b.d_model = d_model;
  b.expand = expand;
  b.state = state;
  b.conv_width = conv_width;
  b.use_skip = use_skip;
  const std::size_t D = b.inner_dim();
  auto uni = [&](Shape s, double bound) {
    Tensor t(std::move(s));
    for (auto& v : t.vec()) v = rng.uniform(-bound, bound);
    return t;
  };
  const double bm = 1.0 / std::sqrt(double(d_model));
  b.in_proj_a_w = Parameter(prefix + "/in_proj_a/weight", uni({d_model, D}, bm));
  b.in_proj_a_b = Parameter(prefix + "/in_proj_a/bias", uni({D}, bm));
  b.in_proj_b_w = Parameter(prefix + "/in_proj_b/weight", uni({d_model, D}, bm));
  b.in_proj_b_b = Parameter(prefix + "/in_proj_b/bias", uni({D}, bm));
  const double bw = 1.0 / std::sqrt(double(conv_width));
  b.conv_kernel = Parameter(prefix + "/conv/kernel", uni({conv_width, D}, bw));
  b.conv_bias = Parameter(prefix + "/conv/bias", uni({D}, bw));
  ssm::SsmParams sp = ssm::make_ssm_params(D, state, rng, use_skip);
  b.a_log = Parameter(prefix + "/ssm/a_log", std::move(sp.a_log));
  b.wB = Parameter(prefix + "/ssm/wB", std::move(sp.wB));
  b.wC = Parameter(prefix + "/ssm/wC", std::move(sp.wC));
  b.wdelta_down = Parameter(prefix + "/ssm/wdelta_down", std::move(sp.wdelta_down));
  b.wdelta_up = Parameter(prefix + "/ssm/wdelta_up", std::move(sp.wdelta_up));
  b.delta_bias = Parameter(prefix + "/ssm/delta_bias", std::move(sp.delta_bias));
  b.skip = Parameter(prefix + "/ssm/skip", std::move(sp.skip));
  const double bd = 1.0 / std::sqrt(double(D));
  b.out_w = Parameter(prefix + "/out_proj/weight", uni({D, d_model}, bd));
  b.out_b = Parameter(prefix + "/out_proj/bias", uni({d_model}, bd));
  return b;
}

// x: [R, S, d_model] -> [R, S, d_model]; S is the scan axis.
inline Var mamba_forward(Tape& t, const Var& x, MambaBlock& block, bool /*training*/) {
  if (x.value().rank() != 3 || x.value().dim(2) != block.d_model)
    throw DimensionError("mamba_forward: input " + shape_str(x.value().shape()) +
                         " vs d_model=" + std::to_string(block.d_model));
  Var a_in = ops::affine(x, t.param(block.in_proj_a_w), t.param(block.in_proj_a_b));
  Var conv = ops::causal_conv1d(a_in, t.param(block.conv_kernel), t.param(block.conv_bias));
  Var u = ops::silu(conv);
  ssm::SsmVars sv;
  sv.a_log = t.param(block.a_log);
  sv.wB = t.param(block.wB);
  sv.wC = t.param(block.wC);
  sv.wdelta_down = t.param(block.wdelta_down);
  sv.wdelta_up = t.param(block.wdelta_up);
  sv.delta_bias = t.param(block.delta_bias);
  sv.skip = t.param(block.skip);
  sv.use_skip = block.use_skip;
  Var a = ssm::selective_scan_batched(u, sv);
  Var g = ops::silu(ops::affine(x, t.param(block.in_proj_b_w), t.param(block.in_proj_b_b)));
  return ops::affine(ops::mul(a, g), t.param(block.out_w), t.param(block.out_b));
}

}  // namespace timemachine
