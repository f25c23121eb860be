#pragma once

// Reverse-mode automatic differentiation over exactly the operation set the
// model needs. A Tape records nodes in the order they are created, which is a
// topological order of the DAG, so backward() is a single reverse sweep.
// Gradients accumulate (+=); clear them through Parameter::zero_grad between
// steps. Every op checks its output for NaN/Inf and throws NumericError.

#include <algorithm>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "tm/rng.hpp"
#include "tm/tensor.hpp"

namespace timemachine {

struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;  // same shape, zero-initialized
  bool trainable = true;

  Parameter() = default;
  Parameter(std::string n, Tensor v)
      : name(std::move(n)), value(std::move(v)), grad(Tensor::zeros(value.shape())) {}

  void zero_grad() { std::fill(grad.vec().begin(), grad.vec().end(), 0.0); }
};

class Tape;

class Var {
 public:
  Var() = default;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}
  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  std::size_t id() const { return id_; }
  Tape* tape() const { return tape_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

class Tape {
 public:
  struct Node {
    Tensor value;
    Tensor grad;  // lazily sized at backward time
    std::function<void(Tape&, std::size_t)> backward;  // nullptr for leaves
    Parameter* param = nullptr;
  };

  Var leaf(Tensor v) {
    v.require_finite("leaf");
    nodes_.push_back({std::move(v), {}, nullptr, nullptr});
    return Var(this, nodes_.size() - 1);
  }

  Var param(Parameter& p) {
    nodes_.push_back({p.value, {}, nullptr, &p});
    return Var(this, nodes_.size() - 1);
  }

  Var emit(Tensor value, std::function<void(Tape&, std::size_t)> back, const char* op) {
    value.require_finite(op);
    nodes_.push_back({std::move(value), {}, std::move(back), nullptr});
    return Var(this, nodes_.size() - 1);
  }

  const Tensor& value(std::size_t id) const { return nodes_[id].value; }

  Tensor& grad(std::size_t id) {
    Node& n = nodes_[id];
    if (n.grad.size() == 0) n.grad = Tensor::zeros(n.value.shape());
    return n.grad;
  }

  // Reverse sweep from a scalar root. Accumulates into Parameter::grad for
  // every parameter node reachable from the root.
  void backward(const Var& root) {
    if (root.tape() != this) throw ConfigError("backward: var from another tape");
    if (value(root.id()).size() != 1)
      throw ConfigError("backward: root must be scalar, got shape " +
                        shape_str(value(root.id()).shape()));
    grad(root.id())[0] += 1.0;
    for (std::size_t i = root.id() + 1; i-- > 0;) {
      Node& n = nodes_[i];
      if (n.grad.size() == 0) continue;  // not reachable from root
      if (n.backward) n.backward(*this, i);
      if (n.param && n.param->trainable) {
        for (std::size_t k = 0; k < n.grad.size(); ++k) n.param->grad[k] += n.grad[k];
      }
    }
  }

  std::size_t num_nodes() const { return nodes_.size(); }

 private:
  std::vector<Node> nodes_;
};

inline const Tensor& Var::value() const { return tape_->value(id_); }

namespace ops {

namespace detail {
inline Tape* tape_of(const Var& a, const Var& b, const char* op) {
  if (a.tape() != b.tape()) throw ConfigError(std::string(op) + ": vars from different tapes");
  return a.tape();
}
}  // namespace detail

// ---- elementwise binary -----------------------------------------------------

inline Var add(const Var& a, const Var& b) {
  Tape* t = detail::tape_of(a, b, "add");
  require_same_shape(a.value(), b.value(), "add");
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += b.value()[i];
  const std::size_t ia = a.id(), ib = b.id();
  return t->emit(std::move(out),
                 [ia, ib](Tape& tp, std::size_t self) {
                   const Tensor& g = tp.grad(self);
                   Tensor& ga = tp.grad(ia);
                   Tensor& gb = tp.grad(ib);
                   for (std::size_t i = 0; i < g.size(); ++i) {
                     ga[i] += g[i];
                     gb[i] += g[i];
                   }
                 },
                 "add");
}

inline Var mul(const Var& a, const Var& b) {
  Tape* t = detail::tape_of(a, b, "mul");
  require_same_shape(a.value(), b.value(), "mul");
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b.value()[i];
  const std::size_t ia = a.id(), ib = b.id();
  return t->emit(std::move(out),
                 [ia, ib](Tape& tp, std::size_t self) {
                   const Tensor& g = tp.grad(self);
                   const Tensor& va = tp.value(ia);
                   const Tensor& vb = tp.value(ib);
                   Tensor& ga = tp.grad(ia);
                   Tensor& gb = tp.grad(ib);
                   for (std::size_t i = 0; i < g.size(); ++i) {
                     ga[i] += g[i] * vb[i];
                     gb[i] += g[i] * va[i];
                   }
                 },
                 "mul");
}

inline Var sub(const Var& a, const Var& b) {
  Tape* t = detail::tape_of(a, b, "sub");
  require_same_shape(a.value(), b.value(), "sub");
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= b.value()[i];
  const std::size_t ia = a.id(), ib = b.id();
  return t->emit(std::move(out),
                 [ia, ib](Tape& tp, std::size_t self) {
                   const Tensor& g = tp.grad(self);
                   Tensor& ga = tp.grad(ia);
                   Tensor& gb = tp.grad(ib);
                   for (std::size_t i = 0; i < g.size(); ++i) {
                     ga[i] += g[i];
                     gb[i] -= g[i];
                   }
                 },
                 "sub");
}

// ---- elementwise unary ------------------------------------------------------

inline Var neg(const Var& a) {
  Tensor out = a.value();
  for (auto& v : out.vec()) v = -v;
  const std::size_t ia = a.id();
  return a.tape()->emit(std::move(out),
                        [ia](Tape& tp, std::size_t self) {
                          const Tensor& g = tp.grad(self);
                          Tensor& ga = tp.grad(ia);
                          for (std::size_t i = 0; i < g.size(); ++i) ga[i] -= g[i];
                        },
                        "neg");
}

inline Var exp(const Var& a) {
  Tensor out = a.value();
  for (auto& v : out.vec()) v = std::exp(v);
  const std::size_t ia = a.id();
  return a.tape()->emit(std::move(out),
                        [ia](Tape& tp, std::size_t self) {
                          const Tensor& g = tp.grad(self);
                          const Tensor& y = tp.value(self);
                          Tensor& ga = tp.grad(ia);
                          for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * y[i];
                        },
                        "exp");
}

inline double sigmoid_scalar(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

inline Var sigmoid(const Var& a) {
  Tensor out = a.value();
  for (auto& v : out.vec()) v = sigmoid_scalar(v);
  const std::size_t ia = a.id();
  return a.tape()->emit(std::move(out),
                        [ia](Tape& tp, std::size_t self) {
                          const Tensor& g = tp.grad(self);
                          const Tensor& y = tp.value(self);
                          Tensor& ga = tp.grad(ia);
                          for (std::size_t i = 0; i < g.size(); ++i)
                            ga[i] += g[i] * y[i] * (1.0 - y[i]);
                        },
                        "sigmoid");
}

inline Var silu(const Var& a) {
  Tensor out = a.value();
  for (auto& v : out.vec()) v = v * sigmoid_scalar(v);
  const std::size_t ia = a.id();
  return a.tape()->emit(std::move(out),
                        [ia](Tape& tp, std::size_t self) {
                          const Tensor& g = tp.grad(self);
                          const Tensor& x = tp.value(ia);
                          Tensor& ga = tp.grad(ia);
                          for (std::size_t i = 0; i < g.size(); ++i) {
                            const double s = sigmoid_scalar(x[i]);
                            ga[i] += g[i] * (s + x[i] * s * (1.0 - s));
                          }
                        },
                        "silu");
}

// overflow-safe softplus: max(x,0) + log1p(exp(-|x|))
inline double softplus_scalar(double x) {
  return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x)));
}

inline Var softplus(const Var& a) {
  Tensor out = a.value();
  for (auto& v : out.vec()) v = softplus_scalar(v);
  const std::size_t ia = a.id();
  return a.tape()->emit(std::move(out),
                        [ia](Tape& tp, std::size_t self) {
                          const Tensor& g = tp.grad(self);
                          const Tensor& x = tp.value(ia);
                          Tensor& ga = tp.grad(ia);
                          for (std::size_t i = 0; i < g.size(); ++i)
                            ga[i] += g[i] * sigmoid_scalar(x[i]);
                        },
                        "softplus");
}

inline Var reciprocal(const Var& a) {
  Tensor out = a.value();
  for (auto& v : out.vec()) v = 1.0 / v;
  const std::size_t ia = a.id();
  return a.tape()->emit(std::move(out),
                        [ia](Tape& tp, std::size_t self) {
                          const Tensor& g = tp.grad(self);
                          const Tensor& y = tp.value(self);
                          Tensor& ga = tp.grad(ia);
                          for (std::size_t i = 0; i < g.size(); ++i)
                            ga[i] -= g[i] * y[i] * y[i];
                        },
                        "reciprocal");
}

inline Var scale(const Var& a, double c) {
  Tensor out = a.value();
  for (auto& v : out.vec()) v *= c;
  const std::size_t ia = a.id();
  return a.tape()->emit(std::move(out),
                        [ia, c](Tape& tp, std::size_t self) {
                          const Tensor& g = tp.grad(self);
                          Tensor& ga = tp.grad(ia);
                          for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * c;
                        },
                        "scale");
}

// elementwise product with a constant tensor (no gradient into the constant)
inline Var mul_const(const Var& a, Tensor c) {
  require_same_shape(a.value(), c, "mul_const");
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= c[i];
  const std::size_t ia = a.id();
  auto cp = std::make_shared<Tensor>(std::move(c));
  return a.tape()->emit(std::move(out),
                        [ia, cp](Tape& tp, std::size_t self) {
                          const Tensor& g = tp.grad(self);
                          Tensor& ga = tp.grad(ia);
                          for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * (*cp)[i];
                        },
                        "mul_const");
}

inline Var add_const(const Var& a, Tensor c) {
  require_same_shape(a.value(), c, "add_const");
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += c[i];
  const std::size_t ia = a.id();
  return a.tape()->emit(std::move(out),
                        [ia](Tape& tp, std::size_t self) {
                          const Tensor& g = tp.grad(self);
                          Tensor& ga = tp.grad(ia);
                          for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
                        },
                        "add_const");
}

// ---- shape ops --------------------------------------------------------------

inline Var reshape(const Var& a, Shape s) {
  Tensor out = a.value().reshaped(std::move(s));
  const std::size_t ia = a.id();
  return a.tape()->emit(std::move(out),
                        [ia](Tape& tp, std::size_t self) {
                          const Tensor& g = tp.grad(self);
                          Tensor& ga = tp.grad(ia);
                          for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
                        },
                        "reshape");
}

inline Var transpose_last2(const Var& a) {
  Tensor out = a.value().transposed_last2();
  const std::size_t ia = a.id();
  return a.tape()->emit(std::move(out),
                        [ia](Tape& tp, std::size_t self) {
                          Tensor gt = tp.grad(self).transposed_last2();
                          Tensor& ga = tp.grad(ia);
                          for (std::size_t i = 0; i < gt.size(); ++i) ga[i] += gt[i];
                        },
                        "transpose");
}

// concatenation along the last axis
inline Var concat_last(const Var& a, const Var& b) {
  Tape* t = detail::tape_of(a, b, "concat");
  const Tensor& va = a.value();
  const Tensor& vb = b.value();
  if (va.rank() != vb.rank() || va.rank() == 0)
    throw DimensionError("concat: rank mismatch " + shape_str(va.shape()) + " vs " +
                         shape_str(vb.shape()));
  for (std::size_t i = 0; i + 1 < va.rank(); ++i)
    if (va.dim(i) != vb.dim(i))
      throw DimensionError("concat: leading shape mismatch " + shape_str(va.shape()) +
                           " vs " + shape_str(vb.shape()));
  const std::size_t ca = va.last_dim(), cb = vb.last_dim(), rows = va.rows();
  Shape s = va.shape();
  s.back() = ca + cb;
  Tensor out(s);
  for (std::size_t r = 0; r < rows; ++r) {
    std::copy(va.data() + r * ca, va.data() + (r + 1) * ca, out.data() + r * (ca + cb));
    std::copy(vb.data() + r * cb, vb.data() + (r + 1) * cb, out.data() + r * (ca + cb) + ca);
  }
  const std::size_t ia = a.id(), ib = b.id();
  return t->emit(std::move(out),
                 [ia, ib, ca, cb, rows](Tape& tp, std::size_t self) {
                   const Tensor& g = tp.grad(self);
                   Tensor& ga = tp.grad(ia);
                   Tensor& gb = tp.grad(ib);
                   for (std::size_t r = 0; r < rows; ++r) {
                     for (std::size_t j = 0; j < ca; ++j) ga[r * ca + j] += g[r * (ca + cb) + j];
                     for (std::size_t j = 0; j < cb; ++j)
                       gb[r * cb + j] += g[r * (ca + cb) + ca + j];
                   }
                 },
                 "concat");
}

// ---- reductions -------------------------------------------------------------

inline Var sum(const Var& a) {
  double s = 0;
  for (double v : a.value().vec()) s += v;
  const std::size_t ia = a.id();
  return a.tape()->emit(Tensor::scalar(s),
                        [ia](Tape& tp, std::size_t self) {
                          const double g = tp.grad(self)[0];
                          Tensor& ga = tp.grad(ia);
                          for (auto& v : ga.vec()) v += g;
                        },
                        "sum");
}

inline Var mean(const Var& a) {
  const double n = static_cast<double>(a.value().size());
  double s = 0;
  for (double v : a.value().vec()) s += v;
  const std::size_t ia = a.id();
  return a.tape()->emit(Tensor::scalar(s / n),
                        [ia, n](Tape& tp, std::size_t self) {
                          const double g = tp.grad(self)[0] / n;
                          Tensor& ga = tp.grad(ia);
                          for (auto& v : ga.vec()) v += g;
                        },
                        "mean");
}

// ---- linear maps ------------------------------------------------------------

// y[..., j] = sum_i x[..., i] W[i, j]   over the last axis
inline Var matmul_last(const Var& x, const Var& w) {
  Tape* t = detail::tape_of(x, w, "matmul");
  const Tensor& vx = x.value();
  const Tensor& vw = w.value();
  if (vw.rank() != 2)
    throw DimensionError("matmul: weight must be rank-2, got " + shape_str(vw.shape()));
  const std::size_t din = vw.dim(0), dout = vw.dim(1);
  if (vx.last_dim() != din)
    throw DimensionError("matmul: input last axis " + shape_str(vx.shape()) +
                         " does not match weight " + shape_str(vw.shape()));
  const std::size_t rows = vx.rows();
  Shape s = vx.shape();
  s.back() = dout;
  Tensor out(s);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = vx.data() + r * din;
    double* yr = out.data() + r * dout;
    for (std::size_t i = 0; i < din; ++i) {
      const double xv = xr[i];
      if (xv == 0.0) continue;
      const double* wr = vw.data() + i * dout;
      for (std::size_t j = 0; j < dout; ++j) yr[j] += xv * wr[j];
    }
  }
  const std::size_t ix = x.id(), iw = w.id();
  return t->emit(std::move(out),
                 [ix, iw, rows, din, dout](Tape& tp, std::size_t self) {
                   const Tensor& g = tp.grad(self);
                   const Tensor& vx = tp.value(ix);
                   const Tensor& vw = tp.value(iw);
                   Tensor& gx = tp.grad(ix);
                   Tensor& gw = tp.grad(iw);
                   for (std::size_t r = 0; r < rows; ++r) {
                     const double* gr = g.data() + r * dout;
                     const double* xr = vx.data() + r * din;
                     for (std::size_t i = 0; i < din; ++i) {
                       const double* wr = vw.data() + i * dout;
                       double acc = 0;
                       for (std::size_t j = 0; j < dout; ++j) {
                         acc += gr[j] * wr[j];
                         gw[i * dout + j] += xr[i] * gr[j];
                       }
                       gx[r * din + i] += acc;
                     }
                   }
                 },
                 "matmul");
}

// bias broadcast over leading axes
inline Var bias_add(const Var& x, const Var& b) {
  Tape* t = detail::tape_of(x, b, "bias_add");
  const Tensor& vx = x.value();
  const Tensor& vb = b.value();
  if (vb.rank() != 1 || vb.dim(0) != vx.last_dim())
    throw DimensionError("bias_add: bias " + shape_str(vb.shape()) +
                         " does not match input " + shape_str(vx.shape()));
  const std::size_t d = vx.last_dim(), rows = vx.rows();
  Tensor out = vx;
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t j = 0; j < d; ++j) out[r * d + j] += vb[j];
  const std::size_t ix = x.id(), ib = b.id();
  return t->emit(std::move(out),
                 [ix, ib, rows, d](Tape& tp, std::size_t self) {
                   const Tensor& g = tp.grad(self);
                   Tensor& gx = tp.grad(ix);
                   Tensor& gb = tp.grad(ib);
                   for (std::size_t r = 0; r < rows; ++r)
                     for (std::size_t j = 0; j < d; ++j) {
                       gx[r * d + j] += g[r * d + j];
                       gb[j] += g[r * d + j];
                     }
                 },
                 "bias_add");
}

inline Var affine(const Var& x, const Var& w, const Var& b) {
  return bias_add(matmul_last(x, w), b);
}

inline Var linear(const Var& x, const Var& w) { return matmul_last(x, w); }

// ---- causal depthwise conv -------------------------------------------------
// x: [..., seq, d], kernel: [w, d], bias: [d]. Left zero padding, no future
// leakage: y[t,c] = bias[c] + sum_j kernel[j,c] * x[t-w+1+j, c].

inline Var causal_conv1d(const Var& x, const Var& kernel, const Var& bias) {
  Tape* t = detail::tape_of(x, kernel, "causal_conv1d");
  detail::tape_of(kernel, bias, "causal_conv1d");
  const Tensor& vx = x.value();
  const Tensor& vk = kernel.value();
  const Tensor& vb = bias.value();
  if (vx.rank() < 2 || vk.rank() != 2)
    throw DimensionError("causal_conv1d: need x rank>=2 " + shape_str(vx.shape()) +
                         " and kernel rank 2 " + shape_str(vk.shape()));
  const std::size_t d = vx.last_dim();
  const std::size_t seq = vx.dim(vx.rank() - 2);
  const std::size_t w = vk.dim(0);
  if (vk.dim(1) != d || vb.dim(0) != d)
    throw DimensionError("causal_conv1d: channel mismatch x " + shape_str(vx.shape()) +
                         " kernel " + shape_str(vk.shape()));
  const std::size_t batches = vx.size() / (seq * d);
  Tensor out(vx.shape());
  for (std::size_t b = 0; b < batches; ++b) {
    const double* xb = vx.data() + b * seq * d;
    double* yb = out.data() + b * seq * d;
    for (std::size_t tt = 0; tt < seq; ++tt)
      for (std::size_t c = 0; c < d; ++c) {
        double acc = vb[c];
        for (std::size_t j = 0; j < w; ++j) {
          const std::ptrdiff_t src = static_cast<std::ptrdiff_t>(tt + j + 1) -
                                     static_cast<std::ptrdiff_t>(w);
          if (src >= 0) acc += vk[j * d + c] * xb[src * d + c];
        }
        yb[tt * d + c] = acc;
      }
  }
  const std::size_t ix = x.id(), ik = kernel.id(), ib = bias.id();
  return t->emit(std::move(out),
                 [ix, ik, ib, batches, seq, d, w](Tape& tp, std::size_t self) {
                   const Tensor& g = tp.grad(self);
                   const Tensor& vx = tp.value(ix);
                   const Tensor& vk = tp.value(ik);
                   Tensor& gx = tp.grad(ix);
                   Tensor& gk = tp.grad(ik);
                   Tensor& gb = tp.grad(ib);
                   for (std::size_t b = 0; b < batches; ++b) {
                     const double* gy = g.data() + b * seq * d;
                     const double* xb = vx.data() + b * seq * d;
                     double* gxb = gx.data() + b * seq * d;
                     for (std::size_t tt = 0; tt < seq; ++tt)
                       for (std::size_t c = 0; c < d; ++c) {
                         const double gv = gy[tt * d + c];
                         if (gv == 0.0) continue;
                         gb[c] += gv;
                         for (std::size_t j = 0; j < w; ++j) {
                           const std::ptrdiff_t src =
                               static_cast<std::ptrdiff_t>(tt + j + 1) -
                               static_cast<std::ptrdiff_t>(w);
                           if (src >= 0) {
                             gk[j * d + c] += gv * xb[src * d + c];
                             gxb[src * d + c] += gv * vk[j * d + c];
                           }
                         }
                       }
                   }
                 },
                 "causal_conv1d");
}

// ---- dropout ----------------------------------------------------------------
// Inverted dropout: survivors scaled by 1/(1-p) at train time, identity at
// evaluation. The mask is drawn from the caller's Rng.

inline Var dropout(const Var& x, double p, bool training, Rng& rng) {
  if (p < 0.0 || p >= 1.0)
    throw ConfigError("dropout: rate must be in [0,1), got " + std::to_string(p));
  if (!training || p == 0.0) return x;
  Tensor mask(x.value().shape());
  const double keep_scale = 1.0 / (1.0 - p);
  for (auto& m : mask.vec()) m = (rng.uniform() >= p) ? keep_scale : 0.0;
  return mul_const(x, std::move(mask));
}

// ---- per-channel affine over axis 1 of [B, M, L] ---------------------------
// y[b,m,l] = x[b,m,l] * gain[m] + shift[m]; RevIN's learnable part.

inline Var channel_scale_shift(const Var& x, const Var& gain, const Var& shift) {
  Tape* t = detail::tape_of(x, gain, "channel_scale_shift");
  const Tensor& vx = x.value();
  const Tensor& vg = gain.value();
  const Tensor& vs = shift.value();
  if (vx.rank() != 3 || vg.dim(0) != vx.dim(1) || vs.dim(0) != vx.dim(1))
    throw DimensionError("channel_scale_shift: x " + shape_str(vx.shape()) + " gain " +
                         shape_str(vg.shape()));
  const std::size_t B = vx.dim(0), M = vx.dim(1), L = vx.dim(2);
  Tensor out(vx.shape());
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t m = 0; m < M; ++m)
      for (std::size_t l = 0; l < L; ++l)
        out[(b * M + m) * L + l] = vx[(b * M + m) * L + l] * vg[m] + vs[m];
  const std::size_t ix = x.id(), ig = gain.id(), is = shift.id();
  return t->emit(std::move(out),
                 [ix, ig, is, B, M, L](Tape& tp, std::size_t self) {
                   const Tensor& g = tp.grad(self);
                   const Tensor& vx = tp.value(ix);
                   const Tensor& vg = tp.value(ig);
                   Tensor& gx = tp.grad(ix);
                   Tensor& gg = tp.grad(ig);
                   Tensor& gs = tp.grad(is);
                   for (std::size_t b = 0; b < B; ++b)
                     for (std::size_t m = 0; m < M; ++m)
                       for (std::size_t l = 0; l < L; ++l) {
                         const std::size_t i = (b * M + m) * L + l;
                         gx[i] += g[i] * vg[m];
                         gg[m] += g[i] * vx[i];
                         gs[m] += g[i];
                       }
                 },
                 "channel_scale_shift");
}

}  // namespace ops
}  // namespace timemachine
