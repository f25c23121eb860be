#include <doctest.h>

#include <cmath>

#include "tm/tape.hpp"
#include "tm/verify.hpp"

using namespace timemachine;

namespace {

Tensor t1(std::initializer_list<double> v) {
  return Tensor({v.size()}, std::vector<double>(v));
}

}  // namespace

TEST_CASE("tensor invariants") {
  Tensor t({2, 3});
  CHECK(t.size() == 6);
  CHECK_THROWS_AS(Tensor({2, 3}, {1.0}), DimensionError);
  CHECK_THROWS_AS(t.reshaped({4}), DimensionError);
  Tensor r = t1({1, 2, 3, 4, 5, 6}).reshaped({2, 3});
  // reshape preserves data order
  for (std::size_t i = 0; i < 6; ++i) CHECK(r[i] == doctest::Approx(i + 1));
}

TEST_CASE("transpose is an involution and materializes the swap") {
  Rng rng(7);
  Tensor x = verify::random_tensor({2, 3, 4}, rng);
  Tensor tt = x.transposed_last2().transposed_last2();
  for (std::size_t i = 0; i < x.size(); ++i) CHECK(x[i] == tt[i]);
  Tensor m = t1({1, 2, 3, 4, 5, 6}).reshaped({2, 3});
  Tensor mt = m.transposed_last2();
  CHECK(mt.shape() == Shape{3, 2});
  CHECK(mt[0] == 1);
  CHECK(mt[1] == 4);
  CHECK(mt[2] == 2);
}

TEST_CASE("affine hand examples") {
  Tape t;
  // identity case
  Var x = t.leaf(t1({1, 2}).reshaped({1, 2}));
  Var w = t.leaf(Tensor({2, 2}, {1, 0, 0, 1}));
  Var b = t.leaf(t1({0, 0}));
  Tensor y = ops::affine(x, w, b).value();
  CHECK(y[0] == 1);
  CHECK(y[1] == 2);
  // 1*2 + 1*3 + 1
  Var x2 = t.leaf(t1({1, 1}).reshaped({1, 2}));
  Var w2 = t.leaf(Tensor({2, 1}, {2, 3}));
  Var b2 = t.leaf(t1({1}));
  CHECK(ops::affine(x2, w2, b2).value()[0] == doctest::Approx(6));
  // shape mismatch reports both shapes
  CHECK_THROWS_WITH_AS(ops::affine(x, t.leaf(Tensor({3, 2})), b), doctest::Contains("[3,2]"),
                       DimensionError);
}

TEST_CASE("silu and softplus analytic values") {
  Tape t;
  Tensor y = ops::silu(t.leaf(t1({0.0, 20.0, -1.0}))).value();
  CHECK(y[0] == 0.0);
  CHECK(y[1] == doctest::Approx(20.0).epsilon(1e-6));
  // -1 * sigmoid(-1), sigmoid(-1) = 1/(1+e)
  CHECK(y[2] == doctest::Approx(-1.0 / (1.0 + std::exp(1.0))).epsilon(1e-12));
  Tensor s = ops::softplus(t.leaf(t1({0.0, 100.0, -100.0}))).value();
  CHECK(s[0] == doctest::Approx(std::log(2.0)).epsilon(1e-12));
  CHECK(s[1] == doctest::Approx(100.0).epsilon(1e-6));
  CHECK(s[2] == doctest::Approx(std::exp(-100.0)).epsilon(1e-6));
}

TEST_CASE("causal conv identity, delay, and padding") {
  Tape t;
  Tensor x({3, 1}, {5, 7, 9});
  SUBCASE("current-tap identity") {
    Var y = ops::causal_conv1d(t.leaf(x), t.leaf(Tensor({2, 1}, {0, 1})),
                               t.leaf(Tensor({1})));
    for (std::size_t i = 0; i < 3; ++i) CHECK(y.value()[i] == x[i]);
  }
  SUBCASE("pure delay") {
    Var y = ops::causal_conv1d(t.leaf(x), t.leaf(Tensor({2, 1}, {1, 0})),
                               t.leaf(Tensor({1})));
    CHECK(y.value()[0] == 0);
    CHECK(y.value()[1] == 5);
    CHECK(y.value()[2] == 7);
  }
  SUBCASE("kernel wider than sequence is pure padding, not an error") {
    Var y = ops::causal_conv1d(t.leaf(x), t.leaf(Tensor::full({7, 1}, 1.0)),
                               t.leaf(Tensor({1})));
    CHECK(y.value()[0] == 5);
    CHECK(y.value()[2] == doctest::Approx(21));
  }
}

TEST_CASE("causal conv leaks nothing from the future") {
  CHECK(verify::conv_causality_leak(11) == 0.0);
}

TEST_CASE("dropout semantics") {
  Rng rng(3);
  Tape t;
  Tensor ones = Tensor::full({100000}, 1.0);
  SUBCASE("p=0 and eval mode are identities") {
    Var x = t.leaf(ones);
    CHECK(ops::dropout(x, 0.0, true, rng).id() == x.id());
    CHECK(ops::dropout(x, 0.7, false, rng).id() == x.id());
  }
  SUBCASE("p >= 1 is a config error") {
    CHECK_THROWS_AS(ops::dropout(t.leaf(ones), 1.0, true, rng), ConfigError);
  }
  SUBCASE("inverted scaling keeps the expectation") {
    Tensor y = ops::dropout(t.leaf(ones), 0.5, true, rng).value();
    double mean = 0;
    for (double v : y.vec()) mean += v;
    mean /= double(y.size());
    CHECK(mean > 0.98);
    CHECK(mean < 1.02);
  }
}

TEST_CASE("backward hand examples") {
  SUBCASE("mean gradient") {
    Tape t;
    Parameter x("x", t1({1, 2, 3, 4}));
    Var root = ops::mean(t.param(x));
    t.backward(root);
    for (std::size_t i = 0; i < 4; ++i) CHECK(x.grad[i] == doctest::Approx(0.25));
  }
  SUBCASE("sum of squares gradient is 2x") {
    Tape t;
    Parameter x("x", t1({1, -2}));
    Var v = t.param(x);
    t.backward(ops::sum(ops::mul(v, v)));
    CHECK(x.grad[0] == doctest::Approx(2));
    CHECK(x.grad[1] == doctest::Approx(-4));
  }
  SUBCASE("non-scalar root is a contract error") {
    Tape t;
    CHECK_THROWS_AS(t.backward(t.leaf(t1({1, 2}))), ConfigError);
  }
  SUBCASE("backward twice accumulates") {
    Parameter x("x", t1({3}));
    {
      Tape t;
      t.backward(ops::mean(t.param(x)));
    }
    {
      Tape t;
      t.backward(ops::mean(t.param(x)));
    }
    CHECK(x.grad[0] == doctest::Approx(2.0));
  }
  SUBCASE("unreachable parameters keep zero gradient") {
    Tape t;
    Parameter x("x", t1({1})), y("y", t1({2}));
    Var vx = t.param(x);
    t.param(y);  // on the tape, not connected to the root
    t.backward(ops::mean(vx));
    CHECK(y.grad[0] == 0.0);
  }
}

TEST_CASE("finite-difference check of every primitive op") {
  Rng rng(101);
  auto check = [&](const char* name, auto&& build, std::vector<Parameter*> ps) {
    CAPTURE(name);
    CHECK(verify::gradcheck_max_err(ps, build) < verify::kFdRelTol);
  };
  Parameter a("a", verify::random_tensor({3, 4}, rng));
  Parameter b("b", verify::random_tensor({3, 4}, rng));
  check("add", [&](Tape& t) { return ops::mean(ops::add(t.param(a), t.param(b))); },
        {&a, &b});
  check("sub", [&](Tape& t) { return ops::mean(ops::sub(t.param(a), t.param(b))); },
        {&a, &b});
  check("mul", [&](Tape& t) { return ops::mean(ops::mul(t.param(a), t.param(b))); },
        {&a, &b});
  check("neg", [&](Tape& t) { return ops::mean(ops::neg(t.param(a))); }, {&a});
  check("exp", [&](Tape& t) { return ops::mean(ops::exp(t.param(a))); }, {&a});
  check("sigmoid", [&](Tape& t) { return ops::mean(ops::sigmoid(t.param(a))); }, {&a});
  check("silu", [&](Tape& t) { return ops::mean(ops::silu(t.param(a))); }, {&a});
  check("softplus", [&](Tape& t) { return ops::mean(ops::softplus(t.param(a))); }, {&a});
  check("transpose",
        [&](Tape& t) {
          Var v = ops::transpose_last2(t.param(a));
          return ops::mean(ops::mul(v, v));
        },
        {&a});
  check("reshape",
        [&](Tape& t) {
          Var v = ops::reshape(t.param(a), {4, 3});
          return ops::mean(ops::mul(v, v));
        },
        {&a});
  check("concat",
        [&](Tape& t) {
          Var v = ops::concat_last(t.param(a), t.param(b));
          return ops::mean(ops::mul(v, v));
        },
        {&a, &b});
  check("sum", [&](Tape& t) { return ops::sum(ops::mul(t.param(a), t.param(a))); }, {&a});
  Parameter rp("rp", Tensor({4}, {1.5, -2.0, 0.7, 3.0}));
  check("reciprocal", [&](Tape& t) { return ops::mean(ops::reciprocal(t.param(rp))); },
        {&rp});
  Parameter cx("cx", verify::random_tensor({2, 3, 5}, rng));
  Parameter cg("cg", verify::random_tensor({3}, rng));
  Parameter cs("cs", verify::random_tensor({3}, rng));
  check("channel_scale_shift",
        [&](Tape& t) {
          return ops::mean(
              ops::channel_scale_shift(t.param(cx), t.param(cg), t.param(cs)));
        },
        {&cx, &cg, &cs});
  Parameter kx("kx", verify::random_tensor({2, 6, 3}, rng));
  Parameter kk("kk", verify::random_tensor({4, 3}, rng));
  Parameter kb("kb", verify::random_tensor({3}, rng));
  check("causal_conv1d",
        [&](Tape& t) {
          Var v = ops::causal_conv1d(t.param(kx), t.param(kk), t.param(kb));
          return ops::mean(ops::mul(v, v));
        },
        {&kx, &kk, &kb});
  // gradient of mean(affine(x,W,b)) w.r.t. everything, 5 seeds
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    Rng r2(seed);
    Parameter x("x", verify::random_tensor({3, 4}, r2));
    Parameter w("w", verify::random_tensor({4, 2}, r2));
    Parameter bias("bias", verify::random_tensor({2}, r2));
    CHECK(verify::gradcheck_max_err(
              {&x, &w, &bias},
              [&](Tape& t) {
                return ops::mean(ops::affine(t.param(x), t.param(w), t.param(bias)));
              }) < verify::kFdRelTol);
  }
}

TEST_CASE("concat then split recovers the operands") {
  Rng rng(5);
  Tensor a = verify::random_tensor({2, 3}, rng);
  Tensor b = verify::random_tensor({2, 2}, rng);
  Tape t;
  Tensor c = ops::concat_last(t.leaf(a), t.leaf(b)).value();
  for (std::size_t r = 0; r < 2; ++r) {
    for (std::size_t j = 0; j < 3; ++j) CHECK(c[r * 5 + j] == a[r * 3 + j]);
    for (std::size_t j = 0; j < 2; ++j) CHECK(c[r * 5 + 3 + j] == b[r * 2 + j]);
  }
}

TEST_CASE("non-finite outputs are rejected") {
  Tape t;
  Var x = t.leaf(t1({710.0}));  // exp overflows to inf
  CHECK_THROWS_AS(ops::exp(x), NumericError);
  CHECK_THROWS_AS(t.leaf(t1({std::nan("")})), NumericError);
}

TEST_CASE("rng streams are deterministic and dropout masks reproduce") {
  Rng a(42), b(42);
  for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());
  Rng r1(9), r2(9);
  Tape t;
  Var x = t.leaf(Tensor::full({64}, 1.0));
  Tensor m1 = ops::dropout(x, 0.3, true, r1).value();
  Tensor m2 = ops::dropout(x, 0.3, true, r2).value();
  for (std::size_t i = 0; i < m1.size(); ++i) CHECK(m1[i] == m2[i]);
}
