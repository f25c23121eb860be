#include <doctest.h>

#include <unistd.h>

#include <cmath>
#include <filesystem>

#include "tm/checkpoint.hpp"
#include "tm/train.hpp"
#include "tm/verify.hpp"

using namespace timemachine;

namespace {

ModelConfig tiny_model_config() {
  ModelConfig cfg;
  cfg.L = 8;
  cfg.T = 2;
  cfg.M = 1;
  cfg.n1 = 8;
  cfg.n2 = 4;
  cfg.ssm_state = 2;
  cfg.expand = 1;
  cfg.conv_width = 2;
  cfg.dropout_p = 0.0;
  cfg.seed = 11;
  return cfg;
}

// standardized single-channel series plus borders sized for a quick loop
struct ToyData {
  Tensor z;
  data::SplitSpec sp;
};

ToyData toy_series(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  Tensor z({n, 1});
  for (std::size_t i = 0; i < n; ++i)
    z[i] = std::sin(double(i) * 0.3) + 0.1 * rng.normal();
  ToyData d;
  d.z = std::move(z);
  d.sp = {std::size_t(n * 0.7), std::size_t(n * 0.85), n};
  return d;
}

std::filesystem::path temp_file(const std::string& stem) {
  return std::filesystem::temp_directory_path() /
         (stem + "_" + std::to_string(::getpid()) + ".tmck");
}

}  // namespace

TEST_CASE("mse and mae hand values") {
  Tensor p2({2}, {0.0, 0.0}), t2({2}, {1.0, 1.0});
  CHECK(train::mse(p2, t2) == 1.0);
  CHECK(train::mae(p2, t2) == 1.0);
  CHECK(train::mse(t2, t2) == 0.0);
  CHECK(train::mae(t2, t2) == 0.0);
  Tensor p3({2}, {1.0, -1.0}), t3({2}, {0.0, 0.0});
  CHECK(train::mse(p3, t3) == 1.0);
  CHECK(train::mae(p3, t3) == 1.0);
  CHECK_THROWS_AS(train::mse(p2, Tensor::zeros({3})), DimensionError);
}

TEST_CASE("adam single step and hand-rolled trajectory") {
  SUBCASE("theta=0, g=1, lr=0.1 at t=1") {
    Parameter th("th", Tensor({1}, {0.0}));
    th.grad = Tensor({1}, {1.0});
    train::AdamState st;
    st.lr = 0.1;
    train::adam_step({&th}, st);
    CHECK(th.value[0] == doctest::Approx(-0.0999999990).epsilon(1e-9));
    CHECK(st.t == 1);
  }
  SUBCASE("zero gradient leaves parameters unchanged") {
    Parameter th("th", Tensor({1}, {0.7}));
    th.grad = Tensor::zeros({1});
    train::AdamState st;
    train::adam_step({&th}, st);
    CHECK(th.value[0] == 0.7);
  }
  SUBCASE("3-step trajectory matches an independent reference") {
    const double grads[3] = {1.0, -0.5, 0.25};
    Parameter th("th", Tensor({1}, {0.3}));
    train::AdamState st;
    st.lr = 0.05;
    // reference recomputed from the update equations
    double theta = 0.3, m = 0, v = 0;
    for (int k = 0; k < 3; ++k) {
      th.grad = Tensor({1}, {grads[k]});
      train::adam_step({&th}, st);
      m = 0.9 * m + 0.1 * grads[k];
      v = 0.999 * v + 0.001 * grads[k] * grads[k];
      const double mh = m / (1.0 - std::pow(0.9, k + 1));
      const double vh = v / (1.0 - std::pow(0.999, k + 1));
      theta -= 0.05 * mh / (std::sqrt(vh) + 1e-8);
      CHECK(std::abs(th.value[0] - theta) < 1e-12);
    }
  }
  SUBCASE("non-trainable parameters are skipped") {
    Parameter th("th", Tensor({1}, {0.5}));
    th.trainable = false;
    th.grad = Tensor({1}, {1.0});
    train::AdamState st;
    train::adam_step({&th}, st);
    CHECK(th.value[0] == 0.5);
  }
}

TEST_CASE("global-norm gradient clip") {
  Parameter a("a", Tensor({2}, {0.0, 0.0}));
  a.grad = Tensor({2}, {3.0, 4.0});
  train::clip_grad_norm({&a}, 0.0);  // off
  CHECK(a.grad[1] == 4.0);
  train::clip_grad_norm({&a}, 10.0);  // under the cap
  CHECK(a.grad[1] == 4.0);
  train::clip_grad_norm({&a}, 1.0);
  CHECK(a.grad[0] == doctest::Approx(0.6));
  CHECK(a.grad[1] == doctest::Approx(0.8));
}

TEST_CASE("one epoch on a tiny set: log shape and checkpoint round trip") {
  ModelConfig mc = tiny_model_config();
  ToyData d = toy_series(60, 51);
  const auto train_ds = data::make_windows(d.z, d.sp, data::Split::train, mc.L, mc.T);
  const auto val_ds = data::make_windows(d.z, d.sp, data::Split::val, mc.L, mc.T);
  TimeMachineModel model(mc);
  train::TrainConfig tc;
  tc.epochs = 1;
  tc.batch_size = 8;
  tc.seed = 3;
  const auto res = train::train_loop(model, train_ds, val_ds, tc, train::fixed_clock());
  REQUIRE(res.log.size() == 1);
  CHECK(res.best_epoch == 1);
  CHECK(res.log[0].seconds == 0.0);
  train::restore_params(model, res.best_params);
  const auto val = train::evaluate_windows(model, val_ds, tc.batch_size);
  CHECK(val.mse == res.best_val_mse);

  const auto path = temp_file("roundtrip");
  checkpoint::save(path.string(), model, {tc.seed, res.best_epoch, res.best_val_mse});
  checkpoint::Loaded loaded = checkpoint::load(path.string());
  std::filesystem::remove(path);
  CHECK(loaded.meta.val_mse == res.best_val_mse);
  CHECK(loaded.meta.seed == tc.seed);
  const auto val2 = train::evaluate_windows(*loaded.model, val_ds, tc.batch_size);
  CHECK(val2.mse == val.mse);  // bit-exact round trip
  CHECK(val2.mae == val.mae);
  // parameter tensors survive byte-for-byte
  for (const Parameter* p : model.parameters()) {
    const Parameter* q = loaded.model->find_param(p->name);
    REQUIRE(q != nullptr);
    for (std::size_t i = 0; i < p->value.size(); ++i) CHECK(p->value[i] == q->value[i]);
  }
}

TEST_CASE("lr=0 is rejected by config validation") {
  ModelConfig mc = tiny_model_config();
  ToyData d = toy_series(60, 52);
  const auto train_ds = data::make_windows(d.z, d.sp, data::Split::train, mc.L, mc.T);
  const auto val_ds = data::make_windows(d.z, d.sp, data::Split::val, mc.L, mc.T);
  train::TrainConfig tc;
  tc.epochs = 1;
  tc.batch_size = 8;
  tc.lr = 0.0;
  TimeMachineModel model(mc);
  CHECK_THROWS_AS(train::train_loop(model, train_ds, val_ds, tc), ConfigError);
}

TEST_CASE("training is deterministic for a fixed seed") {
  ModelConfig mc = tiny_model_config();
  ToyData d = toy_series(80, 53);
  const auto train_ds = data::make_windows(d.z, d.sp, data::Split::train, mc.L, mc.T);
  const auto val_ds = data::make_windows(d.z, d.sp, data::Split::val, mc.L, mc.T);
  train::TrainConfig tc;
  tc.epochs = 3;
  tc.batch_size = 8;
  tc.seed = 9;
  auto run = [&] {
    TimeMachineModel model(mc);
    return train::train_loop(model, train_ds, val_ds, tc, train::fixed_clock());
  };
  const auto r1 = run();
  const auto r2 = run();
  REQUIRE(r1.log.size() == r2.log.size());
  for (std::size_t i = 0; i < r1.log.size(); ++i) {
    CHECK(train::epoch_log_row(r1.log[i]) == train::epoch_log_row(r2.log[i]));
  }
  CHECK(r1.best_epoch == r2.best_epoch);
  CHECK(r1.best_val_mse == r2.best_val_mse);
}

TEST_CASE("loss decreases on a noiseless sinusoid") {
  ModelConfig mc = tiny_model_config();
  mc.L = 16;
  mc.T = 4;
  Tensor z({160, 1});
  for (std::size_t i = 0; i < 160; ++i) z[i] = std::sin(double(i) * 0.25);
  data::SplitSpec sp{120, 140, 160};
  const auto train_ds = data::make_windows(z, sp, data::Split::train, mc.L, mc.T);
  const auto val_ds = data::make_windows(z, sp, data::Split::val, mc.L, mc.T);
  TimeMachineModel model(mc);
  train::TrainConfig tc;
  tc.epochs = 10;
  tc.batch_size = 16;
  const auto res = train::train_loop(model, train_ds, val_ds, tc, train::fixed_clock());
  CHECK(res.log[9].train_mse < res.log[0].train_mse);
}

TEST_CASE("persistence baseline on a constant series is exact") {
  Tensor z({30, 1});
  for (std::size_t i = 0; i < 30; ++i) z[i] = 2.0;
  data::SplitSpec sp{30, 30, 30};
  const auto ds = data::make_windows(z, sp, data::Split::train, 4, 2);
  const auto m = train::persistence_baseline(ds, 1);
  CHECK(m.mse == 0.0);
  CHECK(m.mae == 0.0);
}

TEST_CASE("epoch log format") {
  CHECK(train::epoch_log_header() == "epoch,train_mse,val_mse,val_mae,seconds");
  train::EpochRow r{3, 0.5, 0.25, 0.125, 0.0};
  CHECK(train::epoch_log_row(r) == "3,0.5,0.25,0.125,0");
}
