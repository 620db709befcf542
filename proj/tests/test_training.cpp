#include <cmath>
#include <random>

#include "doctest.h"
#include "stefnet/training.hpp"
#include "test_util.hpp"

using namespace stefnet;
using stefnet::testing::random_tensor;
using stefnet::testing::random_values;

namespace {

ModelConfig toy_model(std::size_t history = 2) {
  ModelConfig c;
  c.history = history;
  c.convlstm_layers = 1;
  c.convlstm_filters = 2;
  c.dense_sizes = {8, 0};
  c.set_grid(4, 4);
  return c;
}

Dataset toy_dataset(std::uint64_t seed = 3) {
  GridSpec g;
  g.width = g.height = 4;
  SynthConfig sc;
  sc.seed = seed;
  sc.days = 1;
  auto out = synth_generate(sc, g);
  IngestOptions opts;
  opts.explicit_split = true;
  opts.train_intervals = 36;
  return ingest({out.requests, {}}, {out.externals, {}}, g, opts).dataset;
}

std::vector<std::vector<double>> snapshot(const ParamList& params) {
  std::vector<std::vector<double>> out;
  for (const auto& p : params) out.emplace_back(p.tensor.data().begin(), p.tensor.data().end());
  return out;
}

}  // namespace

TEST_CASE("train config: defaults and validation") {
  TrainConfig c;
  CHECK(c.batch_size == 16);
  CHECK(c.epochs == 50);
  CHECK(c.learning_rate == 1e-3);
  CHECK(c.beta1 == 0.9);
  CHECK(c.beta2 == 0.999);
  CHECK(c.epsilon == 1e-8);
  c.batch_size = 0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = {};
  c.learning_rate = 0.0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
}

TEST_CASE("mse loss: analytic values") {
  auto a = random_tensor({3, 2, 2}, 1, false);
  CHECK(mse_loss(a, a).item() == 0.0);
  auto pred = Tensor::from({2, 2}, {2, 2, 2, 2});
  auto target = Tensor::from({2, 2}, {1, 1, 1, 1});
  CHECK(mse_loss(pred, target).item() == 4.0);
  CHECK(mse_loss(reshape(pred, {1, 2, 2}), reshape(target, {1, 2, 2})).item() == 4.0);
  CHECK_THROWS_AS(mse_loss(pred, Tensor::zeros({2, 3})), DimensionError);
}

TEST_CASE("mse loss: gradient is 2/m (pred - target)") {
  auto pred = random_tensor({3, 2, 2}, 2);
  auto target = random_tensor({3, 2, 2}, 3, false);
  mse_loss(pred, target).backward();
  for (std::size_t k = 0; k < 12; ++k) {
    CHECK(pred.grad()[k] == doctest::Approx(2.0 / 3.0 * (pred.at(k) - target.at(k))).epsilon(1e-14));
  }
  auto r = gradcheck([&] { return mse_loss(pred, target); }, {pred});
  CHECK(r.max_rel_error < 1e-6);
}

TEST_CASE("mse loss: batch loss is the mean of per-sample losses") {
  auto pred = random_tensor({4, 3, 3}, 4, false);
  auto target = random_tensor({4, 3, 3}, 5, false);
  double total = 0.0;
  for (std::size_t i = 0; i < 4; ++i) {
    total += mse_loss(reshape(narrow(pred, 0, i, 1), {3, 3}), reshape(narrow(target, 0, i, 1), {3, 3})).item();
  }
  CHECK(mse_loss(pred, target).item() == doctest::Approx(total / 4.0).epsilon(1e-14));
}

TEST_CASE("adam: first step moves by about lr against the gradient sign") {
  auto w = Tensor::from({4}, {0.5, -0.5, 1.0, 2.0}, true);
  ParamList params{{"w", w}};
  const std::vector<double> g{0.3, -2.0, 1e-3, -50.0};
  std::copy(g.begin(), g.end(), w.mutable_grad().begin());
  TrainConfig cfg;
  auto state = adam_init(params);
  const std::vector<double> before(w.data().begin(), w.data().end());
  adam_step(params, state, cfg);
  CHECK(state.step == 1);
  for (std::size_t k = 0; k < 4; ++k) {
    // Reference formula: m_hat = g, v_hat = g^2, update = lr * g / (|g| + eps).
    const double expected = before[k] - cfg.learning_rate * g[k] / (std::abs(g[k]) + cfg.epsilon);
    CHECK(w.at(k) == doctest::Approx(expected).epsilon(1e-12));
    CHECK(std::abs(w.at(k) - before[k]) == doctest::Approx(cfg.learning_rate).epsilon(1e-4));
  }
}

TEST_CASE("adam: matches a scalar reference over several steps") {
  auto w = Tensor::from({1}, {1.0}, true);
  ParamList params{{"w", w}};
  TrainConfig cfg;
  cfg.learning_rate = 0.01;
  auto state = adam_init(params);
  double x = 1.0, m = 0.0, v = 0.0;
  for (int t = 1; t <= 10; ++t) {
    const double g = 2.0 * x - 0.5 * t;
    w.mutable_grad()[0] = g;
    adam_step(params, state, cfg);
    m = 0.9 * m + 0.1 * g;
    v = 0.999 * v + 0.001 * g * g;
    x -= 0.01 * (m / (1 - std::pow(0.9, t))) / (std::sqrt(v / (1 - std::pow(0.999, t))) + 1e-8);
    CHECK(w.at(0) == doctest::Approx(x).epsilon(1e-13));
  }
}

TEST_CASE("adam: zero gradient is a fixed point") {
  auto w = random_tensor({3, 2}, 6);
  auto b = random_tensor({2}, 7);  // never receives a gradient buffer
  ParamList params{{"w", w}, {"b", b}};
  w.mutable_grad();
  auto before = snapshot(params);
  auto state = adam_init(params);
  for (int k = 0; k < 20; ++k) adam_step(params, state, {});
  CHECK(snapshot(params) == before);
  CHECK(state.first_moment[0].size() == 6);
  CHECK(state.second_moment[1].size() == 2);
}

TEST_CASE("metrics: analytic values and inequality") {
  auto m = compute_metrics(std::vector<double>{1, 2}, std::vector<double>{2, 4});
  CHECK(m.mae == 1.5);
  CHECK(m.rmse == doctest::Approx(std::sqrt(2.5)).epsilon(1e-15));
  CHECK(m.count == 2);
  auto perfect = compute_metrics(std::vector<double>{3, 4}, std::vector<double>{3, 4});
  CHECK(perfect.mae == 0.0);
  CHECK(perfect.rmse == 0.0);
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    auto a = random_values(50, seed, 0, 10);
    auto b = random_values(50, seed + 100, 0, 10);
    auto r = compute_metrics(a, b);
    CHECK(r.rmse >= r.mae);
    CHECK(r.mae >= 0.0);
  }
  CHECK_THROWS_AS(compute_metrics(std::vector<double>{1}, std::vector<double>{1, 2}), DimensionError);
}

TEST_CASE("persistence baseline") {
  Dataset d;
  d.grid.width = d.grid.height = 2;
  d.counts.assign(6, Frame{1, 2, 3, 4});
  d.scaled = d.counts;
  d.externals.assign(6, FeatureVector{});
  d.split = 4;
  auto samples = make_windows(6, 6, 2);
  CHECK(persistence_baseline(d, samples).mae == 0.0);

  auto real = toy_dataset();
  auto real_samples = make_windows(real.frames(), real.externals.size(), 2);
  CHECK(persistence_baseline(real, real_samples).mae > 0.0);
}

TEST_CASE("evaluate: order invariant, clamped, deterministic") {
  auto data = toy_dataset();
  StefNet net(toy_model());
  auto samples = make_windows(data.frames(), data.externals.size(), 2);
  auto a = evaluate(net, data, samples);
  std::vector<Sample> reversed(samples.rbegin(), samples.rend());
  auto b = evaluate(net, data, reversed);
  CHECK(a.mae == doctest::Approx(b.mae).epsilon(1e-12));
  CHECK(a.rmse == doctest::Approx(b.rmse).epsilon(1e-12));
  CHECK(a.count == samples.size() * 16);
  auto again = evaluate(net, data, samples);
  CHECK(again.mae == a.mae);
  for (double v : predict_counts(net, data, samples[0])) CHECK(v >= 0.0);
}

TEST_CASE("train: zero epochs leaves the model unchanged") {
  auto data = toy_dataset();
  StefNet net(toy_model());
  auto before = snapshot(net.parameters());
  auto samples = make_windows(data.frames(), data.externals.size(), 2);
  TrainConfig cfg;
  cfg.epochs = 0;
  auto result = train(net, data, samples, cfg);
  CHECK(result.loss_history.empty());
  CHECK(snapshot(net.parameters()) == before);
}

TEST_CASE("train: small steps on one sample never increase the loss") {
  auto data = toy_dataset();
  StefNet net(toy_model());
  auto samples = make_windows(data.frames(), data.externals.size(), 2);
  std::vector<Sample> one{samples[10]};
  TrainConfig cfg;
  cfg.epochs = 6;
  cfg.learning_rate = 1e-5;
  auto result = train(net, data, one, cfg);
  REQUIRE(result.loss_history.size() == 6);
  for (std::size_t k = 1; k < 6; ++k) CHECK(result.loss_history[k] <= result.loss_history[k - 1]);
}

TEST_CASE("train: bit-reproducible with the same seed") {
  auto data = toy_dataset();
  auto samples = make_windows(data.frames(), data.externals.size(), 2);
  TrainConfig cfg;
  cfg.epochs = 2;
  cfg.batch_size = 4;
  StefNet a(toy_model()), b(toy_model());
  std::vector<EpochStats> seen;
  auto ra = train(a, data, samples, cfg, [&](const EpochStats& s) { seen.push_back(s); });
  auto rb = train(b, data, samples, cfg);
  CHECK(ra.loss_history == rb.loss_history);
  CHECK(a.save_bytes() == b.save_bytes());
  REQUIRE(seen.size() == 2);
  CHECK(seen[1].epoch == 2);
  CHECK(seen[1].loss == ra.loss_history[1]);
  CHECK(seen[0].wall_seconds >= 0.0);

  cfg.seed = 2;
  StefNet c(toy_model());
  train(c, data, samples, cfg);
  CHECK(c.save_bytes() != a.save_bytes());
}

TEST_CASE("train: non-finite loss aborts with diagnostics") {
  auto data = toy_dataset();
  auto samples = make_windows(data.frames(), data.externals.size(), 2);
  StefNet net(toy_model());
  Tensor w = net.parameters().back().tensor;
  w.mutable_data()[0] = std::numeric_limits<double>::quiet_NaN();
  TrainConfig cfg;
  cfg.epochs = 1;
  try {
    train(net, data, samples, cfg);
    FAIL("expected a numeric error");
  } catch (const NumericError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("epoch 1") != std::string::npos);
    CHECK(msg.find("batch 0") != std::string::npos);
    CHECK(msg.find("dense.layer") != std::string::npos);
  }
  CHECK_THROWS_AS(train(net, data, {}, cfg), InputError);
}
