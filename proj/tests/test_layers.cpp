#include <algorithm>
#include <cmath>
#include <random>

#include "doctest.h"
#include "stefnet/error.hpp"
#include "stefnet/layers.hpp"
#include "test_util.hpp"

using namespace stefnet;
using stefnet::testing::probe;
using stefnet::testing::random_tensor;
using stefnet::testing::random_values;

namespace {

void fill(Tensor t, double v) {
  auto d = t.mutable_data();
  std::fill(d.begin(), d.end(), v);
}

void assign(Tensor t, const std::vector<double>& values) {
  auto d = t.mutable_data();
  REQUIRE(d.size() == values.size());
  std::copy(values.begin(), values.end(), d.begin());
}

Tensor param(const ParamList& params, const std::string& name) {
  for (const auto& p : params)
    if (p.name == name) return p.tensor;
  FAIL("no parameter " << name);
  return {};
}

bool bitwise_equal(const Tensor& a, const Tensor& b) {
  return a.shape() == b.shape() && std::equal(a.data().begin(), a.data().end(), b.data().begin());
}

}  // namespace

TEST_CASE("convlstm: zero weights and state are a fixed point") {
  std::mt19937_64 rng(1);
  ConvLstmCell cell(1, 3, 3, rng);
  fill(cell.kernel, 0.0);
  fill(cell.bias, 0.0);
  auto next = cell.step(Tensor::zeros({4, 4, 1}), cell.zero_state(4, 4));
  CHECK(next.h.shape() == Shape{4, 4, 3});
  CHECK(next.c.shape() == Shape{4, 4, 3});
  for (double v : next.h.data()) CHECK(v == 0.0);
  for (double v : next.c.data()) CHECK(v == 0.0);
}

TEST_CASE("convlstm: forget bias starts at one") {
  std::mt19937_64 rng(2);
  ConvLstmCell cell(1, 4, 3, rng);
  for (std::size_t k = 4; k < 8; ++k) CHECK(cell.bias.at(k) == 1.0);
}

TEST_CASE("convlstm: recurrence matches the gate equations") {
  std::mt19937_64 rng(3);
  ConvLstmCell cell(1, 2, 3, rng);
  auto x = random_tensor({3, 3, 1}, 4, false);
  LstmState s{random_tensor({3, 3, 2}, 5, false), random_tensor({3, 3, 2}, 6, false)};
  auto next = cell.step(x, s);
  const auto gate_tensor = conv2d(concat({x, s.h}, 2), cell.kernel, cell.bias);
  const auto gates = gate_tensor.data();
  for (std::size_t p = 0; p < 9; ++p) {
    for (std::size_t ch = 0; ch < 2; ++ch) {
      auto g = [&](std::size_t block) { return gates[p * 8 + block * 2 + ch]; };
      auto sig = [](double z) { return 1.0 / (1.0 + std::exp(-z)); };
      const double c = sig(g(1)) * s.c.at(p * 2 + ch) + sig(g(0)) * std::tanh(g(3));
      CHECK(next.c.at(p * 2 + ch) == doctest::Approx(c).epsilon(1e-14));
      CHECK(next.h.at(p * 2 + ch) == doctest::Approx(sig(g(2)) * std::tanh(c)).epsilon(1e-14));
    }
  }
}

TEST_CASE("convlstm: single step gradcheck") {
  std::mt19937_64 rng(7);
  ConvLstmCell cell(1, 2, 3, rng);
  auto x = random_tensor({4, 4, 1}, 8);
  auto h = random_tensor({4, 4, 2}, 9);
  auto c = random_tensor({4, 4, 2}, 10);
  auto r = gradcheck([&] {
    auto next = cell.step(x, {h, c});
    return add(probe(next.h, 11), probe(next.c, 12));
  }, {cell.kernel, cell.bias, x, h, c});
  CHECK(r.max_rel_error < 1e-4);
  CHECK(r.checked == 9 * 3 * 8 + 8 + 16 + 32 + 32);
}

TEST_CASE("convlstm: shape mismatch") {
  std::mt19937_64 rng(1);
  ConvLstmCell cell(1, 2, 3, rng);
  CHECK_THROWS_AS(cell.step(Tensor::zeros({4, 4, 2}), cell.zero_state(4, 4)), DimensionError);
  CHECK_THROWS_AS(cell.step(Tensor::zeros({4, 4, 1}), cell.zero_state(3, 4)), DimensionError);
  CHECK_THROWS_AS(ConvLstmCell(1, 2, 4, rng), ConfigError);
}

TEST_CASE("convlstm: two steps couple in time") {
  std::mt19937_64 rng(13);
  ConvLstmCell cell(1, 2, 3, rng);
  auto x1 = random_tensor({4, 4, 1}, 14, false);
  auto x2 = random_tensor({4, 4, 1}, 15, false);
  auto run = [&](const Tensor& first) { return cell.step(x2, cell.step(first, cell.zero_state(4, 4))).h; };
  auto base = run(x1);
  auto bumped_values = std::vector<double>(x1.data().begin(), x1.data().end());
  bumped_values[5] += 0.5;
  auto bumped = run(Tensor::from({4, 4, 1}, bumped_values));
  CHECK_FALSE(bitwise_equal(base, bumped));
}

TEST_CASE("stacked convlstm: T=1 equals one step plus projection") {
  std::mt19937_64 rng(17);
  StackedConvLstm net(1, 3, 3, true, rng);
  ParamList params;
  net.collect("demand", params);
  auto frame = random_tensor({5, 4, 1}, 18, false);
  auto out = net.forward(reshape(frame, {1, 5, 4, 1}));
  const auto& cell = net.cells()[0];
  auto h = cell.step(frame, cell.zero_state(5, 4)).h;
  auto expected = conv2d(h, param(params, "demand.projection.kernel"), param(params, "demand.projection.bias"));
  CHECK(out.shape() == Shape{1, 5, 4, 1});
  CHECK(std::equal(out.data().begin(), out.data().end(), expected.data().begin()));
}

TEST_CASE("stacked convlstm: output shape and layer wiring") {
  std::mt19937_64 rng(19);
  StackedConvLstm net(3, 4, 3, true, rng);
  CHECK(net.cells().size() == 3);
  CHECK(net.cells()[0].in_channels() == 1);
  CHECK(net.cells()[1].in_channels() == 4);
  CHECK(net.cells()[2].hidden_channels() == 4);
  auto out = net.forward(random_tensor({8, 20, 20, 1}, 20, false, 0.0, 1.0));
  CHECK(out.shape() == Shape{8, 20, 20, 1});
}

TEST_CASE("stacked convlstm: single-channel head has no projection") {
  std::mt19937_64 rng(21);
  StackedConvLstm net(2, 4, 3, false, rng);
  CHECK_FALSE(net.has_projection());
  CHECK(net.cells().back().hidden_channels() == 1);
  CHECK(net.forward(Tensor::zeros({2, 3, 3, 1})).shape() == Shape{2, 3, 3, 1});
}

TEST_CASE("stacked convlstm: empty sequence") {
  std::mt19937_64 rng(22);
  StackedConvLstm net(1, 2, 3, true, rng);
  CHECK_THROWS_AS(net.forward(Tensor::zeros({0, 4, 4, 1})), UsageError);
  CHECK_THROWS_AS(net.forward_steps({}), UsageError);
}

TEST_CASE("stacked convlstm: end-to-end gradcheck on a 2x4x4x1 sequence") {
  std::mt19937_64 rng(23);
  StackedConvLstm net(2, 2, 3, true, rng);
  ParamList params;
  net.collect("demand", params);
  auto seq = random_tensor({2, 4, 4, 1}, 24, true, 0.0, 1.0);
  std::vector<Tensor> wrt{seq};
  for (const auto& p : params) wrt.push_back(p.tensor);
  auto r = gradcheck([&] { return probe(net.forward(seq), 25); }, wrt);
  CHECK(r.max_rel_error < 1e-3);
  CHECK(r.checked == 32 + count_parameters(params));
}

TEST_CASE("fuzzy: centre input gives full activation") {
  std::mt19937_64 rng(30);
  FuzzyLayer layer(3, 5, rng);
  std::vector<double> x(3);
  for (std::size_t i = 0; i < 3; ++i) x[i] = layer.centers.at(i * 5 + 2);
  auto o = layer.forward(Tensor::from({3}, x));
  CHECK(o.shape() == Shape{5});
  CHECK(o.at(2) == 1.0);
}

TEST_CASE("fuzzy: one width away on two inputs gives e^-2") {
  std::mt19937_64 rng(31);
  FuzzyLayer layer(2, 4, rng);
  std::vector<double> x(2);
  for (std::size_t i = 0; i < 2; ++i) x[i] = layer.centers.at(i * 4 + 1) + layer.widths.at(i * 4 + 1);
  auto o = layer.forward(Tensor::from({2}, x));
  CHECK(o.at(1) == doctest::Approx(0.135335).epsilon(1e-6));
  CHECK(o.at(1) == doctest::Approx(std::exp(-2.0)).epsilon(1e-12));
}

TEST_CASE("fuzzy: initial parameters lie in [0,1] with floored widths") {
  std::mt19937_64 rng(32);
  FuzzyLayer layer(24, 400, rng);
  CHECK(layer.centers.shape() == Shape{24, 400});
  for (double v : layer.centers.data()) CHECK((v >= 0.0 && v <= 1.0));
  for (double v : layer.widths.data()) CHECK((v >= FuzzyLayer::kInitWidthFloor && v <= 1.0));
}

TEST_CASE("fuzzy: zero width is clamped") {
  std::mt19937_64 rng(33);
  FuzzyLayer layer(2, 3, rng);
  fill(layer.widths, 0.0);
  assign(layer.centers, {0.5, 0.5, 0.5, 0.5, 0.5, 0.5});
  auto o = layer.forward(Tensor::from({2}, {0.5, 0.5005}));
  for (double v : o.data()) {
    CHECK(std::isfinite(v));
    // (0.0005)^2 / 1e-6 = 0.25
    CHECK(v == doctest::Approx(std::exp(-0.25)).epsilon(1e-12));
  }
}

TEST_CASE("fuzzy: activations lie in (0,1]") {
  std::mt19937_64 rng(34);
  FuzzyLayer layer(4, 50, rng);
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    auto o = layer.forward(random_tensor({4}, 100 + seed, false, 0.0, 1.0));
    for (double v : o.data()) CHECK((v > 0.0 && v <= 1.0));
  }
}

TEST_CASE("fuzzy: moving away from a centre never increases the rule") {
  std::mt19937_64 rng(35);
  FuzzyLayer layer(3, 6, rng);
  auto x = random_values(3, 36, 0.0, 1.0);
  for (std::size_t j = 0; j < 6; ++j) {
    double previous = 2.0;
    for (double offset : {0.0, 0.01, 0.05, 0.1, 0.3, 0.8}) {
      auto moved = x;
      moved[1] = layer.centers.at(1 * 6 + j) + offset;
      const double o = layer.forward(Tensor::from({3}, moved)).at(j);
      CHECK(o <= previous);
      previous = o;
    }
  }
}

TEST_CASE("fuzzy: permuting rule columns permutes activations") {
  std::mt19937_64 rng(37);
  FuzzyLayer layer(3, 4, rng);
  std::mt19937_64 rng2(38);
  FuzzyLayer permuted(3, 4, rng2);
  const std::vector<std::size_t> perm{2, 0, 3, 1};
  std::vector<double> mu(12), delta(12);
  for (std::size_t i = 0; i < 3; ++i) {
    for (std::size_t j = 0; j < 4; ++j) {
      mu[i * 4 + j] = layer.centers.at(i * 4 + perm[j]);
      delta[i * 4 + j] = layer.widths.at(i * 4 + perm[j]);
    }
  }
  assign(permuted.centers, mu);
  assign(permuted.widths, delta);
  auto x = random_tensor({3}, 39, false, 0.0, 1.0);
  auto a = layer.forward(x);
  auto b = permuted.forward(x);
  for (std::size_t j = 0; j < 4; ++j) CHECK(b.at(j) == a.at(perm[j]));
}

TEST_CASE("fuzzy: gradcheck on a 24x400 layer") {
  std::mt19937_64 rng(40);
  FuzzyLayer layer(24, 400, rng);
  // Sit near rule 0 so at least one product is far from underflow.
  std::vector<double> xv(24);
  auto jitter = random_values(24, 41, -0.02, 0.02);
  for (std::size_t i = 0; i < 24; ++i) xv[i] = layer.centers.at(i * 400) + jitter[i];
  auto x = Tensor::from({24}, xv, true);
  REQUIRE(layer.forward(x).at(0) > 1e-3);
  auto r = gradcheck([&] { return probe(layer.forward(x), 42); }, {layer.centers, layer.widths, x});
  CHECK(r.max_rel_error < 1e-4);
  CHECK(r.checked == 2 * 24 * 400 + 24);
}

TEST_CASE("fusion: conv kernel selecting one channel") {
  auto demand = random_tensor({4, 5}, 50, false);
  auto external = random_tensor({4, 5}, 51, false);
  auto kernel = Tensor::zeros({3, 3, 2, 1});
  auto bias = Tensor::zeros({1});
  // Centre tap of channel 0 sits at ((1*3)+1)*2 + 0.
  kernel.mutable_data()[8] = 1.0;
  auto out = fuse_conv(demand, external, kernel, bias);
  CHECK(bitwise_equal(out, demand));
  kernel.mutable_data()[9] = 1.0;
  auto both = fuse_conv(demand, external, kernel, bias);
  for (std::size_t k = 0; k < 20; ++k) CHECK(both.at(k) == demand.at(k) + external.at(k));
}

TEST_CASE("fusion: weighted addition selection and averaging") {
  auto demand = random_tensor({4, 4}, 52, false);
  auto external = random_tensor({4, 4}, 53, false);
  auto ones = Tensor::full({4, 4}, 1.0);
  auto zeros = Tensor::zeros({4, 4});
  CHECK(bitwise_equal(fuse_weighted_addition(demand, external, ones, zeros), demand));
  auto half = Tensor::full({4, 4}, 0.5);
  auto avg = fuse_weighted_addition(demand, external, half, half);
  for (std::size_t k = 0; k < 16; ++k) {
    CHECK(avg.at(k) == doctest::Approx((demand.at(k) + external.at(k)) / 2.0).epsilon(1e-15));
  }
}

TEST_CASE("fusion: weighted addition gradcheck") {
  auto demand = random_tensor({4, 4}, 54);
  auto external = random_tensor({4, 4}, 55);
  auto wd = random_tensor({4, 4}, 56);
  auto we = random_tensor({4, 4}, 57);
  auto r = gradcheck([&] { return probe(fuse_weighted_addition(demand, external, wd, we), 58); },
                     {demand, external, wd, we});
  CHECK(r.max_rel_error < 1e-6);
}

TEST_CASE("fusion: conv gradcheck") {
  std::mt19937_64 rng(59);
  ConvFusion fusion(3, rng);
  auto demand = random_tensor({4, 4}, 60);
  auto external = random_tensor({4, 4}, 61);
  auto r = gradcheck([&] { return probe(fusion.forward(demand, external), 62); },
                     {demand, external, fusion.kernel, fusion.bias});
  CHECK(r.max_rel_error < 1e-4);
}

TEST_CASE("fusion: 1x1 conv equals weighted addition with constant weights") {
  auto demand = random_tensor({5, 3}, 63, false);
  auto external = random_tensor({5, 3}, 64, false);
  auto kernel = Tensor::from({1, 1, 2, 1}, {0.3, -1.7});
  auto conv = fuse_conv(demand, external, kernel, Tensor::zeros({1}));
  auto weighted =
      fuse_weighted_addition(demand, external, Tensor::full({5, 3}, 0.3), Tensor::full({5, 3}, -1.7));
  for (std::size_t k = 0; k < 15; ++k) CHECK(conv.at(k) == doctest::Approx(weighted.at(k)).epsilon(1e-15));
}

TEST_CASE("fusion: parameter counts") {
  std::mt19937_64 rng(65);
  ParamList conv, weighted;
  ConvFusion(3, rng).collect("fusion", conv);
  WeightedAdditionFusion(20, 20, rng).collect("fusion", weighted);
  CHECK(count_parameters(conv) == 19);
  CHECK(count_parameters(weighted) == 800);
}

TEST_CASE("fusion: shape mismatch") {
  auto a = Tensor::zeros({4, 4});
  auto b = Tensor::zeros({4, 3});
  CHECK_THROWS_AS(fuse_conv(a, b, Tensor::zeros({3, 3, 2, 1}), Tensor::zeros({1})), DimensionError);
  CHECK_THROWS_AS(fuse_conv(a, a, Tensor::zeros({3, 3, 1, 1}), Tensor::zeros({1})), DimensionError);
  CHECK_THROWS_AS(fuse_weighted_addition(a, b, a, a), DimensionError);
  CHECK_THROWS_AS(fuse_weighted_addition(a, a, b, a), DimensionError);
}

TEST_CASE("lstm and bilstm gradcheck") {
  std::mt19937_64 rng(70);
  BiLstm bilstm(3, rng);
  std::vector<Tensor> seq{random_tensor({1, 3}, 71), random_tensor({1, 3}, 72), random_tensor({1, 3}, 73)};
  ParamList params;
  bilstm.collect("bilstm", params);
  std::vector<Tensor> wrt(seq);
  for (const auto& p : params) wrt.push_back(p.tensor);
  auto r = gradcheck([&] {
    auto out = bilstm.forward(seq);
    return probe(stack(out), 74);
  }, wrt);
  CHECK(r.max_rel_error < 1e-4);
  CHECK(count_parameters(params) == 2 * (6 * 12 + 12));
}

TEST_CASE("bilstm: directions read the sequence in opposite orders") {
  std::mt19937_64 rng(75);
  BiLstm bilstm(2, rng);
  std::vector<Tensor> seq{random_tensor({1, 2}, 76, false), random_tensor({1, 2}, 77, false)};
  auto out = bilstm.forward(seq);
  auto f0 = bilstm.forward_lstm.step(seq[0], bilstm.forward_lstm.zero_state());
  auto b1 = bilstm.backward_lstm.step(seq[1], bilstm.backward_lstm.zero_state());
  auto b0 = bilstm.backward_lstm.step(seq[0], b1);
  for (std::size_t k = 0; k < 2; ++k) CHECK(out[0].at(k) == f0.h.at(k) + b0.h.at(k));
}

TEST_CASE("attention: single step has weight one") {
  std::mt19937_64 rng(80);
  BiLstm bilstm(4, rng);
  TemporalAttention attention(1, rng);
  std::vector<Tensor> fused{random_tensor({1, 4}, 81, false)};
  auto out = bilstm_attend(bilstm, &attention, fused);
  auto h1 = bilstm.forward(fused)[0];
  for (std::size_t g = 0; g < 4; ++g) {
    CHECK(out.weights.at(g) == 1.0);
    CHECK(out.context.at(g) == h1.at(g));
  }
}

TEST_CASE("attention: constant hidden states with zero scores are uniform") {
  std::mt19937_64 rng(82);
  TemporalAttention attention(4, rng);
  fill(attention.score, 0.0);
  std::vector<double> h;
  auto row = random_values(6, 83);
  for (int t = 0; t < 4; ++t) h.insert(h.end(), row.begin(), row.end());
  auto out = attention.forward(Tensor::from({4, 6}, h));
  for (double w : out.weights.data()) CHECK(w == doctest::Approx(0.25).epsilon(1e-15));
  for (std::size_t g = 0; g < 6; ++g) CHECK(out.context.at(g) == doctest::Approx(row[g]).epsilon(1e-14));
}

TEST_CASE("attention: weights form a distribution over time per cell") {
  std::mt19937_64 rng(84);
  BiLstm bilstm(9, rng);
  TemporalAttention attention(5, rng);
  std::vector<Tensor> fused;
  for (int t = 0; t < 5; ++t) fused.push_back(random_tensor({1, 9}, 85 + t, false));
  auto out = bilstm_attend(bilstm, &attention, fused);
  REQUIRE(out.weights.shape() == Shape{5, 9});
  auto hs = bilstm.forward(fused);
  for (std::size_t g = 0; g < 9; ++g) {
    double total = 0.0, lo = 1e300, hi = -1e300;
    for (std::size_t t = 0; t < 5; ++t) {
      const double w = out.weights.at(t * 9 + g);
      CHECK(w >= 0.0);
      total += w;
      lo = std::min(lo, hs[t].at(g));
      hi = std::max(hi, hs[t].at(g));
    }
    CHECK(std::abs(total - 1.0) < 1e-9);
    // Convex combination over t stays inside the hull of the hidden values.
    CHECK(out.context.at(g) >= lo - 1e-12);
    CHECK(out.context.at(g) <= hi + 1e-12);
  }
}

TEST_CASE("attention: disabled head averages over time") {
  std::mt19937_64 rng(90);
  BiLstm bilstm(3, rng);
  std::vector<Tensor> fused{random_tensor({1, 3}, 91, false), random_tensor({1, 3}, 92, false)};
  auto out = bilstm_attend(bilstm, nullptr, fused);
  CHECK_FALSE(out.weights.defined());
  auto hs = bilstm.forward(fused);
  for (std::size_t g = 0; g < 3; ++g) {
    CHECK(out.context.at(g) == doctest::Approx((hs[0].at(g) + hs[1].at(g)) / 2.0).epsilon(1e-15));
  }
}

TEST_CASE("attention: gradcheck through bilstm and scores") {
  std::mt19937_64 rng(93);
  BiLstm bilstm(4, rng);
  TemporalAttention attention(3, rng);
  std::vector<Tensor> fused{random_tensor({1, 4}, 94), random_tensor({1, 4}, 95), random_tensor({1, 4}, 96)};
  std::vector<Tensor> wrt(fused);
  wrt.push_back(attention.score);
  auto r = gradcheck([&] { return probe(bilstm_attend(bilstm, &attention, fused).context, 97); }, wrt);
  CHECK(r.max_rel_error < 1e-4);
}

TEST_CASE("dense: zero parameters give a zero map") {
  std::mt19937_64 rng(100);
  DenseStack dense(400, {100, 200, 400}, rng);
  for (auto& w : dense.weights) fill(w, 0.0);
  for (auto& b : dense.biases) fill(b, 0.0);
  auto out = reshape(dense.forward(random_tensor({1, 400}, 101, false)), {20, 20});
  CHECK(out.shape() == Shape{20, 20});
  for (double v : out.data()) CHECK(v == 0.0);
}

TEST_CASE("dense: hidden layers rectify, last layer is linear") {
  std::mt19937_64 rng(102);
  DenseStack dense(2, {2, 1}, rng);
  assign(dense.weights[0], {1.0, 0.0, 0.0, 1.0});
  assign(dense.biases[0], {0.0, 0.0});
  assign(dense.weights[1], {1.0, 1.0});
  assign(dense.biases[1], {-5.0});
  CHECK(dense.forward(Tensor::from({1, 2}, {-3.0, 2.0})).item() == -3.0);
}

TEST_CASE("dense: gradcheck through the stack") {
  std::mt19937_64 rng(103);
  DenseStack dense(6, {5, 4, 6}, rng);
  auto x = random_tensor({1, 6}, 104);
  ParamList params;
  dense.collect("dense", params);
  std::vector<Tensor> wrt{x};
  for (const auto& p : params) wrt.push_back(p.tensor);
  auto r = gradcheck([&] { return probe(dense.forward(x), 105); }, wrt);
  CHECK(r.max_rel_error < 1e-4);
}
