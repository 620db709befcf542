#include <cmath>
#include <numbers>

#include "doctest.h"
#include "stefnet/error.hpp"
#include "stefnet/tensor.hpp"
#include "test_util.hpp"

using namespace stefnet;
using stefnet::testing::probe;
using stefnet::testing::random_tensor;
using stefnet::testing::random_values;

TEST_CASE("elementwise analytic values") {
  CHECK(sigmoid(Tensor::scalar(0.0)).item() == 0.5);
  CHECK(stefnet::tanh(Tensor::scalar(0.0)).item() == 0.0);
  auto e = stefnet::exp(Tensor::from({2}, {0.0, 1.0}));
  CHECK(e.at(0) == 1.0);
  CHECK(e.at(1) == doctest::Approx(std::numbers::e).epsilon(1e-15));
  CHECK(square(Tensor::scalar(-3.0)).item() == 9.0);
  CHECK(relu(Tensor::from({2}, {-1.0, 2.0})).at(0) == 0.0);
  CHECK(clamp_min(Tensor::scalar(1e-9), 1e-6).item() == 1e-6);
}

TEST_CASE("sigmoid is stable for large magnitudes") {
  auto y = sigmoid(Tensor::from({2}, {-800.0, 800.0}));
  CHECK(y.at(0) == 0.0);
  CHECK(y.at(1) == 1.0);
}

TEST_CASE("binary ops broadcast along leading dims") {
  auto a = Tensor::from({2, 3}, {1, 2, 3, 4, 5, 6});
  auto b = Tensor::from({3}, {10, 20, 30});
  auto c = add(a, b);
  CHECK(c.shape() == Shape{2, 3});
  CHECK(c.at(4) == 25.0);
  auto col = Tensor::from({2, 1}, {2, 3});
  auto d = mul(a, col);
  CHECK(d.at(5) == 18.0);
  CHECK_THROWS_AS(add(a, Tensor::from({2}, {1, 2})), DimensionError);
}

TEST_CASE("matmul examples") {
  auto eye = Tensor::from({2, 2}, {1, 0, 0, 1});
  auto m = Tensor::from({2, 2}, {1, 2, 3, 4});
  auto p = matmul(eye, m);
  CHECK(std::vector<double>(p.data().begin(), p.data().end()) == std::vector<double>{1, 2, 3, 4});
  auto sel = matmul(Tensor::from({1, 2}, {1, 0}), Tensor::from({2, 1}, {5, 7}));
  CHECK(sel.item() == 5.0);
  CHECK_THROWS_AS(matmul(Tensor::zeros({2, 3}), Tensor::zeros({2, 3})), DimensionError);
}

TEST_CASE("matmul gradient against central differences") {
  auto a = random_tensor({3, 4}, 1);
  auto b = random_tensor({4, 2}, 2);
  auto r = gradcheck([&] { return probe(matmul(a, b), 3); }, {a, b});
  CHECK(r.max_rel_error < 1e-6);
}

TEST_CASE("conv2d examples") {
  auto ones = Tensor::full({3, 3, 1}, 1.0);
  auto k = Tensor::from({1, 1, 1, 1}, {2.0});
  auto out = conv2d(ones, k, Tensor::zeros({1}));
  for (double v : out.data()) CHECK(v == 2.0);

  // Impulse response of a cross-correlation is the kernel rotated by 180
  // degrees: out[1+a, 1+b] = k[1-a, 1-b].
  auto delta = Tensor::zeros({3, 3, 1});
  delta.mutable_data()[4] = 1.0;
  auto kern = Tensor::from({3, 3, 1, 1}, {1, 2, 3, 4, 5, 6, 7, 8, 9});
  auto resp = conv2d(delta, kern, Tensor::zeros({1}));
  for (std::size_t i = 0; i < 9; ++i) CHECK(resp.at(i) == kern.at(8 - i));

  CHECK_THROWS_AS(conv2d(ones, Tensor::zeros({2, 2, 1, 1}), Tensor::zeros({1})), ConfigError);
  CHECK_THROWS_AS(conv2d(ones, Tensor::zeros({5, 5, 1, 1}), Tensor::zeros({1})), DimensionError);
  CHECK_THROWS_AS(conv2d(ones, Tensor::zeros({3, 3, 2, 1}), Tensor::zeros({1})), DimensionError);
}

TEST_CASE("conv2d with 1x1 identity kernel is the identity map") {
  auto x = random_tensor({5, 4, 3}, 9, false);
  std::vector<double> eye(9, 0.0);
  for (int c = 0; c < 3; ++c) eye[c * 3 + c] = 1.0;
  auto y = conv2d(x, Tensor::from({1, 1, 3, 3}, eye), Tensor::zeros({3}));
  CHECK(std::vector<double>(y.data().begin(), y.data().end()) == std::vector<double>(x.data().begin(), x.data().end()));
}

TEST_CASE("conv2d gradient against central differences") {
  auto x = random_tensor({5, 5, 1}, 4);
  auto k = random_tensor({3, 3, 1, 2}, 5);
  auto b = random_tensor({2}, 6);
  auto r = gradcheck([&] { return probe(conv2d(x, k, b), 7); }, {x, k, b});
  CHECK(r.max_rel_error < 1e-5);
}

TEST_CASE("softmax examples") {
  auto u = softmax(Tensor::zeros({3}), 0);
  for (double v : u.data()) CHECK(v == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
  auto big = softmax(Tensor::from({2}, {1000.0, 1000.0}), 0);
  CHECK(big.at(0) == 0.5);
  CHECK(big.at(1) == 0.5);
  auto q = softmax(Tensor::from({2}, {0.0, std::log(3.0)}), 0);
  CHECK(q.at(0) == doctest::Approx(0.25).epsilon(1e-14));
  CHECK(q.at(1) == doctest::Approx(0.75).epsilon(1e-14));
}

TEST_CASE("softmax rows sum to one") {
  auto x = random_tensor({6, 5}, 11, false, -20.0, 20.0);
  for (std::size_t axis : {0u, 1u}) {
    auto s = sum(softmax(x, axis), axis);
    for (double v : s.data()) CHECK(std::abs(v - 1.0) < 1e-12);
  }
}

TEST_CASE("reduce examples") {
  CHECK(prod(Tensor::from({2}, {0.5, 0.5}), 0).item() == 0.25);
  CHECK(mean(Tensor::from({3}, {2, 4, 6}), 0).item() == 4.0);
  CHECK(sum(Tensor::from({2, 2}, {1, 2, 3, 4}), 1).at(1) == 7.0);

  auto x = Tensor::from({3}, {2.0, 0.0, 5.0}, true);
  auto p = prod(x, 0);
  CHECK(p.item() == 0.0);
  p.backward();
  CHECK(x.grad()[0] == 0.0);
  CHECK(x.grad()[1] == 10.0);
  CHECK(x.grad()[2] == 0.0);
}

TEST_CASE("every primitive passes gradcheck on small random inputs") {
  auto a = random_tensor({4, 3, 2}, 21);
  auto b = random_tensor({4, 3, 2}, 22, true, 0.5, 1.5);
  auto c = random_tensor({3, 2}, 23);
  const std::vector<std::pair<const char*, std::function<Tensor()>>> cases = {
      {"add", [&] { return probe(add(a, c), 1); }},
      {"sub", [&] { return probe(sub(a, b), 2); }},
      {"mul", [&] { return probe(mul(a, c), 3); }},
      {"div", [&] { return probe(div(a, b), 4); }},
      {"neg", [&] { return probe(neg(a), 5); }},
      {"scale", [&] { return probe(scale(a, 1.7), 6); }},
      {"sigmoid", [&] { return probe(sigmoid(a), 7); }},
      {"tanh", [&] { return probe(stefnet::tanh(a), 8); }},
      {"exp", [&] { return probe(stefnet::exp(a), 9); }},
      {"square", [&] { return probe(square(a), 10); }},
      {"relu", [&] { return probe(relu(b), 11); }},
      {"softmax0", [&] { return probe(softmax(a, 0), 12); }},
      {"softmax2", [&] { return probe(softmax(a, 2), 13); }},
      {"sum", [&] { return probe(sum(a, 1), 14); }},
      {"mean", [&] { return probe(mean(a, 0), 15); }},
      {"prod", [&] { return probe(prod(b, 1), 16); }},
      {"reshape", [&] { return probe(reshape(a, {6, 4}), 17); }},
      {"narrow", [&] { return probe(narrow(a, 1, 1, 2), 18); }},
      {"concat", [&] { return probe(concat({a, b}, 2), 19); }},
      {"stack", [&] {
         std::vector<Tensor> parts{a, b};
         return probe(stack(parts), 20);
       }},
  };
  for (const auto& [name, f] : cases) {
    CAPTURE(name);
    auto r = gradcheck(f, {a, b, c});
    CHECK(r.max_rel_error < 1e-5);
  }
}

TEST_CASE("gradcheck: sum of squares matches 2x") {
  auto x = random_tensor({6, 6, 4}, 31);
  auto r = gradcheck([&] { return sum_all(square(x)); }, {x});
  CHECK(r.max_rel_error < 1e-7);
  CHECK(r.checked == 144);
}

TEST_CASE("gradcheck: sigmoid chain of depth 5") {
  auto x = random_tensor({3, 4}, 32, true, -2.0, 2.0);
  auto r = gradcheck(
      [&] {
        Tensor y = x;
        for (int i = 0; i < 5; ++i) y = sigmoid(scale(y, 3.0));
        return probe(y, 33);
      },
      {x});
  CHECK(r.max_rel_error < 1e-5);
}

TEST_CASE("gradcheck rejects non-scalar functions") {
  auto x = random_tensor({2}, 34);
  CHECK_THROWS_AS(gradcheck([&] { return square(x); }, {x}), UsageError);
}

TEST_CASE("backward accumulates and is linear over paths") {
  auto x = random_tensor({3, 3}, 41);
  auto path1 = [&] { return probe(stefnet::tanh(x), 42); };
  auto path2 = [&] { return probe(square(x), 43); };

  x.zero_grad();
  path1().backward();
  std::vector<double> g1(x.grad().begin(), x.grad().end());
  x.zero_grad();
  path2().backward();
  std::vector<double> g2(x.grad().begin(), x.grad().end());
  x.zero_grad();
  add(path1(), path2()).backward();
  for (std::size_t i = 0; i < 9; ++i) CHECK(x.grad()[i] == doctest::Approx(g1[i] + g2[i]).epsilon(1e-14));

  // A second backward without reset adds on top.
  x.zero_grad();
  path1().backward();
  path1().backward();
  for (std::size_t i = 0; i < 9; ++i) CHECK(x.grad()[i] == doctest::Approx(2.0 * g1[i]).epsilon(1e-14));
}

TEST_CASE("graph is traced in topological order") {
  auto x = random_tensor({2, 2}, 51);
  auto y = sigmoid(x);
  auto z = sum_all(mul(y, y));
  auto g = Graph::trace(z);
  const auto names = g.op_names();
  REQUIRE(names.size() == 4);
  CHECK(names.front() == "leaf");
  CHECK(names[1] == "sigmoid");
  CHECK(names.back() == "sum_all");
  CHECK_THROWS_AS(y.backward(), UsageError);
}

TEST_CASE("ops without grad inputs record no history") {
  auto a = Tensor::from({2}, {1, 2});
  auto b = add(a, a);
  CHECK_FALSE(b.requires_grad());
  CHECK(Graph::trace(b).size() == 0);
}

TEST_CASE("identical inputs give bitwise identical outputs") {
  auto run = [] {
    auto x = random_tensor({6, 6, 4}, 61);
    auto k = random_tensor({3, 3, 4, 4}, 62);
    auto b = random_tensor({4}, 63);
    auto y = softmax(stefnet::tanh(conv2d(x, k, b)), 2);
    auto loss = probe(y, 64);
    loss.backward();
    std::vector<double> out(y.data().begin(), y.data().end());
    out.insert(out.end(), k.grad().begin(), k.grad().end());
    return out;
  };
  CHECK(run() == run());
}

TEST_CASE("tensor construction errors") {
  CHECK_THROWS_AS(Tensor::from({2, 2}, {1, 2, 3}), DimensionError);
  CHECK_THROWS_AS(reshape(Tensor::zeros({2, 3}), {4}), DimensionError);
  CHECK_THROWS_AS(narrow(Tensor::zeros({2, 3}), 1, 2, 2), DimensionError);
  CHECK_THROWS_AS(sum(Tensor::zeros({2}), 1), DimensionError);
  auto x = Tensor::zeros({2}, true);
  CHECK_THROWS_AS(sigmoid(x).mutable_data(), UsageError);
}
