#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>

#include "stefnet/error.hpp"
#include "stefnet/kernels.hpp"
#include "stefnet/tensor.hpp"

namespace stefnet {
namespace {

using detail::Node;
using NodePtr = std::shared_ptr<Node>;

// Gradient buffer of an input, or nullptr when it does not need one.
double* grad_of(const NodePtr& n) {
  if (!n->requires_grad) return nullptr;
  n->ensure_grad();
  return n->grad.data();
}

Tensor make_result(Shape shape, std::vector<double> value, const char* op, std::vector<NodePtr> inputs,
                   std::function<void(Node&)> backward) {
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->value = std::move(value);
  node->op = op;
  const bool needs = std::any_of(inputs.begin(), inputs.end(), [](const NodePtr& n) { return n->requires_grad; });
  if (needs) {
    node->requires_grad = true;
    node->inputs = std::move(inputs);
    node->backward = std::move(backward);
  }
  return Tensor(std::move(node));
}

// Splits a shape around `axis` into (outer, axis length, inner).
struct AxisSplit {
  std::size_t outer = 1, length = 1, inner = 1;
};

AxisSplit split_axis(const Shape& shape, std::size_t axis, const char* op) {
  if (axis >= shape.size()) {
    throw DimensionError(std::string(op) + ": axis " + std::to_string(axis) + " out of range for " + shape_str(shape));
  }
  AxisSplit s;
  for (std::size_t i = 0; i < axis; ++i) s.outer *= shape[i];
  s.length = shape[axis];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) s.inner *= shape[i];
  return s;
}

Shape without_axis(const Shape& shape, std::size_t axis) {
  Shape out = shape;
  out.erase(out.begin() + static_cast<std::ptrdiff_t>(axis));
  return out;
}

// ---- broadcasting ------------------------------------------------------------

struct Broadcast {
  Shape shape;
  bool same = true;
  // Flat source index for each output element; only filled when !same.
  std::vector<std::size_t> a_index, b_index;
};

std::shared_ptr<Broadcast> broadcast(const Shape& a, const Shape& b, const char* op) {
  auto bc = std::make_shared<Broadcast>();
  if (a == b) {
    bc->shape = a;
    return bc;
  }
  bc->same = false;
  const std::size_t rank = std::max(a.size(), b.size());
  Shape pa(rank, 1), pb(rank, 1);
  std::copy(a.begin(), a.end(), pa.begin() + static_cast<std::ptrdiff_t>(rank - a.size()));
  std::copy(b.begin(), b.end(), pb.begin() + static_cast<std::ptrdiff_t>(rank - b.size()));
  bc->shape.resize(rank);
  for (std::size_t i = 0; i < rank; ++i) {
    if (pa[i] != pb[i] && pa[i] != 1 && pb[i] != 1) {
      throw DimensionError(std::string(op) + ": shapes " + shape_str(a) + " and " + shape_str(b) +
                           " are not broadcastable");
    }
    bc->shape[i] = std::max(pa[i], pb[i]);
  }
  // Strides with zero on broadcast dimensions.
  std::vector<std::size_t> sa(rank, 0), sb(rank, 0);
  std::size_t ra = 1, rb = 1;
  for (std::size_t i = rank; i-- > 0;) {
    sa[i] = pa[i] == 1 ? 0 : ra;
    sb[i] = pb[i] == 1 ? 0 : rb;
    ra *= pa[i];
    rb *= pb[i];
  }
  const std::size_t n = shape_numel(bc->shape);
  bc->a_index.resize(n);
  bc->b_index.resize(n);
  std::vector<std::size_t> idx(rank, 0);
  for (std::size_t e = 0; e < n; ++e) {
    std::size_t ia = 0, ib = 0;
    for (std::size_t d = 0; d < rank; ++d) {
      ia += idx[d] * sa[d];
      ib += idx[d] * sb[d];
    }
    bc->a_index[e] = ia;
    bc->b_index[e] = ib;
    for (std::size_t d = rank; d-- > 0;) {
      if (++idx[d] < bc->shape[d]) break;
      idx[d] = 0;
    }
  }
  return bc;
}

// Forward: out[e] = fwd(a, b). Backward: ga += g * da(a, b), gb += g * db(a, b).
template <typename Fwd, typename Da, typename Db>
Tensor binary(const Tensor& a, const Tensor& b, const char* op, Fwd fwd, Da da, Db db) {
  auto bc = broadcast(a.shape(), b.shape(), op);
  const std::size_t n = shape_numel(bc->shape);
  std::vector<double> out(n);
  const auto av = a.data();
  const auto bv = b.data();
  if (bc->same) {
    for (std::size_t e = 0; e < n; ++e) out[e] = fwd(av[e], bv[e]);
  } else {
    for (std::size_t e = 0; e < n; ++e) out[e] = fwd(av[bc->a_index[e]], bv[bc->b_index[e]]);
  }
  return make_result(bc->shape, std::move(out), op, {a.node(), b.node()}, [bc, da, db](Node& self) {
    const NodePtr& an = self.inputs[0];
    const NodePtr& bn = self.inputs[1];
    double* ga = grad_of(an);
    double* gb = grad_of(bn);
    const auto& g = self.grad;
    const auto& x = an->value;
    const auto& y = bn->value;
    const std::size_t n = g.size();
    for (std::size_t e = 0; e < n; ++e) {
      const std::size_t ia = bc->same ? e : bc->a_index[e];
      const std::size_t ib = bc->same ? e : bc->b_index[e];
      if (ga) ga[ia] += g[e] * da(x[ia], y[ib]);
      if (gb) gb[ib] += g[e] * db(x[ia], y[ib]);
    }
  });
}

// Backward receives (input value, output value) and returns d out / d in.
template <typename Fwd, typename Deriv>
Tensor unary(const Tensor& x, const char* op, Fwd fwd, Deriv deriv) {
  const auto xv = x.data();
  std::vector<double> out(xv.size());
  for (std::size_t i = 0; i < xv.size(); ++i) out[i] = fwd(xv[i]);
  return make_result(x.shape(), std::move(out), op, {x.node()}, [deriv](Node& self) {
    const NodePtr& in = self.inputs[0];
    double* gx = grad_of(in);
    const auto& g = self.grad;
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * deriv(in->value[i], self.value[i]);
  });
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  return binary(
      a, b, "add", [](double x, double y) { return x + y; }, [](double, double) { return 1.0; },
      [](double, double) { return 1.0; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary(
      a, b, "sub", [](double x, double y) { return x - y; }, [](double, double) { return 1.0; },
      [](double, double) { return -1.0; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return binary(
      a, b, "mul", [](double x, double y) { return x * y; }, [](double, double y) { return y; },
      [](double x, double) { return x; });
}

Tensor div(const Tensor& a, const Tensor& b) {
  return binary(
      a, b, "div", [](double x, double y) { return x / y; }, [](double, double y) { return 1.0 / y; },
      [](double x, double y) { return -x / (y * y); });
}

Tensor neg(const Tensor& x) {
  return unary(x, "neg", [](double v) { return -v; }, [](double, double) { return -1.0; });
}

Tensor scale(const Tensor& x, double factor) {
  return unary(
      x, "scale", [factor](double v) { return v * factor; }, [factor](double, double) { return factor; });
}

Tensor sigmoid(const Tensor& x) {
  return unary(
      x, "sigmoid",
      [](double v) {
        if (v >= 0) return 1.0 / (1.0 + std::exp(-v));
        const double e = std::exp(v);
        return e / (1.0 + e);
      },
      [](double, double y) { return y * (1.0 - y); });
}

Tensor tanh(const Tensor& x) {
  return unary(x, "tanh", [](double v) { return std::tanh(v); }, [](double, double y) { return 1.0 - y * y; });
}

Tensor exp(const Tensor& x) {
  return unary(x, "exp", [](double v) { return std::exp(v); }, [](double, double y) { return y; });
}

Tensor square(const Tensor& x) {
  return unary(x, "square", [](double v) { return v * v; }, [](double v, double) { return 2.0 * v; });
}

Tensor relu(const Tensor& x) {
  return unary(
      x, "relu", [](double v) { return v > 0.0 ? v : 0.0; }, [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

Tensor clamp_min(const Tensor& x, double floor) {
  return unary(
      x, "clamp_min", [floor](double v) { return v > floor ? v : floor; },
      [floor](double v, double) { return v > floor ? 1.0 : 0.0; });
}

// ---- linear algebra -----------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2) {
    throw DimensionError("matmul: expected matrices, got " + shape_str(a.shape()) + " and " + shape_str(b.shape()));
  }
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  if (b.dim(0) != k) {
    throw DimensionError("matmul: inner dimensions differ, " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
  }
  std::vector<double> out(m * n);
  kernels::parallel::matmul(a.data(), b.data(), out, m, k, n);
  return make_result({m, n}, std::move(out), "matmul", {a.node(), b.node()}, [m, k, n](Node& self) {
    const NodePtr& an = self.inputs[0];
    const NodePtr& bn = self.inputs[1];
    if (double* ga = grad_of(an)) kernels::parallel::matmul_grad_a(self.grad, bn->value, {ga, m * k}, m, k, n);
    if (double* gb = grad_of(bn)) kernels::parallel::matmul_grad_b(an->value, self.grad, {gb, k * n}, m, k, n);
  });
}

Tensor conv2d(const Tensor& input, const Tensor& kernel, const Tensor& bias) {
  if (input.rank() != 3 || kernel.rank() != 4 || bias.rank() != 1) {
    throw DimensionError("conv2d: expected input [W,H,Cin], kernel [kw,kh,Cin,Cout], bias [Cout]; got " +
                         shape_str(input.shape()) + ", " + shape_str(kernel.shape()) + ", " +
                         shape_str(bias.shape()));
  }
  kernels::ConvShape s;
  s.width = input.dim(0);
  s.height = input.dim(1);
  s.in_channels = input.dim(2);
  s.kernel_w = kernel.dim(0);
  s.kernel_h = kernel.dim(1);
  s.out_channels = kernel.dim(3);
  if (s.kernel_w % 2 == 0 || s.kernel_h % 2 == 0) {
    throw ConfigError("conv2d: same padding needs odd kernel sides, got " + shape_str(kernel.shape()));
  }
  if (kernel.dim(2) != s.in_channels || bias.dim(0) != s.out_channels) {
    throw DimensionError("conv2d: channel mismatch between input " + shape_str(input.shape()) + ", kernel " +
                         shape_str(kernel.shape()) + " and bias " + shape_str(bias.shape()));
  }
  if (s.kernel_w > s.width || s.kernel_h > s.height) {
    throw DimensionError("conv2d: kernel " + shape_str(kernel.shape()) + " larger than input " +
                         shape_str(input.shape()));
  }
  std::vector<double> out(s.width * s.height * s.out_channels);
  kernels::parallel::conv2d(input.data(), kernel.data(), bias.data(), out, s);
  return make_result({s.width, s.height, s.out_channels}, std::move(out), "conv2d",
                     {input.node(), kernel.node(), bias.node()}, [s](Node& self) {
                       const NodePtr& in = self.inputs[0];
                       const NodePtr& kn = self.inputs[1];
                       const NodePtr& bn = self.inputs[2];
                       if (double* gi = grad_of(in))
                         kernels::parallel::conv2d_grad_input(self.grad, kn->value, {gi, in->value.size()}, s);
                       if (double* gk = grad_of(kn))
                         kernels::parallel::conv2d_grad_kernel(in->value, self.grad, {gk, kn->value.size()}, s);
                       if (double* gb = grad_of(bn))
                         kernels::parallel::conv2d_grad_bias(self.grad, {gb, bn->value.size()}, s);
                     });
}

// ---- reductions ---------------------------------------------------------------

Tensor softmax(const Tensor& x, std::size_t axis) {
  const auto sp = split_axis(x.shape(), axis, "softmax");
  const auto xv = x.data();
  std::vector<double> out(xv.size());
  for (std::size_t o = 0; o < sp.outer; ++o) {
    for (std::size_t i = 0; i < sp.inner; ++i) {
      const std::size_t base = o * sp.length * sp.inner + i;
      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t l = 0; l < sp.length; ++l) mx = std::max(mx, xv[base + l * sp.inner]);
      double total = 0.0;
      for (std::size_t l = 0; l < sp.length; ++l) {
        const double e = std::exp(xv[base + l * sp.inner] - mx);
        out[base + l * sp.inner] = e;
        total += e;
      }
      for (std::size_t l = 0; l < sp.length; ++l) out[base + l * sp.inner] /= total;
    }
  }
  return make_result(x.shape(), std::move(out), "softmax", {x.node()}, [sp](Node& self) {
    double* gx = grad_of(self.inputs[0]);
    const auto& y = self.value;
    const auto& g = self.grad;
    for (std::size_t o = 0; o < sp.outer; ++o) {
      for (std::size_t i = 0; i < sp.inner; ++i) {
        const std::size_t base = o * sp.length * sp.inner + i;
        double dot = 0.0;
        for (std::size_t l = 0; l < sp.length; ++l) dot += g[base + l * sp.inner] * y[base + l * sp.inner];
        for (std::size_t l = 0; l < sp.length; ++l) {
          const std::size_t e = base + l * sp.inner;
          gx[e] += y[e] * (g[e] - dot);
        }
      }
    }
  });
}

namespace {

Tensor sum_or_mean(const Tensor& x, std::size_t axis, bool average) {
  const char* op = average ? "mean" : "sum";
  const auto sp = split_axis(x.shape(), axis, op);
  const double factor = average ? 1.0 / static_cast<double>(sp.length) : 1.0;
  const auto xv = x.data();
  std::vector<double> out(sp.outer * sp.inner, 0.0);
  for (std::size_t o = 0; o < sp.outer; ++o)
    for (std::size_t l = 0; l < sp.length; ++l)
      for (std::size_t i = 0; i < sp.inner; ++i) out[o * sp.inner + i] += xv[(o * sp.length + l) * sp.inner + i];
  if (average)
    for (auto& v : out) v *= factor;
  return make_result(without_axis(x.shape(), axis), std::move(out), op, {x.node()}, [sp, factor](Node& self) {
    double* gx = grad_of(self.inputs[0]);
    const auto& g = self.grad;
    for (std::size_t o = 0; o < sp.outer; ++o)
      for (std::size_t l = 0; l < sp.length; ++l)
        for (std::size_t i = 0; i < sp.inner; ++i) gx[(o * sp.length + l) * sp.inner + i] += g[o * sp.inner + i] * factor;
  });
}

}  // namespace

Tensor sum(const Tensor& x, std::size_t axis) { return sum_or_mean(x, axis, false); }
Tensor mean(const Tensor& x, std::size_t axis) { return sum_or_mean(x, axis, true); }

Tensor prod(const Tensor& x, std::size_t axis) {
  const auto sp = split_axis(x.shape(), axis, "prod");
  const auto xv = x.data();
  std::vector<double> out(sp.outer * sp.inner, 1.0);
  for (std::size_t o = 0; o < sp.outer; ++o)
    for (std::size_t l = 0; l < sp.length; ++l)
      for (std::size_t i = 0; i < sp.inner; ++i) out[o * sp.inner + i] *= xv[(o * sp.length + l) * sp.inner + i];
  return make_result(without_axis(x.shape(), axis), std::move(out), "prod", {x.node()}, [sp](Node& self) {
    const NodePtr& in = self.inputs[0];
    double* gx = grad_of(in);
    const auto& v = in->value;
    const auto& g = self.grad;
    // Product of all other factors via prefix/suffix products, exact with zeros.
    std::vector<double> suffix(sp.length + 1);
    for (std::size_t o = 0; o < sp.outer; ++o) {
      for (std::size_t i = 0; i < sp.inner; ++i) {
        const auto at = [&](std::size_t l) { return (o * sp.length + l) * sp.inner + i; };
        suffix[sp.length] = 1.0;
        for (std::size_t l = sp.length; l-- > 0;) suffix[l] = suffix[l + 1] * v[at(l)];
        double prefix = 1.0;
        const double up = g[o * sp.inner + i];
        for (std::size_t l = 0; l < sp.length; ++l) {
          gx[at(l)] += up * prefix * suffix[l + 1];
          prefix *= v[at(l)];
        }
      }
    }
  });
}

Tensor sum_all(const Tensor& x) {
  double total = 0.0;
  for (double v : x.data()) total += v;
  return make_result({}, {total}, "sum_all", {x.node()}, [](Node& self) {
    double* gx = grad_of(self.inputs[0]);
    const double g = self.grad[0];
    for (std::size_t i = 0; i < self.inputs[0]->value.size(); ++i) gx[i] += g;
  });
}

// ---- shape ---------------------------------------------------------------------

Tensor reshape(const Tensor& x, Shape shape) {
  if (shape_numel(shape) != x.numel()) {
    throw DimensionError("reshape: cannot view " + shape_str(x.shape()) + " as " + shape_str(shape));
  }
  std::vector<double> out(x.data().begin(), x.data().end());
  return make_result(std::move(shape), std::move(out), "reshape", {x.node()}, [](Node& self) {
    double* gx = grad_of(self.inputs[0]);
    for (std::size_t i = 0; i < self.grad.size(); ++i) gx[i] += self.grad[i];
  });
}

Tensor narrow(const Tensor& x, std::size_t axis, std::size_t start, std::size_t length) {
  const auto sp = split_axis(x.shape(), axis, "narrow");
  if (start + length > sp.length) {
    throw DimensionError("narrow: range [" + std::to_string(start) + ", " + std::to_string(start + length) +
                         ") exceeds axis " + std::to_string(axis) + " of " + shape_str(x.shape()));
  }
  Shape shape = x.shape();
  shape[axis] = length;
  const auto xv = x.data();
  std::vector<double> out(sp.outer * length * sp.inner);
  const std::size_t chunk = length * sp.inner;
  for (std::size_t o = 0; o < sp.outer; ++o) {
    const auto src = xv.begin() + static_cast<std::ptrdiff_t>((o * sp.length + start) * sp.inner);
    std::copy(src, src + static_cast<std::ptrdiff_t>(chunk), out.begin() + static_cast<std::ptrdiff_t>(o * chunk));
  }
  return make_result(std::move(shape), std::move(out), "narrow", {x.node()}, [sp, start, chunk](Node& self) {
    double* gx = grad_of(self.inputs[0]);
    for (std::size_t o = 0; o < sp.outer; ++o) {
      double* dst = gx + (o * sp.length + start) * sp.inner;
      const double* g = self.grad.data() + o * chunk;
      for (std::size_t i = 0; i < chunk; ++i) dst[i] += g[i];
    }
  });
}

Tensor concat(std::span<const Tensor> parts, std::size_t axis) {
  if (parts.empty()) throw UsageError("concat: no tensors");
  const Shape& first = parts[0].shape();
  if (axis >= first.size()) throw DimensionError("concat: axis out of range for " + shape_str(first));
  Shape shape = first;
  shape[axis] = 0;
  std::vector<std::size_t> lengths;
  for (const auto& p : parts) {
    const Shape& s = p.shape();
    bool ok = s.size() == first.size();
    for (std::size_t d = 0; ok && d < s.size(); ++d) ok = d == axis || s[d] == first[d];
    if (!ok) throw DimensionError("concat: " + shape_str(s) + " does not match " + shape_str(first));
    shape[axis] += s[axis];
    lengths.push_back(s[axis]);
  }
  const auto sp = split_axis(shape, axis, "concat");
  std::vector<double> out(shape_numel(shape));
  std::vector<NodePtr> inputs;
  std::size_t offset = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const auto v = parts[k].data();
    const std::size_t chunk = lengths[k] * sp.inner;
    for (std::size_t o = 0; o < sp.outer; ++o) {
      std::copy(v.begin() + static_cast<std::ptrdiff_t>(o * chunk), v.begin() + static_cast<std::ptrdiff_t>((o + 1) * chunk),
                out.begin() + static_cast<std::ptrdiff_t>((o * sp.length + offset) * sp.inner));
    }
    offset += lengths[k];
    inputs.push_back(parts[k].node());
  }
  return make_result(std::move(shape), std::move(out), "concat", std::move(inputs), [sp, lengths](Node& self) {
    std::size_t offset = 0;
    for (std::size_t k = 0; k < self.inputs.size(); ++k) {
      const std::size_t chunk = lengths[k] * sp.inner;
      if (double* gx = grad_of(self.inputs[k])) {
        for (std::size_t o = 0; o < sp.outer; ++o) {
          const double* g = self.grad.data() + (o * sp.length + offset) * sp.inner;
          for (std::size_t i = 0; i < chunk; ++i) gx[o * chunk + i] += g[i];
        }
      }
      offset += lengths[k];
    }
  });
}

Tensor concat(std::initializer_list<Tensor> parts, std::size_t axis) {
  return concat(std::span<const Tensor>(parts.begin(), parts.size()), axis);
}

Tensor stack(std::span<const Tensor> parts) {
  if (parts.empty()) throw UsageError("stack: no tensors");
  std::vector<Tensor> lifted;
  lifted.reserve(parts.size());
  for (const auto& p : parts) {
    if (p.shape() != parts[0].shape()) {
      throw DimensionError("stack: " + shape_str(p.shape()) + " does not match " + shape_str(parts[0].shape()));
    }
    Shape s = p.shape();
    s.insert(s.begin(), 1);
    lifted.push_back(reshape(p, std::move(s)));
  }
  return concat(lifted, 0);
}

}  // namespace stefnet
