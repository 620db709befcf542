#pragma once

// Dense 64-bit tensor with define-by-run reverse-mode differentiation.
//
// A Tensor is a cheap handle onto a shared graph node. Every op builds a new
// node that records its inputs and a backward closure; backward() traces the
// nodes reachable from a scalar root, orders them topologically and runs the
// closures in exact reverse order. Gradients accumulate (+=) into every node
// that requires them and are only cleared by zero_grad().

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace stefnet {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

namespace detail {

struct Node {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;  // empty until first needed
  bool requires_grad = false;
  const char* op = "leaf";
  std::vector<std::shared_ptr<Node>> inputs;
  // Reads this node's grad and accumulates into the inputs' grads.
  std::function<void(Node&)> backward;

  void ensure_grad() {
    if (grad.empty()) grad.assign(value.size(), 0.0);
  }
};

}  // namespace detail

class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<double> values, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  std::size_t dim(std::size_t axis) const { return node_->shape.at(axis); }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t numel() const { return node_->value.size(); }

  std::span<const double> data() const { return node_->value; }
  // Writable storage, leaves only (parameters and inputs).
  std::span<double> mutable_data();
  double item() const;
  double at(std::size_t flat_index) const { return node_->value.at(flat_index); }

  bool requires_grad() const { return node_->requires_grad; }
  bool is_leaf() const { return node_->backward == nullptr; }
  bool has_grad() const { return !node_->grad.empty(); }
  std::span<const double> grad() const { return node_->grad; }
  std::span<double> mutable_grad();
  void zero_grad();

  // Seeds d(this)/d(this) = 1. Scalar tensors only.
  void backward() const;

  // Same values, no graph history.
  Tensor detach() const;

  const char* op_name() const { return node_->op; }
  const std::shared_ptr<detail::Node>& node() const { return node_; }
  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}

 private:
  std::shared_ptr<detail::Node> node_;
};

// Topologically ordered view of the graph reachable from a root.
class Graph {
 public:
  static Graph trace(const Tensor& root);

  std::size_t size() const { return order_.size(); }
  // Inputs appear before the ops that consume them.
  const std::vector<detail::Node*>& order() const { return order_; }
  std::vector<std::string> op_names() const;

 private:
  std::vector<detail::Node*> order_;
};

// ---- elementwise -----------------------------------------------------------
// Binary ops broadcast numpy-style: shapes are right-aligned and each pair of
// dimensions must match or one of them must be 1.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);

Tensor neg(const Tensor& x);
Tensor scale(const Tensor& x, double factor);
Tensor sigmoid(const Tensor& x);
Tensor tanh(const Tensor& x);
Tensor exp(const Tensor& x);
Tensor square(const Tensor& x);
Tensor relu(const Tensor& x);
// max(x, floor); gradient passes only where x > floor.
Tensor clamp_min(const Tensor& x, double floor);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator/(const Tensor& a, const Tensor& b) { return div(a, b); }

// ---- linear algebra ----------------------------------------------------------
Tensor matmul(const Tensor& a, const Tensor& b);

// Same-padded cross-correlation. input [W,H,Cin], kernel [kw,kh,Cin,Cout],
// bias [Cout] -> [W,H,Cout]. Kernel sides must be odd.
Tensor conv2d(const Tensor& input, const Tensor& kernel, const Tensor& bias);

// ---- reductions ----------------------------------------------------------------
Tensor softmax(const Tensor& x, std::size_t axis);
Tensor sum(const Tensor& x, std::size_t axis);
Tensor mean(const Tensor& x, std::size_t axis);
Tensor prod(const Tensor& x, std::size_t axis);
Tensor sum_all(const Tensor& x);

// ---- shape -----------------------------------------------------------------------
Tensor reshape(const Tensor& x, Shape shape);
// Slice [start, start+length) along one axis.
Tensor narrow(const Tensor& x, std::size_t axis, std::size_t start, std::size_t length);
Tensor concat(std::span<const Tensor> parts, std::size_t axis);
Tensor concat(std::initializer_list<Tensor> parts, std::size_t axis);
// Stack equally shaped tensors along a new leading axis.
Tensor stack(std::span<const Tensor> parts);

// ---- verification ----------------------------------------------------------------

struct GradcheckResult {
  double max_rel_error = 0.0;
  std::size_t checked = 0;
  // Location of the worst component.
  std::size_t worst_tensor = 0;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
};

// Compares backward() gradients of the scalar function f with respect to
// every element of `wrt` against central differences
// (f(x+eps) - f(x-eps)) / (2 eps). Relative error per component is
// |a-b| / max(|a|, |b|, 1e-8). The tensors in `wrt` must be leaves; they are
// perturbed in place and restored.
GradcheckResult gradcheck(const std::function<Tensor()>& f, std::span<const Tensor> wrt,
                          double eps = 1e-4);
GradcheckResult gradcheck(const std::function<Tensor()>& f, std::initializer_list<Tensor> wrt,
                          double eps = 1e-4);

}  // namespace stefnet
