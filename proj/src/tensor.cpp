#include "stefnet/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <unordered_set>

#include "stefnet/error.hpp"

namespace stefnet {

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) { return full(std::move(shape), 0.0, requires_grad); }

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  const auto n = shape_numel(shape);
  return from(std::move(shape), std::vector<double>(n, value), requires_grad);
}

Tensor Tensor::from(Shape shape, std::vector<double> values, bool requires_grad) {
  if (shape_numel(shape) != values.size()) {
    throw DimensionError("tensor shape " + shape_str(shape) + " does not hold " +
                         std::to_string(values.size()) + " values");
  }
  auto node = std::make_shared<detail::Node>();
  node->shape = std::move(shape);
  node->value = std::move(values);
  node->requires_grad = requires_grad;
  return Tensor(std::move(node));
}

Tensor Tensor::scalar(double value, bool requires_grad) { return from({}, {value}, requires_grad); }

std::span<double> Tensor::mutable_data() {
  if (!is_leaf()) throw UsageError("mutable_data() on a non-leaf tensor (op " + std::string(op_name()) + ")");
  return node_->value;
}

double Tensor::item() const {
  if (numel() != 1) throw UsageError("item() on tensor of shape " + shape_str(shape()));
  return node_->value[0];
}

std::span<double> Tensor::mutable_grad() {
  node_->ensure_grad();
  return node_->grad;
}

void Tensor::zero_grad() {
  if (!node_->grad.empty()) std::fill(node_->grad.begin(), node_->grad.end(), 0.0);
}

Tensor Tensor::detach() const { return from(shape(), node_->value, false); }

Graph Graph::trace(const Tensor& root) {
  Graph g;
  if (!root.defined() || !root.requires_grad()) return g;
  // Iterative post-order DFS; post-order is a valid topological order.
  std::unordered_set<const detail::Node*> visited;
  std::vector<std::pair<detail::Node*, std::size_t>> stack;
  stack.emplace_back(root.node().get(), 0);
  visited.insert(root.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->inputs.size()) {
      detail::Node* child = node->inputs[next++].get();
      if (child->requires_grad && visited.insert(child).second) stack.emplace_back(child, 0);
      continue;
    }
    g.order_.push_back(node);
    stack.pop_back();
  }
  return g;
}

std::vector<std::string> Graph::op_names() const {
  std::vector<std::string> names;
  names.reserve(order_.size());
  for (const auto* n : order_) names.emplace_back(n->op);
  return names;
}

void Tensor::backward() const {
  if (numel() != 1) throw UsageError("backward() needs a scalar root, got " + shape_str(shape()));
  if (!requires_grad()) return;
  Graph g = Graph::trace(*this);
  node_->ensure_grad();
  node_->grad[0] += 1.0;
  const auto& order = g.order();
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    detail::Node* n = *it;
    if (n->backward) {
      n->ensure_grad();
      n->backward(*n);
    }
  }
}

// ---------------------------------------------------------------------------

GradcheckResult gradcheck(const std::function<Tensor()>& f, std::span<const Tensor> wrt, double eps) {
  std::vector<Tensor> params(wrt.begin(), wrt.end());
  for (auto& p : params) {
    if (!p.is_leaf()) throw UsageError("gradcheck: tensors to perturb must be leaves");
    p.zero_grad();
  }
  {
    Tensor out = f();
    if (out.numel() != 1) throw UsageError("gradcheck: function must be scalar-valued, got " + shape_str(out.shape()));
    out.backward();
  }
  std::vector<std::vector<double>> analytic;
  analytic.reserve(params.size());
  for (auto& p : params) {
    if (p.has_grad()) {
      analytic.emplace_back(p.grad().begin(), p.grad().end());
    } else {
      analytic.emplace_back(p.numel(), 0.0);
    }
  }

  GradcheckResult result;
  for (std::size_t t = 0; t < params.size(); ++t) {
    auto values = params[t].mutable_data();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double saved = values[i];
      values[i] = saved + eps;
      const double plus = f().item();
      values[i] = saved - eps;
      const double minus = f().item();
      values[i] = saved;
      const double numeric = (plus - minus) / (2.0 * eps);
      const double a = analytic[t][i];
      const double denom = std::max({std::abs(a), std::abs(numeric), 1e-8});
      const double rel = std::abs(a - numeric) / denom;
      ++result.checked;
      if (std::isnan(rel) ? !std::isnan(result.max_rel_error) : rel > result.max_rel_error) {
        result.max_rel_error = rel;
        result.worst_tensor = t;
        result.worst_index = i;
        result.worst_analytic = a;
        result.worst_numeric = numeric;
      }
    }
  }
  return result;
}

GradcheckResult gradcheck(const std::function<Tensor()>& f, std::initializer_list<Tensor> wrt, double eps) {
  return gradcheck(f, std::span<const Tensor>(wrt.begin(), wrt.size()), eps);
}

}  // namespace stefnet
