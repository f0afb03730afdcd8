#include "phnn/tensor.hpp"

#include <cmath>
#include <sstream>
#include <unordered_set>

#include "phnn/error.hpp"

namespace phnn {

long long numel_of(const Shape& shape) {
  long long n = 1;
  for (int e : shape) n *= e;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ']';
  return os.str();
}

Tensor::Tensor(Shape shape, double fill) {
  for (int e : shape) {
    if (e <= 0) throw ShapeError("tensor extent must be positive, got " + shape_str(shape));
  }
  impl_ = std::make_shared<TensorImpl>();
  impl_->data.assign(static_cast<size_t>(numel_of(shape)), fill);
  impl_->shape = std::move(shape);
}

Tensor Tensor::from_data(Shape shape, std::vector<double> values) {
  if (numel_of(shape) != static_cast<long long>(values.size())) {
    throw ShapeError("from_data: " + std::to_string(values.size()) + " values for shape " +
                     shape_str(shape));
  }
  Tensor t(std::move(shape));
  t.impl_->data = std::move(values);
  return t;
}

double Tensor::item() const {
  if (numel() != 1) throw ShapeError("item: tensor has shape " + shape_str(shape()));
  return impl_->data[0];
}

bool Tensor::all_finite() const {
  for (double v : impl_->data) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

Tensor Tensor::op_output(Shape shape, std::shared_ptr<Node> producer, bool requires_grad) {
  Tensor t(std::move(shape));
  t.impl_->requires_grad = requires_grad;
  if (NoGradGuard::grad_enabled() && requires_grad) {
    t.impl_->producer = std::move(producer);
  }
  return t;
}

void Tensor::backward() const {
  if (!defined()) throw ShapeError("backward: undefined tensor");
  if (numel() != 1) {
    throw ShapeError("backward: root must be scalar-shaped, got " + shape_str(shape()));
  }

  // Topological order, inputs before outputs.
  std::vector<TensorImpl*> order;
  std::unordered_set<TensorImpl*> seen;
  std::vector<std::pair<TensorImpl*, size_t>> stack;
  stack.emplace_back(impl_.get(), 0);
  seen.insert(impl_.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (node->producer && next < node->producer->inputs.size()) {
      TensorImpl* in = node->producer->inputs[next++].get();
      if (in->producer && !seen.count(in)) {
        seen.insert(in);
        stack.emplace_back(in, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  impl_->ensure_grad();
  impl_->grad[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    TensorImpl* t = *it;
    if (!t->producer) continue;
    t->ensure_grad();
    t->producer->backward(*t);
  }
}

namespace {
thread_local bool g_grad_enabled = true;
}

NoGradGuard::NoGradGuard() : prev_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = prev_; }
bool NoGradGuard::grad_enabled() { return g_grad_enabled; }

}  // namespace phnn
