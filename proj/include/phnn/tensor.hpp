#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace phnn {

using Shape = std::vector<int>;

long long numel_of(const Shape& shape);
std::string shape_str(const Shape& shape);

struct TensorImpl;

// One recorded op on the tape. backward reads the output's gradient and
// accumulates into the inputs' gradients.
struct Node {
  const char* op = "";
  std::vector<std::shared_ptr<TensorImpl>> inputs;
  std::function<void(TensorImpl& out)> backward;
};

struct TensorImpl {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;  // empty until backward touches this tensor
  bool requires_grad = false;
  std::shared_ptr<Node> producer;

  void ensure_grad() {
    if (grad.empty()) grad.assign(data.size(), 0.0);
  }
};

// Dense row-major f64 tensor. Value-semantic handle over a shared payload;
// payloads are treated as immutable once an op has consumed them.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);
  static Tensor zeros(Shape shape) { return Tensor(std::move(shape), 0.0); }
  static Tensor from_data(Shape shape, std::vector<double> values);
  static Tensor scalar(double v) { return from_data({1}, {v}); }

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const { return impl_->shape; }
  int rank() const { return static_cast<int>(impl_->shape.size()); }
  int dim(int i) const { return impl_->shape[static_cast<size_t>(i)]; }
  long long numel() const { return static_cast<long long>(impl_->data.size()); }

  std::span<const double> data() const { return impl_->data; }
  // Direct mutation is only legal before the tensor enters the graph.
  std::span<double> data_mut() { return impl_->data; }
  double item() const;

  bool requires_grad() const { return impl_->requires_grad; }
  Tensor& set_requires_grad(bool b) {
    impl_->requires_grad = b;
    return *this;
  }
  bool has_grad() const { return !impl_->grad.empty(); }
  std::span<const double> grad() const { return impl_->grad; }
  std::span<double> grad_mut() { return impl_->grad; }
  void zero_grad() { impl_->grad.clear(); }

  // Reverse-mode sweep from a scalar-shaped root. Gradients accumulate,
  // so multi-path contributions sum.
  void backward() const;

  bool all_finite() const;

  const std::shared_ptr<TensorImpl>& impl() const { return impl_; }

  static Tensor op_output(Shape shape, std::shared_ptr<Node> producer, bool requires_grad);

 private:
  std::shared_ptr<TensorImpl> impl_;
};

struct Parameter {
  std::string name;
  Tensor tensor;  // requires_grad == true
};

// While a guard is alive, ops do not record tape nodes (eval/inference).
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;
  static bool grad_enabled();

 private:
  bool prev_;
};

}  // namespace phnn
