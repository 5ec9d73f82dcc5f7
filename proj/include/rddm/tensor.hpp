#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace rddm {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

namespace detail {

struct Node {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;  // empty until the first accumulation
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  // Reads this node's grad and accumulates into parents. Empty for leaves
  // and for nodes built while gradients were disabled.
  std::function<void(Node&)> backward;

  void accumulate(std::span<const double> g);
  std::vector<double>& grad_buffer();
};

}  // namespace detail

/// Dense row-major double tensor with reverse-mode differentiation.
///
/// A Tensor is a cheap handle; copies share the underlying node. Values are
/// immutable after construction except through `mutable_data()`, which is
/// reserved for leaves (parameters updated by an optimizer).
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<double> values, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const noexcept { return node_ != nullptr; }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t numel() const;

  std::span<const double> data() const;
  std::span<double> mutable_data();
  double item() const;
  double operator[](std::size_t i) const { return data()[i]; }

  bool requires_grad() const;
  bool is_leaf() const;
  bool has_grad() const;
  /// Gradient accumulated by `backward()`; an all-zero view is never
  /// materialised, so check `has_grad()` first.
  std::span<const double> grad() const;
  void zero_grad();

  /// Reverse pass from a single-element tensor. Intermediate nodes release
  /// their closures afterwards, so a graph can be walked once.
  void backward() const;

  /// New leaf holding a copy of the values.
  Tensor detach_copy(bool requires_grad = false) const;

  // Internal: used by op implementations.
  static Tensor make_result(Shape shape, std::vector<double> values,
                            std::vector<Tensor> inputs,
                            std::function<void(detail::Node&)> backward);
  detail::Node& node() const;

 private:
  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}
  std::shared_ptr<detail::Node> node_;
};

/// Whether newly created results record backward rules on this thread.
bool grad_enabled();

/// Disables graph recording on the current thread for its lifetime.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

// Elementwise. Binary forms accept equal shapes or a rank-0 operand.
enum class BinaryOp { add, sub, mul, div };
enum class UnaryOp { exp, abs, square, sqrt, neg, silu };

Tensor elementwise(BinaryOp op, const Tensor& a, const Tensor& b);
Tensor elementwise(BinaryOp op, const Tensor& a, double b);
Tensor elementwise(UnaryOp op, const Tensor& a);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
Tensor exp(const Tensor& a);
Tensor abs(const Tensor& a);
Tensor square(const Tensor& a);
Tensor sqrt(const Tensor& a);
Tensor neg(const Tensor& a);
/// x * sigmoid(x)
Tensor silu(const Tensor& a);

Tensor operator+(const Tensor& a, const Tensor& b);
Tensor operator-(const Tensor& a, const Tensor& b);
Tensor operator*(const Tensor& a, const Tensor& b);
Tensor operator/(const Tensor& a, const Tensor& b);
Tensor operator+(const Tensor& a, double b);
Tensor operator-(const Tensor& a, double b);
Tensor operator*(const Tensor& a, double b);
Tensor operator/(const Tensor& a, double b);
Tensor operator*(double a, const Tensor& b);
Tensor operator-(const Tensor& a);

// Reductions. The no-axes forms reduce everything to a rank-0 tensor.
enum class ReduceOp { sum, mean };

Tensor reduce(ReduceOp op, const Tensor& a, const std::vector<std::size_t>& axes);
Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
Tensor sum(const Tensor& a, const std::vector<std::size_t>& axes);
Tensor mean(const Tensor& a, const std::vector<std::size_t>& axes);

Tensor reshape(const Tensor& a, Shape shape);

/// Value-identical copy that contributes no gradient to its ancestors.
Tensor stop_gradient(const Tensor& a);

}  // namespace rddm
