#include "rddm/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <unordered_set>

#include "rddm/errors.hpp"

namespace rddm {

namespace {
thread_local bool t_grad_enabled = true;

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }
}  // namespace

std::size_t shape_numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

namespace detail {

std::vector<double>& Node::grad_buffer() {
  if (grad.empty()) grad.assign(data.size(), 0.0);
  return grad;
}

void Node::accumulate(std::span<const double> g) {
  auto& buf = grad_buffer();
  for (std::size_t i = 0; i < buf.size(); ++i) buf[i] += g[i];
}

}  // namespace detail

bool grad_enabled() { return t_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(t_grad_enabled) { t_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { t_grad_enabled = previous_; }

// ---------------------------------------------------------------------------
// Tensor

Tensor Tensor::from(Shape shape, std::vector<double> values, bool requires_grad) {
  for (auto d : shape) {
    if (d == 0) throw DimensionError("tensor dimensions must be positive, got " + shape_str(shape));
  }
  if (shape_numel(shape) != values.size()) {
    throw DimensionError("shape " + shape_str(shape) + " holds " + std::to_string(shape_numel(shape)) +
                         " values, got " + std::to_string(values.size()));
  }
  auto node = std::make_shared<detail::Node>();
  node->shape = std::move(shape);
  node->data = std::move(values);
  node->requires_grad = requires_grad;
  return Tensor(std::move(node));
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) { return full(std::move(shape), 0.0, requires_grad); }

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  const auto n = shape_numel(shape);
  return from(std::move(shape), std::vector<double>(n, value), requires_grad);
}

Tensor Tensor::scalar(double value, bool requires_grad) { return from({}, {value}, requires_grad); }

detail::Node& Tensor::node() const {
  if (!node_) throw ContractError("use of an undefined tensor");
  return *node_;
}

const Shape& Tensor::shape() const { return node().shape; }

std::size_t Tensor::dim(std::size_t axis) const {
  const auto& s = shape();
  if (axis >= s.size()) throw DimensionError("axis " + std::to_string(axis) + " out of range for " + shape_str(s));
  return s[axis];
}

std::size_t Tensor::numel() const { return node().data.size(); }
std::span<const double> Tensor::data() const { return node().data; }

std::span<double> Tensor::mutable_data() {
  if (!is_leaf()) throw ContractError("only leaf tensors may be modified in place");
  return node().data;
}

double Tensor::item() const {
  if (numel() != 1) throw ContractError("item() on a tensor with " + std::to_string(numel()) + " elements");
  return node().data[0];
}

bool Tensor::requires_grad() const { return node().requires_grad; }
bool Tensor::is_leaf() const { return !node().backward; }
bool Tensor::has_grad() const { return !node().grad.empty(); }

std::span<const double> Tensor::grad() const { return node().grad; }

void Tensor::zero_grad() { node().grad.clear(); }

Tensor Tensor::detach_copy(bool requires_grad) const {
  return from(shape(), std::vector<double>(data().begin(), data().end()), requires_grad);
}

Tensor Tensor::make_result(Shape shape, std::vector<double> values, std::vector<Tensor> inputs,
                           std::function<void(detail::Node&)> backward) {
  auto node = std::make_shared<detail::Node>();
  node->shape = std::move(shape);
  node->data = std::move(values);
  bool track = false;
  if (t_grad_enabled) {
    for (const auto& in : inputs) track = track || in.requires_grad();
  }
  if (track) {
    node->requires_grad = true;
    for (auto& in : inputs) node->parents.push_back(in.node_);
    node->backward = std::move(backward);
  }
  return Tensor(std::move(node));
}

void Tensor::backward() const {
  auto& root = node();
  if (root.data.size() != 1) throw ContractError("backward() requires a single-element loss");
  if (!root.requires_grad) return;

  // Iterative post-order DFS gives a topological order (inputs first). The
  // order holds owning references because releasing a node's parents below
  // may drop the last other reference to them.
  std::vector<std::shared_ptr<detail::Node>> order;
  std::unordered_set<detail::Node*> seen{node_.get()};
  std::vector<std::pair<std::shared_ptr<detail::Node>, std::size_t>> stack;
  stack.emplace_back(node_, 0);
  while (!stack.empty()) {
    auto& top = stack.back();
    if (top.second < top.first->parents.size()) {
      auto parent = top.first->parents[top.second++];
      if (parent->requires_grad && seen.insert(parent.get()).second) stack.emplace_back(std::move(parent), 0);
    } else {
      order.push_back(std::move(top.first));
      stack.pop_back();
    }
  }

  root.grad_buffer()[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    auto& n = **it;
    if (!n.backward) continue;
    if (!n.grad.empty()) n.backward(n);
    n.backward = nullptr;
    n.parents.clear();
    n.grad.clear();
    n.grad.shrink_to_fit();
  }
}

// ---------------------------------------------------------------------------
// Elementwise

namespace {

double apply(BinaryOp op, double a, double b) {
  switch (op) {
    case BinaryOp::add: return a + b;
    case BinaryOp::sub: return a - b;
    case BinaryOp::mul: return a * b;
    case BinaryOp::div: return a / b;
  }
  return 0.0;
}

// d(a op b)/da and d(a op b)/db
std::pair<double, double> partials(BinaryOp op, double a, double b) {
  switch (op) {
    case BinaryOp::add: return {1.0, 1.0};
    case BinaryOp::sub: return {1.0, -1.0};
    case BinaryOp::mul: return {b, a};
    case BinaryOp::div: return {1.0 / b, -a / (b * b)};
  }
  return {0.0, 0.0};
}

}  // namespace

Tensor elementwise(BinaryOp op, const Tensor& a, const Tensor& b) {
  const bool a_scalar = a.rank() == 0;
  const bool b_scalar = b.rank() == 0;
  if (!a_scalar && !b_scalar && a.shape() != b.shape()) {
    throw DimensionError("elementwise shape mismatch: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
  const Shape out_shape = (a_scalar && !b_scalar) ? b.shape() : a.shape();
  const std::size_t n = shape_numel(out_shape);
  auto ad = a.data();
  auto bd = b.data();
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    out[i] = apply(op, ad[a_scalar ? 0 : i], bd[b_scalar ? 0 : i]);
  }
  return Tensor::make_result(out_shape, std::move(out), {a, b}, [op, a_scalar, b_scalar, n](detail::Node& self) {
    auto& pa = *self.parents[0];
    auto& pb = *self.parents[1];
    const auto& g = self.grad;
    std::vector<double>* ga = pa.requires_grad ? &pa.grad_buffer() : nullptr;
    std::vector<double>* gb = pb.requires_grad ? &pb.grad_buffer() : nullptr;
    for (std::size_t i = 0; i < n; ++i) {
      const double av = pa.data[a_scalar ? 0 : i];
      const double bv = pb.data[b_scalar ? 0 : i];
      const auto [da, db] = partials(op, av, bv);
      if (ga) (*ga)[a_scalar ? 0 : i] += g[i] * da;
      if (gb) (*gb)[b_scalar ? 0 : i] += g[i] * db;
    }
  });
}

Tensor elementwise(BinaryOp op, const Tensor& a, double b) { return elementwise(op, a, Tensor::scalar(b)); }

Tensor elementwise(UnaryOp op, const Tensor& a) {
  auto in = a.data();
  const std::size_t n = in.size();
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double x = in[i];
    switch (op) {
      case UnaryOp::exp: out[i] = std::exp(x); break;
      case UnaryOp::abs: out[i] = std::fabs(x); break;
      case UnaryOp::square: out[i] = x * x; break;
      case UnaryOp::sqrt: out[i] = std::sqrt(x); break;
      case UnaryOp::neg: out[i] = -x; break;
      case UnaryOp::silu: out[i] = x * sigmoid(x); break;
    }
  }
  return Tensor::make_result(a.shape(), std::move(out), {a}, [op, n](detail::Node& self) {
    auto& p = *self.parents[0];
    auto& gp = p.grad_buffer();
    const auto& g = self.grad;
    for (std::size_t i = 0; i < n; ++i) {
      const double x = p.data[i];
      double d = 0.0;
      switch (op) {
        case UnaryOp::exp: d = self.data[i]; break;
        // subgradient 0 at the kink
        case UnaryOp::abs: d = x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); break;
        case UnaryOp::square: d = 2.0 * x; break;
        case UnaryOp::sqrt: d = 0.5 / self.data[i]; break;
        case UnaryOp::neg: d = -1.0; break;
        case UnaryOp::silu: {
          const double s = sigmoid(x);
          d = s * (1.0 + x * (1.0 - s));
          break;
        }
      }
      gp[i] += g[i] * d;
    }
  });
}

Tensor add(const Tensor& a, const Tensor& b) { return elementwise(BinaryOp::add, a, b); }
Tensor sub(const Tensor& a, const Tensor& b) { return elementwise(BinaryOp::sub, a, b); }
Tensor mul(const Tensor& a, const Tensor& b) { return elementwise(BinaryOp::mul, a, b); }
Tensor div(const Tensor& a, const Tensor& b) { return elementwise(BinaryOp::div, a, b); }
Tensor exp(const Tensor& a) { return elementwise(UnaryOp::exp, a); }
Tensor abs(const Tensor& a) { return elementwise(UnaryOp::abs, a); }
Tensor square(const Tensor& a) { return elementwise(UnaryOp::square, a); }
Tensor sqrt(const Tensor& a) { return elementwise(UnaryOp::sqrt, a); }
Tensor neg(const Tensor& a) { return elementwise(UnaryOp::neg, a); }
Tensor silu(const Tensor& a) { return elementwise(UnaryOp::silu, a); }

Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
Tensor operator/(const Tensor& a, const Tensor& b) { return div(a, b); }
Tensor operator+(const Tensor& a, double b) { return elementwise(BinaryOp::add, a, b); }
Tensor operator-(const Tensor& a, double b) { return elementwise(BinaryOp::sub, a, b); }
Tensor operator*(const Tensor& a, double b) { return elementwise(BinaryOp::mul, a, b); }
Tensor operator/(const Tensor& a, double b) { return elementwise(BinaryOp::div, a, b); }
Tensor operator*(double a, const Tensor& b) { return elementwise(BinaryOp::mul, b, a); }
Tensor operator-(const Tensor& a) { return neg(a); }

// ---------------------------------------------------------------------------
// Reductions

Tensor reduce(ReduceOp op, const Tensor& a, const std::vector<std::size_t>& axes) {
  const Shape& in_shape = a.shape();
  const std::size_t rank = in_shape.size();
  std::vector<bool> reduced(rank, axes.empty());
  for (auto ax : axes) {
    if (ax >= rank) throw DimensionError("reduce axis " + std::to_string(ax) + " invalid for " + shape_str(in_shape));
    if (reduced[ax]) throw DimensionError("reduce axis " + std::to_string(ax) + " repeated");
    reduced[ax] = true;
  }

  Shape out_shape;
  std::size_t count = 1;
  for (std::size_t d = 0; d < rank; ++d) {
    if (reduced[d]) {
      count *= in_shape[d];
    } else {
      out_shape.push_back(in_shape[d]);
    }
  }

  // Output flat index for each input element.
  const std::size_t n = a.numel();
  std::vector<std::size_t> target(n);
  {
    std::vector<std::size_t> idx(rank, 0);
    for (std::size_t i = 0; i < n; ++i) {
      std::size_t o = 0;
      for (std::size_t d = 0; d < rank; ++d) {
        if (!reduced[d]) o = o * in_shape[d] + idx[d];
      }
      target[i] = o;
      for (std::size_t d = rank; d-- > 0;) {
        if (++idx[d] < in_shape[d]) break;
        idx[d] = 0;
      }
    }
  }

  std::vector<double> out(shape_numel(out_shape), 0.0);
  auto in = a.data();
  for (std::size_t i = 0; i < n; ++i) out[target[i]] += in[i];
  const double scale = op == ReduceOp::mean ? 1.0 / static_cast<double>(count) : 1.0;
  if (op == ReduceOp::mean) {
    for (auto& v : out) v *= scale;
  }

  return Tensor::make_result(std::move(out_shape), std::move(out), {a},
                             [target = std::move(target), scale](detail::Node& self) {
                               auto& gp = self.parents[0]->grad_buffer();
                               for (std::size_t i = 0; i < target.size(); ++i) gp[i] += self.grad[target[i]] * scale;
                             });
}

Tensor sum(const Tensor& a) { return reduce(ReduceOp::sum, a, {}); }
Tensor mean(const Tensor& a) { return reduce(ReduceOp::mean, a, {}); }
Tensor sum(const Tensor& a, const std::vector<std::size_t>& axes) {
  if (axes.empty()) throw DimensionError("sum over an empty axis list");
  return reduce(ReduceOp::sum, a, axes);
}
Tensor mean(const Tensor& a, const std::vector<std::size_t>& axes) {
  if (axes.empty()) throw DimensionError("mean over an empty axis list");
  return reduce(ReduceOp::mean, a, axes);
}

Tensor reshape(const Tensor& a, Shape shape) {
  if (shape_numel(shape) != a.numel()) {
    throw DimensionError("cannot reshape " + shape_str(a.shape()) + " to " + shape_str(shape));
  }
  std::vector<double> values(a.data().begin(), a.data().end());
  return Tensor::make_result(std::move(shape), std::move(values), {a},
                             [](detail::Node& self) { self.parents[0]->accumulate(self.grad); });
}

Tensor stop_gradient(const Tensor& a) {
  return Tensor::from(a.shape(), std::vector<double>(a.data().begin(), a.data().end()), false);
}

}  // namespace rddm
