#include "mner/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <sstream>
#include <unordered_set>

namespace mner {

namespace {

std::atomic<std::uint64_t> g_next_id{1};
std::atomic<bool> g_finite_checks{false};

std::shared_ptr<detail::Node> new_node(Shape shape, std::vector<double> value, bool requires_grad) {
  auto n = std::make_shared<detail::Node>();
  n->shape = std::move(shape);
  n->value = std::move(value);
  n->requires_grad = requires_grad;
  n->id = g_next_id.fetch_add(1, std::memory_order_relaxed);
  return n;
}

void check_shape_value(const Shape& shape, std::size_t n) {
  if (shape.empty()) throw ShapeError("tensor rank must be >= 1");
  for (auto d : shape)
    if (d == 0) throw ShapeError("tensor dimensions must be positive, got " + shape_str(shape));
  if (shape_numel(shape) != n)
    throw ShapeError("shape " + shape_str(shape) + " does not match " + std::to_string(n) + " values");
}

}  // namespace

std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "x" : "") << s[i];
  os << ']';
  return os.str();
}

std::size_t shape_numel(const Shape& s) {
  std::size_t n = 1;
  for (auto d : s) n *= d;
  return n;
}

void set_finite_checks(bool on) { g_finite_checks.store(on); }
bool finite_checks_enabled() { return g_finite_checks.load(); }

Tensor Tensor::zeros(Shape shape, bool requires_grad) { return full(std::move(shape), 0.0, requires_grad); }

Tensor Tensor::full(Shape shape, double v, bool requires_grad) {
  const auto n = shape_numel(shape);
  return from(std::move(shape), std::vector<double>(n, v), requires_grad);
}

Tensor Tensor::from(Shape shape, std::vector<double> data, bool requires_grad) {
  check_shape_value(shape, data.size());
  for (double v : data)
    if (!std::isfinite(v)) throw NumericalError("non-finite value in tensor construction");
  return Tensor(new_node(std::move(shape), std::move(data), requires_grad));
}

Tensor Tensor::scalar(double v, bool requires_grad) { return from({1}, {v}, requires_grad); }

Tensor Tensor::matrix(const std::vector<std::vector<double>>& rows, bool requires_grad) {
  if (rows.empty() || rows[0].empty()) throw ShapeError("matrix needs at least one row and column");
  std::vector<double> flat;
  flat.reserve(rows.size() * rows[0].size());
  for (const auto& r : rows) {
    if (r.size() != rows[0].size()) throw ShapeError("ragged matrix rows");
    flat.insert(flat.end(), r.begin(), r.end());
  }
  return from({rows.size(), rows[0].size()}, std::move(flat), requires_grad);
}

std::size_t Tensor::rows() const {
  if (rank() != 2) throw ShapeError("expected a matrix, got " + shape_str(shape()));
  return shape()[0];
}

std::size_t Tensor::cols() const {
  if (rank() != 2) throw ShapeError("expected a matrix, got " + shape_str(shape()));
  return shape()[1];
}

std::span<const double> Tensor::grad() const {
  node_->ensure_grad();
  return node_->grad;
}

std::span<double> Tensor::mutable_grad() { return node_->ensure_grad(); }

double Tensor::item() const {
  if (size() != 1) throw ContractError("item() on tensor of shape " + shape_str(shape()));
  return node_->value[0];
}

double Tensor::at(std::size_t r, std::size_t c) const { return node_->value[r * cols() + c]; }

std::vector<double> Tensor::row(std::size_t r) const {
  const auto n = cols();
  return {node_->value.begin() + static_cast<long>(r * n), node_->value.begin() + static_cast<long>((r + 1) * n)};
}

std::vector<std::vector<double>> Tensor::to_rows() const {
  std::vector<std::vector<double>> out;
  out.reserve(rows());
  for (std::size_t r = 0; r < rows(); ++r) out.push_back(row(r));
  return out;
}

void Tensor::zero_grad() {
  if (!node_->grad.empty()) std::fill(node_->grad.begin(), node_->grad.end(), 0.0);
}

Tensor Tensor::detach() const { return Tensor(new_node(node_->shape, node_->value, false)); }

Tensor Tensor::clone() const { return Tensor(new_node(node_->shape, node_->value, node_->requires_grad)); }

Tensor Tensor::make_op(const char* op, Shape shape, std::vector<double> value, std::initializer_list<Tensor> inputs,
                       std::function<void(detail::Node&)> backward) {
  return make_op(op, std::move(shape), std::move(value), std::vector<Tensor>(inputs), std::move(backward));
}

Tensor Tensor::make_op(const char* op, Shape shape, std::vector<double> value, const std::vector<Tensor>& inputs,
                       std::function<void(detail::Node&)> backward) {
  if (g_finite_checks.load(std::memory_order_relaxed)) {
    for (double v : value)
      if (!std::isfinite(v)) throw NumericalError(std::string("non-finite output from op '") + op + "'");
  }
  bool needs_grad = false;
  for (const auto& t : inputs) needs_grad = needs_grad || t.requires_grad();
  auto n = new_node(std::move(shape), std::move(value), needs_grad);
  n->op = op;
  if (needs_grad) {
    n->inputs.reserve(inputs.size());
    for (const auto& t : inputs) n->inputs.push_back(t.node());
    n->backward = std::move(backward);
  }
  return Tensor(std::move(n));
}

Graph Graph::collect(const Tensor& root) {
  Graph g;
  if (!root.requires_grad()) return g;
  std::unordered_set<const detail::Node*> seen;
  std::vector<std::shared_ptr<detail::Node>> stack{root.node()};
  seen.insert(root.node().get());
  while (!stack.empty()) {
    auto n = std::move(stack.back());
    stack.pop_back();
    for (const auto& in : n->inputs) {
      if (in->requires_grad && seen.insert(in.get()).second) stack.push_back(in);
    }
    g.records_.push_back(std::move(n));
  }
  std::sort(g.records_.begin(), g.records_.end(), [](const auto& a, const auto& b) { return a->id < b->id; });
  return g;
}

void backward(const Tensor& loss) {
  if (!loss.defined() || loss.size() != 1)
    throw ContractError("backward() needs a scalar loss, got " + (loss.defined() ? shape_str(loss.shape()) : "<undefined>"));
  if (!loss.requires_grad()) return;
  Graph g = Graph::collect(loss);
  loss.node()->ensure_grad()[0] += 1.0;
  const auto& recs = g.records();
  for (auto it = recs.rbegin(); it != recs.rend(); ++it) {
    auto& n = **it;
    if (n.backward && !n.grad.empty()) n.backward(n);
  }
  for (const auto& n : recs) {
    if (n->backward) {
      n->backward = nullptr;
      n->inputs.clear();
      n->grad.clear();
      n->grad.shrink_to_fit();
    }
  }
}

// ---- parameters -----------------------------------------------------------

Tensor ParamStore::create(const std::string& name, Shape shape, Init init, Rng& rng, double stddev) {
  if (contains(name)) throw ContractError("duplicate parameter '" + name + "'");
  const auto n = shape_numel(shape);
  std::vector<double> v(n, 0.0);
  switch (init) {
    case Init::zeros:
      break;
    case Init::ones:
      std::fill(v.begin(), v.end(), 1.0);
      break;
    case Init::xavier: {
      const double fan_in = static_cast<double>(shape.front());
      const double fan_out = static_cast<double>(shape.size() > 1 ? shape[1] : shape.front());
      const double limit = std::sqrt(6.0 / (fan_in + fan_out));
      std::uniform_real_distribution<double> d(-limit, limit);
      for (auto& x : v) x = d(rng);
      break;
    }
    case Init::normal: {
      std::normal_distribution<double> d(0.0, stddev);
      for (auto& x : v) x = d(rng);
      break;
    }
  }
  names_.push_back(name);
  tensors_.push_back(Tensor::from(std::move(shape), std::move(v), true));
  return tensors_.back();
}

bool ParamStore::contains(const std::string& name) const {
  return std::find(names_.begin(), names_.end(), name) != names_.end();
}

const Tensor& ParamStore::get(const std::string& name) const {
  auto it = std::find(names_.begin(), names_.end(), name);
  if (it == names_.end()) throw ContractError("unknown parameter '" + name + "'");
  return tensors_[static_cast<std::size_t>(it - names_.begin())];
}

Tensor& ParamStore::get(const std::string& name) {
  return const_cast<Tensor&>(static_cast<const ParamStore&>(*this).get(name));
}

std::vector<std::string> ParamStore::names() const { return names_; }

void ParamStore::zero_grad() {
  for (auto& t : tensors_) t.zero_grad();
}

std::size_t ParamStore::num_values() const {
  std::size_t n = 0;
  for (const auto& t : tensors_) n += t.size();
  return n;
}

}  // namespace mner
