#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "mner/error.hpp"

namespace mner {

using Shape = std::vector<std::size_t>;
using Rng = std::mt19937_64;

std::string shape_str(const Shape& s);
std::size_t shape_numel(const Shape& s);

namespace detail {

struct Node {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;  // empty until first needed, then same size as value
  bool requires_grad = false;
  std::uint64_t id = 0;  // creation order; inputs always have smaller ids
  const char* op = "leaf";
  std::vector<std::shared_ptr<Node>> inputs;
  std::function<void(Node&)> backward;

  std::vector<double>& ensure_grad() {
    if (grad.empty()) grad.assign(value.size(), 0.0);
    return grad;
  }
};

}  // namespace detail

// Dense row-major float64 array with a reverse-mode tape. Copies share the
// underlying node; use clone() for a deep copy.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double v, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<double> data, bool requires_grad = false);
  static Tensor scalar(double v, bool requires_grad = false);
  // Rows of equal length; throws ShapeError on ragged input.
  static Tensor matrix(const std::vector<std::vector<double>>& rows, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t size() const { return node_->value.size(); }
  std::size_t rows() const;
  std::size_t cols() const;

  std::span<const double> data() const { return node_->value; }
  // Mutating a tensor that is already part of a recorded graph invalidates
  // that graph's backward pass.
  std::span<double> mutable_data() { return node_->value; }
  std::span<const double> grad() const;
  std::span<double> mutable_grad();
  bool has_grad() const { return !node_->grad.empty(); }

  double item() const;
  double at(std::size_t i) const { return node_->value[i]; }
  double at(std::size_t r, std::size_t c) const;
  std::vector<double> row(std::size_t r) const;
  std::vector<std::vector<double>> to_rows() const;

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool on) { node_->requires_grad = on; }
  void zero_grad();

  // Same values, cut from the tape.
  Tensor detach() const;
  Tensor clone() const;

  std::uint64_t id() const { return node_->id; }
  const char* op() const { return node_->op; }
  const std::shared_ptr<detail::Node>& node() const { return node_; }

  // Builds an op result. If any input requires grad, the inputs and the
  // backward closure are recorded; otherwise the result is a constant.
  // The closure reads out.grad and accumulates into the inputs' grads.
  static Tensor make_op(const char* op, Shape shape, std::vector<double> value,
                        std::initializer_list<Tensor> inputs,
                        std::function<void(detail::Node&)> backward);
  static Tensor make_op(const char* op, Shape shape, std::vector<double> value,
                        const std::vector<Tensor>& inputs,
                        std::function<void(detail::Node&)> backward);

 private:
  explicit Tensor(std::shared_ptr<detail::Node> n) : node_(std::move(n)) {}
  std::shared_ptr<detail::Node> node_;
};

// When enabled, every op asserts that its output is finite and throws
// NumericalError otherwise. Process-wide; tests turn it on.
void set_finite_checks(bool on);
bool finite_checks_enabled();

// Recorded operations reachable from a root, in creation (topological) order.
class Graph {
 public:
  static Graph collect(const Tensor& root);
  const std::vector<std::shared_ptr<detail::Node>>& records() const { return records_; }

 private:
  std::vector<std::shared_ptr<detail::Node>> records_;
};

// Populates grads of every requires_grad tensor reachable from `loss`, which
// must hold exactly one element. Leaf grads accumulate across calls until
// zero_grad(). The recorded graph is released afterwards.
void backward(const Tensor& loss);

// ---- ops ------------------------------------------------------------------
// All matrix ops take rank-2 tensors unless noted. No implicit broadcasting
// except a one-element operand in add/sub/mul.

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);
Tensor one_minus(const Tensor& a);
// x: m×n, bias: 1×n (explicit row broadcast).
Tensor add_bias(const Tensor& x, const Tensor& bias);
// x·W + b
Tensor affine(const Tensor& x, const Tensor& w, const Tensor& b);

Tensor sigmoid(const Tensor& a);
Tensor tanh(const Tensor& a);
Tensor relu(const Tensor& a);
// Natural log; every input must be positive.
Tensor log(const Tensor& a);

// Softmax along `axis` of a tensor of any rank, with max subtraction.
Tensor softmax(const Tensor& x, std::size_t axis);
// Row softmax over the columns whose key_mask entry is nonzero; masked
// columns get exactly 0. Every row needs at least one open column.
Tensor masked_softmax(const Tensor& x, std::span<const std::uint8_t> key_mask);

Tensor sum(const Tensor& a);
// Column means: m×n -> 1×n.
Tensor mean_rows(const Tensor& a);

Tensor concat_cols(const std::vector<Tensor>& parts);
Tensor concat_rows(const std::vector<Tensor>& parts);
Tensor slice_rows(const Tensor& a, std::size_t begin, std::size_t count);
Tensor slice_cols(const Tensor& a, std::size_t begin, std::size_t count);
// Row gather; index -1 produces a zero row (used for padding).
Tensor gather_rows(const Tensor& table, std::span<const long> indices);

// Row-wise layer normalization with learned gain/bias (1×n each).
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps = 1e-5);

// Column-wise max over consecutive row segments. offsets has k+1 entries;
// segment i spans rows [offsets[i], offsets[i+1]). Output k×n.
Tensor segment_max(const Tensor& x, std::span<const std::size_t> offsets);

// Inverted dropout; identity when p == 0.
Tensor dropout(const Tensor& x, double p, Rng& rng);

// Additive attention scores: out[t][i] = w · tanh(a[t] + b[i]).
// a: n×k, b: m×k, w: k×1 -> n×m.
Tensor additive_scores(const Tensor& a, const Tensor& b, const Tensor& w);

// ---- parameters -----------------------------------------------------------

enum class Init { zeros, ones, xavier, normal };

// Named, ordered collection of trainable leaves.
class ParamStore {
 public:
  Tensor create(const std::string& name, Shape shape, Init init, Rng& rng, double stddev = 0.02);
  bool contains(const std::string& name) const;
  const Tensor& get(const std::string& name) const;
  Tensor& get(const std::string& name);
  std::vector<std::string> names() const;
  std::size_t size() const { return names_.size(); }
  void zero_grad();
  std::size_t num_values() const;

 private:
  std::vector<std::string> names_;  // creation order
  std::vector<Tensor> tensors_;
};

// ---- gradient checking ----------------------------------------------------

// max over coordinates of |analytic - numeric| / max(1, |analytic|, |numeric|),
// numeric gradient by central differences. f must return a scalar and be
// deterministic (checked by evaluating twice).
double grad_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& x, double eps = 1e-5);
// Same, over several leaves that f closes over.
double grad_check(const std::function<Tensor()>& f, std::span<Tensor> params, double eps = 1e-5);

}  // namespace mner
