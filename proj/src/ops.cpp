#include <algorithm>
#include <cmath>
#include <limits>

#include "mner/tensor.hpp"

namespace mner {

namespace {

using detail::Node;

// Grad buffer of an input, or nullptr when it does not take gradients.
double* grad_of(Node& n) { return n.requires_grad ? n.ensure_grad().data() : nullptr; }

void require_matrix(const Tensor& t, const char* op) {
  if (t.rank() != 2) throw ShapeError(std::string(op) + ": expected a matrix, got " + shape_str(t.shape()));
}

void require_same(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape())
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
}

enum class Binary { add, sub, mul };

Tensor binary(const Tensor& a, const Tensor& b, Binary kind, const char* op) {
  const bool a_scalar = a.size() == 1 && b.size() != 1;
  const bool b_scalar = b.size() == 1 && a.size() != 1;
  if (!a_scalar && !b_scalar) require_same(a, b, op);
  const Shape shape = a_scalar ? b.shape() : a.shape();
  const std::size_t n = shape_numel(shape);
  const auto av = a.data();
  const auto bv = b.data();
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double x = av[a_scalar ? 0 : i];
    const double y = bv[b_scalar ? 0 : i];
    switch (kind) {
      case Binary::add: out[i] = x + y; break;
      case Binary::sub: out[i] = x - y; break;
      case Binary::mul: out[i] = x * y; break;
    }
  }
  return Tensor::make_op(op, shape, std::move(out), {a, b}, [=](Node& o) {
    Node& na = *o.inputs[0];
    Node& nb = *o.inputs[1];
    double* ga = grad_of(na);
    double* gb = grad_of(nb);
    for (std::size_t i = 0; i < n; ++i) {
      const double g = o.grad[i];
      const std::size_t ia = a_scalar ? 0 : i;
      const std::size_t ib = b_scalar ? 0 : i;
      switch (kind) {
        case Binary::add:
          if (ga) ga[ia] += g;
          if (gb) gb[ib] += g;
          break;
        case Binary::sub:
          if (ga) ga[ia] += g;
          if (gb) gb[ib] -= g;
          break;
        case Binary::mul:
          if (ga) ga[ia] += g * nb.value[ib];
          if (gb) gb[ib] += g * na.value[ia];
          break;
      }
    }
  });
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.shape()[1] != b.shape()[0])
    throw ShapeError("matmul: cannot multiply " + shape_str(a.shape()) + " by " + shape_str(b.shape()));
  const std::size_t m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
  std::vector<double> out(m * n, 0.0);
  const double* A = a.data().data();
  const double* B = b.data().data();
  for (std::size_t i = 0; i < m; ++i) {
    double* c = out.data() + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double x = A[i * k + p];
      if (x == 0.0) continue;
      const double* br = B + p * n;
      for (std::size_t j = 0; j < n; ++j) c[j] += x * br[j];
    }
  }
  return Tensor::make_op("matmul", {m, n}, std::move(out), {a, b}, [m, k, n](Node& o) {
    Node& na = *o.inputs[0];
    Node& nb = *o.inputs[1];
    const double* dC = o.grad.data();
    if (double* dA = grad_of(na)) {
      // dA = dC · Bᵀ
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          const double* br = nb.value.data() + p * n;
          const double* gr = dC + i * n;
          double s = 0.0;
          for (std::size_t j = 0; j < n; ++j) s += gr[j] * br[j];
          dA[i * k + p] += s;
        }
    }
    if (double* dB = grad_of(nb)) {
      // dB = Aᵀ · dC
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          const double x = na.value[i * k + p];
          if (x == 0.0) continue;
          const double* gr = dC + i * n;
          double* db = dB + p * n;
          for (std::size_t j = 0; j < n; ++j) db[j] += x * gr[j];
        }
    }
  });
}

Tensor transpose(const Tensor& a) {
  require_matrix(a, "transpose");
  const std::size_t m = a.rows(), n = a.cols();
  std::vector<double> out(m * n);
  const auto v = a.data();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[j * m + i] = v[i * n + j];
  return Tensor::make_op("transpose", {n, m}, std::move(out), {a}, [m, n](Node& o) {
    double* g = grad_of(*o.inputs[0]);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) g[i * n + j] += o.grad[j * m + i];
  });
}

Tensor add(const Tensor& a, const Tensor& b) { return binary(a, b, Binary::add, "add"); }
Tensor sub(const Tensor& a, const Tensor& b) { return binary(a, b, Binary::sub, "sub"); }
Tensor mul(const Tensor& a, const Tensor& b) { return binary(a, b, Binary::mul, "mul"); }

Tensor scale(const Tensor& a, double s) {
  std::vector<double> out(a.data().begin(), a.data().end());
  for (auto& x : out) x *= s;
  return Tensor::make_op("scale", a.shape(), std::move(out), {a}, [s](Node& o) {
    double* g = grad_of(*o.inputs[0]);
    for (std::size_t i = 0; i < o.grad.size(); ++i) g[i] += s * o.grad[i];
  });
}

Tensor one_minus(const Tensor& a) {
  std::vector<double> out(a.data().begin(), a.data().end());
  for (auto& x : out) x = 1.0 - x;
  return Tensor::make_op("one_minus", a.shape(), std::move(out), {a}, [](Node& o) {
    double* g = grad_of(*o.inputs[0]);
    for (std::size_t i = 0; i < o.grad.size(); ++i) g[i] -= o.grad[i];
  });
}

Tensor add_bias(const Tensor& x, const Tensor& bias) {
  require_matrix(x, "add_bias");
  const std::size_t m = x.rows(), n = x.cols();
  if (bias.size() != n)
    throw ShapeError("add_bias: bias " + shape_str(bias.shape()) + " does not fit " + shape_str(x.shape()));
  std::vector<double> out(x.data().begin(), x.data().end());
  const auto b = bias.data();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] += b[j];
  return Tensor::make_op("add_bias", {m, n}, std::move(out), {x, bias}, [m, n](Node& o) {
    if (double* gx = grad_of(*o.inputs[0]))
      for (std::size_t i = 0; i < m * n; ++i) gx[i] += o.grad[i];
    if (double* gb = grad_of(*o.inputs[1]))
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) gb[j] += o.grad[i * n + j];
  });
}

Tensor affine(const Tensor& x, const Tensor& w, const Tensor& b) { return add_bias(matmul(x, w), b); }

Tensor sigmoid(const Tensor& a) {
  std::vector<double> out(a.size());
  const auto v = a.data();
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double x = v[i];
    // split by sign so exp never overflows
    out[i] = x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
  }
  return Tensor::make_op("sigmoid", a.shape(), std::move(out), {a}, [](Node& o) {
    double* g = grad_of(*o.inputs[0]);
    for (std::size_t i = 0; i < o.grad.size(); ++i) g[i] += o.grad[i] * o.value[i] * (1.0 - o.value[i]);
  });
}

Tensor tanh(const Tensor& a) {
  std::vector<double> out(a.size());
  const auto v = a.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::tanh(v[i]);
  return Tensor::make_op("tanh", a.shape(), std::move(out), {a}, [](Node& o) {
    double* g = grad_of(*o.inputs[0]);
    for (std::size_t i = 0; i < o.grad.size(); ++i) g[i] += o.grad[i] * (1.0 - o.value[i] * o.value[i]);
  });
}

Tensor relu(const Tensor& a) {
  std::vector<double> out(a.size());
  const auto v = a.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = v[i] > 0 ? v[i] : 0.0;
  return Tensor::make_op("relu", a.shape(), std::move(out), {a}, [](Node& o) {
    double* g = grad_of(*o.inputs[0]);
    const auto& in = o.inputs[0]->value;
    for (std::size_t i = 0; i < o.grad.size(); ++i)
      if (in[i] > 0) g[i] += o.grad[i];
  });
}

Tensor log(const Tensor& a) {
  std::vector<double> out(a.size());
  const auto v = a.data();
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (!(v[i] > 0.0)) throw ContractError("log: non-positive input");
    out[i] = std::log(v[i]);
  }
  return Tensor::make_op("log", a.shape(), std::move(out), {a}, [](Node& o) {
    double* g = grad_of(*o.inputs[0]);
    const auto& in = o.inputs[0]->value;
    for (std::size_t i = 0; i < o.grad.size(); ++i) g[i] += o.grad[i] / in[i];
  });
}

Tensor softmax(const Tensor& x, std::size_t axis) {
  if (axis >= x.rank())
    throw ContractError("softmax: axis " + std::to_string(axis) + " out of range for " + shape_str(x.shape()));
  const auto& s = x.shape();
  std::size_t outer = 1, inner = 1;
  for (std::size_t d = 0; d < axis; ++d) outer *= s[d];
  for (std::size_t d = axis + 1; d < s.size(); ++d) inner *= s[d];
  const std::size_t len = s[axis];
  const auto v = x.data();
  std::vector<double> out(v.size());
  for (std::size_t o = 0; o < outer; ++o)
    for (std::size_t in = 0; in < inner; ++in) {
      const std::size_t base = o * len * inner + in;
      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t k = 0; k < len; ++k) mx = std::max(mx, v[base + k * inner]);
      double z = 0.0;
      for (std::size_t k = 0; k < len; ++k) z += (out[base + k * inner] = std::exp(v[base + k * inner] - mx));
      for (std::size_t k = 0; k < len; ++k) out[base + k * inner] /= z;
    }
  return Tensor::make_op("softmax", s, std::move(out), {x}, [outer, inner, len](Node& o) {
    double* g = grad_of(*o.inputs[0]);
    for (std::size_t ou = 0; ou < outer; ++ou)
      for (std::size_t in = 0; in < inner; ++in) {
        const std::size_t base = ou * len * inner + in;
        double dot = 0.0;
        for (std::size_t k = 0; k < len; ++k) dot += o.grad[base + k * inner] * o.value[base + k * inner];
        for (std::size_t k = 0; k < len; ++k) {
          const std::size_t i = base + k * inner;
          g[i] += o.value[i] * (o.grad[i] - dot);
        }
      }
  });
}

Tensor masked_softmax(const Tensor& x, std::span<const std::uint8_t> key_mask) {
  require_matrix(x, "masked_softmax");
  const std::size_t m = x.rows(), n = x.cols();
  if (key_mask.size() != n)
    throw ShapeError("masked_softmax: mask length " + std::to_string(key_mask.size()) + " vs " + std::to_string(n) +
                     " columns");
  if (std::none_of(key_mask.begin(), key_mask.end(), [](auto b) { return b != 0; }))
    throw ContractError("masked_softmax: every key is masked");
  const auto v = x.data();
  std::vector<double> out(m * n, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < n; ++j)
      if (key_mask[j]) mx = std::max(mx, v[i * n + j]);
    double z = 0.0;
    for (std::size_t j = 0; j < n; ++j)
      if (key_mask[j]) z += (out[i * n + j] = std::exp(v[i * n + j] - mx));
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] /= z;
  }
  return Tensor::make_op("masked_softmax", {m, n}, std::move(out), {x}, [m, n](Node& o) {
    double* g = grad_of(*o.inputs[0]);
    for (std::size_t i = 0; i < m; ++i) {
      double dot = 0.0;
      for (std::size_t j = 0; j < n; ++j) dot += o.grad[i * n + j] * o.value[i * n + j];
      for (std::size_t j = 0; j < n; ++j) g[i * n + j] += o.value[i * n + j] * (o.grad[i * n + j] - dot);
    }
  });
}

Tensor sum(const Tensor& a) {
  double s = 0.0;
  for (double v : a.data()) s += v;
  return Tensor::make_op("sum", {1}, {s}, {a}, [](Node& o) {
    double* g = grad_of(*o.inputs[0]);
    const std::size_t n = o.inputs[0]->value.size();
    for (std::size_t i = 0; i < n; ++i) g[i] += o.grad[0];
  });
}

Tensor mean_rows(const Tensor& a) {
  require_matrix(a, "mean_rows");
  const std::size_t m = a.rows(), n = a.cols();
  std::vector<double> out(n, 0.0);
  const auto v = a.data();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[j] += v[i * n + j];
  for (auto& x : out) x /= static_cast<double>(m);
  return Tensor::make_op("mean_rows", {1, n}, std::move(out), {a}, [m, n](Node& o) {
    double* g = grad_of(*o.inputs[0]);
    const double inv = 1.0 / static_cast<double>(m);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) g[i * n + j] += o.grad[j] * inv;
  });
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw ContractError("concat_cols: no inputs");
  const std::size_t m = parts[0].rows();
  std::vector<std::size_t> widths;
  std::size_t n = 0;
  for (const auto& p : parts) {
    if (p.rank() != 2 || p.rows() != m)
      throw ShapeError("concat_cols: row mismatch " + shape_str(parts[0].shape()) + " vs " + shape_str(p.shape()));
    widths.push_back(p.cols());
    n += p.cols();
  }
  std::vector<double> out(m * n);
  std::size_t off = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const auto v = parts[k].data();
    for (std::size_t i = 0; i < m; ++i)
      std::copy_n(v.begin() + static_cast<long>(i * widths[k]), widths[k], out.begin() + static_cast<long>(i * n + off));
    off += widths[k];
  }
  return Tensor::make_op("concat_cols", {m, n}, std::move(out), parts, [m, n, widths](Node& o) {
    std::size_t off = 0;
    for (std::size_t k = 0; k < widths.size(); ++k) {
      if (double* g = grad_of(*o.inputs[k]))
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t j = 0; j < widths[k]; ++j) g[i * widths[k] + j] += o.grad[i * n + off + j];
      off += widths[k];
    }
  });
}

Tensor concat_rows(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw ContractError("concat_rows: no inputs");
  const std::size_t n = parts[0].cols();
  std::vector<std::size_t> heights;
  std::vector<double> out;
  for (const auto& p : parts) {
    if (p.rank() != 2 || p.cols() != n)
      throw ShapeError("concat_rows: column mismatch " + shape_str(parts[0].shape()) + " vs " + shape_str(p.shape()));
    heights.push_back(p.rows());
    out.insert(out.end(), p.data().begin(), p.data().end());
  }
  const std::size_t m = out.size() / n;
  return Tensor::make_op("concat_rows", {m, n}, std::move(out), parts, [n, heights](Node& o) {
    std::size_t off = 0;
    for (std::size_t k = 0; k < heights.size(); ++k) {
      if (double* g = grad_of(*o.inputs[k]))
        for (std::size_t i = 0; i < heights[k] * n; ++i) g[i] += o.grad[off + i];
      off += heights[k] * n;
    }
  });
}

Tensor slice_rows(const Tensor& a, std::size_t begin, std::size_t count) {
  require_matrix(a, "slice_rows");
  if (count == 0 || begin + count > a.rows())
    throw ShapeError("slice_rows: [" + std::to_string(begin) + ", " + std::to_string(begin + count) +
                     ") out of range for " + shape_str(a.shape()));
  const std::size_t n = a.cols();
  std::vector<double> out(a.data().begin() + static_cast<long>(begin * n),
                          a.data().begin() + static_cast<long>((begin + count) * n));
  return Tensor::make_op("slice_rows", {count, n}, std::move(out), {a}, [begin, n](Node& o) {
    double* g = grad_of(*o.inputs[0]);
    for (std::size_t i = 0; i < o.grad.size(); ++i) g[begin * n + i] += o.grad[i];
  });
}

Tensor slice_cols(const Tensor& a, std::size_t begin, std::size_t count) {
  require_matrix(a, "slice_cols");
  if (count == 0 || begin + count > a.cols())
    throw ShapeError("slice_cols: [" + std::to_string(begin) + ", " + std::to_string(begin + count) +
                     ") out of range for " + shape_str(a.shape()));
  const std::size_t m = a.rows(), n = a.cols();
  std::vector<double> out(m * count);
  const auto v = a.data();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < count; ++j) out[i * count + j] = v[i * n + begin + j];
  return Tensor::make_op("slice_cols", {m, count}, std::move(out), {a}, [m, n, begin, count](Node& o) {
    double* g = grad_of(*o.inputs[0]);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < count; ++j) g[i * n + begin + j] += o.grad[i * count + j];
  });
}

Tensor gather_rows(const Tensor& table, std::span<const long> indices) {
  require_matrix(table, "gather_rows");
  if (indices.empty()) throw ContractError("gather_rows: no indices");
  const std::size_t rows = table.rows(), n = table.cols();
  std::vector<long> idx(indices.begin(), indices.end());
  std::vector<double> out(idx.size() * n, 0.0);
  const auto v = table.data();
  for (std::size_t i = 0; i < idx.size(); ++i) {
    if (idx[i] < -1 || idx[i] >= static_cast<long>(rows))
      throw ContractError("gather_rows: index " + std::to_string(idx[i]) + " out of range for " +
                          std::to_string(rows) + " rows");
    if (idx[i] >= 0) std::copy_n(v.begin() + idx[i] * static_cast<long>(n), n, out.begin() + static_cast<long>(i * n));
  }
  return Tensor::make_op("gather_rows", {idx.size(), n}, std::move(out), {table}, [idx, n](Node& o) {
    double* g = grad_of(*o.inputs[0]);
    for (std::size_t i = 0; i < idx.size(); ++i) {
      if (idx[i] < 0) continue;
      double* gr = g + idx[i] * static_cast<long>(n);
      for (std::size_t j = 0; j < n; ++j) gr[j] += o.grad[i * n + j];
    }
  });
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
  require_matrix(x, "layer_norm");
  const std::size_t m = x.rows(), n = x.cols();
  if (gamma.size() != n || beta.size() != n) throw ShapeError("layer_norm: gain/bias width mismatch");
  const auto v = x.data();
  const auto gm = gamma.data();
  const auto bt = beta.data();
  std::vector<double> xhat(m * n), rstd(m), out(m * n);
  for (std::size_t i = 0; i < m; ++i) {
    double mean = 0.0;
    for (std::size_t j = 0; j < n; ++j) mean += v[i * n + j];
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t j = 0; j < n; ++j) var += (v[i * n + j] - mean) * (v[i * n + j] - mean);
    var /= static_cast<double>(n);
    rstd[i] = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < n; ++j) {
      xhat[i * n + j] = (v[i * n + j] - mean) * rstd[i];
      out[i * n + j] = xhat[i * n + j] * gm[j] + bt[j];
    }
  }
  return Tensor::make_op("layer_norm", {m, n}, std::move(out), {x, gamma, beta},
                         [m, n, xhat = std::move(xhat), rstd = std::move(rstd)](Node& o) {
                           const auto& gm = o.inputs[1]->value;
                           double* gx = grad_of(*o.inputs[0]);
                           double* gg = grad_of(*o.inputs[1]);
                           double* gb = grad_of(*o.inputs[2]);
                           std::vector<double> dxhat(n);
                           for (std::size_t i = 0; i < m; ++i) {
                             double s1 = 0.0, s2 = 0.0;
                             for (std::size_t j = 0; j < n; ++j) {
                               const double go = o.grad[i * n + j];
                               if (gg) gg[j] += go * xhat[i * n + j];
                               if (gb) gb[j] += go;
                               dxhat[j] = go * gm[j];
                               s1 += dxhat[j];
                               s2 += dxhat[j] * xhat[i * n + j];
                             }
                             if (!gx) continue;
                             const double inv_n = 1.0 / static_cast<double>(n);
                             for (std::size_t j = 0; j < n; ++j)
                               gx[i * n + j] += rstd[i] * (dxhat[j] - inv_n * s1 - xhat[i * n + j] * inv_n * s2);
                           }
                         });
}

Tensor segment_max(const Tensor& x, std::span<const std::size_t> offsets) {
  require_matrix(x, "segment_max");
  if (offsets.size() < 2 || offsets.front() != 0 || offsets.back() != x.rows())
    throw ContractError("segment_max: offsets must run from 0 to the row count");
  const std::size_t k = offsets.size() - 1, n = x.cols();
  const auto v = x.data();
  std::vector<double> out(k * n);
  std::vector<std::size_t> arg(k * n);
  for (std::size_t s = 0; s < k; ++s) {
    if (offsets[s + 1] <= offsets[s]) throw ContractError("segment_max: empty segment");
    for (std::size_t j = 0; j < n; ++j) {
      std::size_t best = offsets[s];
      for (std::size_t r = offsets[s] + 1; r < offsets[s + 1]; ++r)
        if (v[r * n + j] > v[best * n + j]) best = r;
      arg[s * n + j] = best;
      out[s * n + j] = v[best * n + j];
    }
  }
  return Tensor::make_op("segment_max", {k, n}, std::move(out), {x}, [n, arg = std::move(arg)](Node& o) {
    double* g = grad_of(*o.inputs[0]);
    for (std::size_t i = 0; i < arg.size(); ++i) g[arg[i] * n + i % n] += o.grad[i];
  });
}

Tensor dropout(const Tensor& x, double p, Rng& rng) {
  if (p < 0.0 || p >= 1.0) throw ContractError("dropout: rate must be in [0, 1)");
  if (p == 0.0) return x;
  std::bernoulli_distribution keep(1.0 - p);
  const double s = 1.0 / (1.0 - p);
  std::vector<double> mask(x.size());
  for (auto& m : mask) m = keep(rng) ? s : 0.0;
  std::vector<double> out(x.size());
  const auto v = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = v[i] * mask[i];
  return Tensor::make_op("dropout", x.shape(), std::move(out), {x}, [mask = std::move(mask)](Node& o) {
    double* g = grad_of(*o.inputs[0]);
    for (std::size_t i = 0; i < mask.size(); ++i) g[i] += o.grad[i] * mask[i];
  });
}

Tensor additive_scores(const Tensor& a, const Tensor& b, const Tensor& w) {
  require_matrix(a, "additive_scores");
  require_matrix(b, "additive_scores");
  const std::size_t n = a.rows(), m = b.rows(), k = a.cols();
  if (b.cols() != k || w.size() != k)
    throw ShapeError("additive_scores: " + shape_str(a.shape()) + ", " + shape_str(b.shape()) + ", " +
                     shape_str(w.shape()) + " do not agree");
  const auto av = a.data();
  const auto bv = b.data();
  const auto wv = w.data();
  std::vector<double> th(n * m * k);  // saved tanh activations
  std::vector<double> out(n * m, 0.0);
  for (std::size_t t = 0; t < n; ++t)
    for (std::size_t i = 0; i < m; ++i) {
      double s = 0.0;
      double* h = th.data() + (t * m + i) * k;
      for (std::size_t c = 0; c < k; ++c) {
        h[c] = std::tanh(av[t * k + c] + bv[i * k + c]);
        s += wv[c] * h[c];
      }
      out[t * m + i] = s;
    }
  return Tensor::make_op("additive_scores", {n, m}, std::move(out), {a, b, w},
                         [n, m, k, th = std::move(th)](Node& o) {
                           const auto& wv = o.inputs[2]->value;
                           double* ga = grad_of(*o.inputs[0]);
                           double* gb = grad_of(*o.inputs[1]);
                           double* gw = grad_of(*o.inputs[2]);
                           for (std::size_t t = 0; t < n; ++t)
                             for (std::size_t i = 0; i < m; ++i) {
                               const double go = o.grad[t * m + i];
                               if (go == 0.0) continue;
                               const double* h = th.data() + (t * m + i) * k;
                               for (std::size_t c = 0; c < k; ++c) {
                                 if (gw) gw[c] += go * h[c];
                                 const double d = go * wv[c] * (1.0 - h[c] * h[c]);
                                 if (ga) ga[t * k + c] += d;
                                 if (gb) gb[i * k + c] += d;
                               }
                             }
                         });
}

}  // namespace mner
