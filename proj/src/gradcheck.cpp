#include <algorithm>
#include <cmath>
#include <cstring>

#include "mner/tensor.hpp"

namespace mner {

namespace {

double eval_scalar(const std::function<Tensor()>& f) {
  Tensor y = f();
  if (y.size() != 1) throw ContractError("grad_check: function must return a scalar, got " + shape_str(y.shape()));
  return y.item();
}

}  // namespace

double grad_check(const std::function<Tensor()>& f, std::span<Tensor> params, double eps) {
  if (!(eps > 0.0 && eps <= 1e-2)) throw ContractError("grad_check: eps must lie in (0, 1e-2]");
  const double first = eval_scalar(f);
  const double second = eval_scalar(f);
  if (std::memcmp(&first, &second, sizeof(double)) != 0)
    throw ContractError("grad_check: function is not deterministic");

  for (auto& p : params) {
    if (!p.requires_grad()) throw ContractError("grad_check: parameter does not require grad");
    p.zero_grad();
  }
  backward(f());

  double worst = 0.0;
  for (auto& p : params) {
    const std::vector<double> analytic(p.grad().begin(), p.grad().end());
    auto data = p.mutable_data();
    for (std::size_t i = 0; i < data.size(); ++i) {
      const double saved = data[i];
      data[i] = saved + eps;
      const double up = eval_scalar(f);
      data[i] = saved - eps;
      const double down = eval_scalar(f);
      data[i] = saved;
      const double numeric = (up - down) / (2.0 * eps);
      const double denom = std::max({1.0, std::abs(analytic[i]), std::abs(numeric)});
      worst = std::max(worst, std::abs(analytic[i] - numeric) / denom);
    }
    p.zero_grad();
  }
  return worst;
}

double grad_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& x, double eps) {
  Tensor leaf = x;
  return grad_check([&] { return f(leaf); }, std::span<Tensor>(&leaf, 1), eps);
}

}  // namespace mner
