#include "mner/crf.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "mner/labels.hpp"

namespace mner {

namespace {

using detail::Node;

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double logsumexp(const double* v, std::size_t n) {
  double m = kNegInf;
  for (std::size_t i = 0; i < n; ++i) m = std::max(m, v[i]);
  if (m == kNegInf) return kNegInf;
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += std::exp(v[i] - m);
  return m + std::log(s);
}

void check(const Tensor& e, const CrfParams& p, const char* op) {
  const std::size_t L = p.num_labels();
  if (e.rank() != 2 || e.rows() == 0 || e.cols() != L)
    throw ShapeError(std::string(op) + ": emissions " + shape_str(e.shape()) + " do not match " + std::to_string(L) +
                     " labels");
  if (p.transitions.shape() != Shape{L, L} || p.start.size() != L || p.end.size() != L)
    throw ShapeError(std::string(op) + ": CRF parameter shapes disagree");
}

// alpha[t][j]: log-sum of scores of prefixes ending in j at t (emission of t
// included). beta[t][j]: log-sum of suffix scores after t given y_t = j (end
// score included, emission of t excluded).
struct Lattice {
  std::size_t n = 0, L = 0;
  std::vector<double> alpha, beta;
  double log_z = 0.0;
};

Lattice forward_backward(const Tensor& e, const CrfParams& p) {
  Lattice lat;
  const std::size_t n = e.rows(), L = e.cols();
  lat.n = n;
  lat.L = L;
  const auto ev = e.data();
  const auto tv = p.transitions.data();
  const auto sv = p.start.data();
  const auto nv = p.end.data();
  lat.alpha.assign(n * L, 0.0);
  lat.beta.assign(n * L, 0.0);
  std::vector<double> buf(L);

  for (std::size_t j = 0; j < L; ++j) lat.alpha[j] = sv[j] + ev[j];
  for (std::size_t t = 1; t < n; ++t)
    for (std::size_t j = 0; j < L; ++j) {
      for (std::size_t i = 0; i < L; ++i) buf[i] = lat.alpha[(t - 1) * L + i] + tv[i * L + j];
      lat.alpha[t * L + j] = logsumexp(buf.data(), L) + ev[t * L + j];
    }
  for (std::size_t j = 0; j < L; ++j) lat.beta[(n - 1) * L + j] = nv[j];
  for (std::size_t t = n - 1; t-- > 0;)
    for (std::size_t i = 0; i < L; ++i) {
      for (std::size_t j = 0; j < L; ++j) buf[j] = tv[i * L + j] + ev[(t + 1) * L + j] + lat.beta[(t + 1) * L + j];
      lat.beta[t * L + i] = logsumexp(buf.data(), L);
    }
  for (std::size_t j = 0; j < L; ++j) buf[j] = lat.alpha[(n - 1) * L + j] + nv[j];
  lat.log_z = logsumexp(buf.data(), L);
  return lat;
}

}  // namespace

CrfParams make_crf(ParamStore& store, const std::string& prefix, std::size_t d_model, std::size_t num_labels,
                   Rng& rng) {
  CrfParams p;
  p.emission = store.create(prefix + ".emission", {d_model, num_labels}, Init::xavier, rng);
  p.transitions = store.create(prefix + ".transitions", {num_labels, num_labels}, Init::zeros, rng);
  p.start = store.create(prefix + ".start", {1, num_labels}, Init::zeros, rng);
  p.end = store.create(prefix + ".end", {1, num_labels}, Init::zeros, rng);
  return p;
}

Tensor crf_emissions(const Tensor& m, const CrfParams& p) { return matmul(m, p.emission); }

Tensor score_sequence(const Tensor& e, const CrfParams& p, std::span<const int> y) {
  check(e, p, "score_sequence");
  const std::size_t n = e.rows(), L = e.cols();
  if (y.size() != n)
    throw ContractError("score_sequence: " + std::to_string(y.size()) + " labels for " + std::to_string(n) + " positions");
  for (int l : y)
    if (l < 0 || static_cast<std::size_t>(l) >= L) throw ContractError("score_sequence: label " + std::to_string(l) + " out of range");
  std::vector<std::size_t> ys(y.begin(), y.end());
  const auto ev = e.data();
  const auto tv = p.transitions.data();
  double s = p.start.at(ys[0]) + p.end.at(ys[n - 1]);
  for (std::size_t t = 0; t < n; ++t) s += ev[t * L + ys[t]];
  for (std::size_t t = 0; t + 1 < n; ++t) s += tv[ys[t] * L + ys[t + 1]];

  return Tensor::make_op("crf_score", {1}, {s}, {e, p.transitions, p.start, p.end}, [ys = std::move(ys), L](Node& o) {
    const double g = o.grad[0];
    const std::size_t n = ys.size();
    if (double* ge = o.inputs[0]->requires_grad ? o.inputs[0]->ensure_grad().data() : nullptr)
      for (std::size_t t = 0; t < n; ++t) ge[t * L + ys[t]] += g;
    if (double* gt = o.inputs[1]->requires_grad ? o.inputs[1]->ensure_grad().data() : nullptr)
      for (std::size_t t = 0; t + 1 < n; ++t) gt[ys[t] * L + ys[t + 1]] += g;
    if (o.inputs[2]->requires_grad) o.inputs[2]->ensure_grad()[ys[0]] += g;
    if (o.inputs[3]->requires_grad) o.inputs[3]->ensure_grad()[ys[n - 1]] += g;
  });
}

Tensor log_partition(const Tensor& e, const CrfParams& p) {
  check(e, p, "log_partition");
  Lattice lat = forward_backward(e, p);
  const double log_z = lat.log_z;
  return Tensor::make_op(
      "crf_log_partition", {1}, {log_z}, {e, p.transitions, p.start, p.end}, [lat = std::move(lat)](Node& o) {
        const double g = o.grad[0];
        const std::size_t n = lat.n, L = lat.L;
        const auto& ev = o.inputs[0]->value;
        const auto& tv = o.inputs[1]->value;
        auto want = [&](int k) { return o.inputs[static_cast<std::size_t>(k)]->requires_grad; };
        // unary marginals feed emissions, start and end
        for (std::size_t t = 0; t < n; ++t)
          for (std::size_t j = 0; j < L; ++j) {
            const double m = g * std::exp(lat.alpha[t * L + j] + lat.beta[t * L + j] - lat.log_z);
            if (want(0)) o.inputs[0]->ensure_grad()[t * L + j] += m;
            if (t == 0 && want(2)) o.inputs[2]->ensure_grad()[j] += m;
            if (t == n - 1 && want(3)) o.inputs[3]->ensure_grad()[j] += m;
          }
        if (want(1)) {
          auto& gt = o.inputs[1]->ensure_grad();
          for (std::size_t t = 0; t + 1 < n; ++t)
            for (std::size_t i = 0; i < L; ++i)
              for (std::size_t j = 0; j < L; ++j)
                gt[i * L + j] += g * std::exp(lat.alpha[t * L + i] + tv[i * L + j] + ev[(t + 1) * L + j] +
                                              lat.beta[(t + 1) * L + j] - lat.log_z);
        }
      });
}

Tensor crf_nll(const Tensor& e, const CrfParams& p, std::span<const int> gold) {
  return sub(log_partition(e, p), score_sequence(e, p, gold));
}

std::vector<std::vector<double>> crf_marginals(const Tensor& e, const CrfParams& p) {
  check(e, p, "crf_marginals");
  const Lattice lat = forward_backward(e, p);
  std::vector<std::vector<double>> out(lat.n, std::vector<double>(lat.L));
  for (std::size_t t = 0; t < lat.n; ++t)
    for (std::size_t j = 0; j < lat.L; ++j)
      out[t][j] = std::exp(lat.alpha[t * lat.L + j] + lat.beta[t * lat.L + j] - lat.log_z);
  return out;
}

Decoded viterbi(const Tensor& e, const CrfParams& p, bool constrain_bio) {
  check(e, p, "viterbi");
  const std::size_t n = e.rows(), L = e.cols();
  if (constrain_bio && L != kNumLabels) throw ContractError("viterbi: BIO constraint needs the 9-label inventory");
  const auto ev = e.data();
  const auto tv = p.transitions.data();
  auto allowed = [&](int prev, std::size_t next) { return !constrain_bio || bio_allowed(prev, static_cast<int>(next)); };

  std::vector<double> delta(n * L);
  std::vector<std::size_t> back(n * L, 0);
  for (std::size_t j = 0; j < L; ++j) delta[j] = allowed(-1, j) ? p.start.at(j) + ev[j] : kNegInf;
  for (std::size_t t = 1; t < n; ++t)
    for (std::size_t j = 0; j < L; ++j) {
      double best = kNegInf;
      std::size_t arg = 0;
      for (std::size_t i = 0; i < L; ++i) {
        if (!allowed(static_cast<int>(i), j)) continue;
        const double s = delta[(t - 1) * L + i] + tv[i * L + j];
        if (s > best) {
          best = s;
          arg = i;
        }
      }
      delta[t * L + j] = best + ev[t * L + j];
      back[t * L + j] = arg;
    }
  double best = kNegInf;
  std::size_t last = 0;
  for (std::size_t j = 0; j < L; ++j) {
    const double s = delta[(n - 1) * L + j] + p.end.at(j);
    if (s > best) {
      best = s;
      last = j;
    }
  }
  Decoded d;
  d.score = best;
  d.labels.assign(n, 0);
  d.labels[n - 1] = static_cast<int>(last);
  for (std::size_t t = n - 1; t > 0; --t) d.labels[t - 1] = static_cast<int>(back[t * L + static_cast<std::size_t>(d.labels[t])]);
  return d;
}

}  // namespace mner
