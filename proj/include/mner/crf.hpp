#pragma once

#include <span>
#include <string>
#include <vector>

#include "mner/tensor.hpp"

namespace mner {

// Linear-chain CRF. transitions[i][j] scores label j following label i;
// start and end score the first and last label.
struct CrfParams {
  Tensor emission;     // d_model × L
  Tensor transitions;  // L × L
  Tensor start;        // 1 × L
  Tensor end;          // 1 × L

  std::size_t num_labels() const { return transitions.rows(); }
};

// Registers "<prefix>.emission", ".transitions", ".start", ".end".
CrfParams make_crf(ParamStore& store, const std::string& prefix, std::size_t d_model, std::size_t num_labels,
                   Rng& rng);

// Per-position label scores for fused representations M (n × d_model).
Tensor crf_emissions(const Tensor& m, const CrfParams& p);

Tensor score_sequence(const Tensor& e, const CrfParams& p, std::span<const int> y);
// log Σ_y exp(score_sequence(e, p, y)) by the forward recursion. The
// backward pass uses forward-backward marginals.
Tensor log_partition(const Tensor& e, const CrfParams& p);
Tensor crf_nll(const Tensor& e, const CrfParams& p, std::span<const int> gold);

struct Decoded {
  std::vector<int> labels;
  double score = 0.0;
};

// Max-product decoding. Ties go to the lower label index, resolved from the
// last position backwards: among best-scoring paths the one with the lowest
// final label wins, then the lowest label before it, and so on. With
// constrain_bio, transitions that BIO forbids (O -> I-X, B-X -> I-Y, a
// leading I-X) are excluded.
Decoded viterbi(const Tensor& e, const CrfParams& p, bool constrain_bio);

// Per-position label marginals (n × L), from the same recursions.
std::vector<std::vector<double>> crf_marginals(const Tensor& e, const CrfParams& p);

}  // namespace mner
