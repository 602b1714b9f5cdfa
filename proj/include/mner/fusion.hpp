#pragma once

#include <map>
#include <span>
#include <string>

#include "mner/batch.hpp"
#include "mner/encoder.hpp"
#include "mner/features.hpp"
#include "mner/tensor.hpp"

namespace mner {

// Fused per-word representations plus every attention and gate matrix the
// module produced, keyed by role.
struct FusionOutput {
  Tensor m;  // n_words × d_model
  std::map<std::string, Tensor> diagnostics;
};

// Concatenation: word state, character features and the mean projected
// image region, each mapped to d_model/3, concatenated and mapped back.
class CmFusion {
 public:
  CmFusion() = default;
  CmFusion(ParamStore& store, const std::string& prefix, std::size_t d_model, std::size_t char_dim,
           std::size_t image_dim, Rng& rng);
  FusionOutput operator()(const Tensor& word_h, const Tensor& char_h, const ImageFeatures& image) const;

  std::size_t part_dim() const { return part_; }

 private:
  std::size_t part_ = 0;
  Tensor img_w_, img_b_, pw_, pw_b_, pc_, pc_b_, pv_, pv_b_, out_w_, out_b_;
};

// Visual attention over the 49 grid cells guided by a sentence query, then
// a per-token gate between the text state and the visual context.
//   s_i = w · tanh(W_q q + W_v v_i),  α = softmax(s),  c = Σ α_i (W_v' v_i)
//   g_t = σ(W_g [h_t ; c]),  m_t = g_t ∘ h_t + (1 − g_t) ∘ tanh(W_c c)
class VamFusion {
 public:
  VamFusion() = default;
  VamFusion(ParamStore& store, const std::string& prefix, std::size_t d_model, std::size_t image_dim, Rng& rng);
  FusionOutput operator()(const Tensor& h, const Tensor& query, const ImageFeatures& image) const;

 private:
  Tensor wq_, bq_, wv_, w_, vis_w_, vis_b_, gate_w_, gate_b_, c_w_, c_b_;
};

// Co-attention: word-guided visual attention, image-guided textual
// attention, gated fusion, then a residual filtration gate.
class CamFusion {
 public:
  CamFusion() = default;
  CamFusion(ParamStore& store, const std::string& prefix, std::size_t d_model, std::size_t image_dim, Rng& rng);
  FusionOutput operator()(const Tensor& h, const ImageFeatures& image) const;

  // Test fixture: pin the filtration gate at exactly 0.
  void force_filtration_closed(bool on) { closed_ = on; }

 private:
  Tensor ah_w_, av_w_, a_w_, vis_w_, vis_b_;
  Tensor bv_w_, bh_w_, b_w_;
  Tensor g_w_, g_b_, tv_w_, tv_b_;
  Tensor s_w_, s_b_, m_w_, m_b_;
  bool closed_ = false;
};

// Single-stream fusion: the encoder itself runs over text and region slots.
// `length` is the number of leading positions of the row to encode.
FusionOutput fuse_tam(const Batch& b, std::size_t row, std::size_t length, const Encoder& encoder,
                      Rng* dropout_rng = nullptr);

}  // namespace mner
