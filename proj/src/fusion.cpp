#include "mner/fusion.hpp"

#include <vector>

#include "mner/error.hpp"

namespace mner {

namespace {

void require_global(const ImageFeatures& image, const char* who) {
  if (image.kind != FeatureKind::global || image.regions != kGlobalRegions)
    throw ContractError(std::string(who) + ": needs global (7x7 grid) image features, got " + to_string(image.kind));
}

// Repeats a 1×k row n times.
Tensor repeat_row(const Tensor& row, std::size_t n) { return gather_rows(row, std::vector<long>(n, 0)); }

}  // namespace

CmFusion::CmFusion(ParamStore& store, const std::string& prefix, std::size_t d_model, std::size_t char_dim,
                   std::size_t image_dim, Rng& rng)
    : part_(std::max<std::size_t>(1, d_model / 3)) {
  auto p = [&](const std::string& n) { return prefix + "." + n; };
  img_w_ = store.create(p("image.w"), {image_dim, d_model}, Init::xavier, rng);
  img_b_ = store.create(p("image.b"), {1, d_model}, Init::zeros, rng);
  pw_ = store.create(p("word.w"), {d_model, part_}, Init::xavier, rng);
  pw_b_ = store.create(p("word.b"), {1, part_}, Init::zeros, rng);
  pc_ = store.create(p("char.w"), {char_dim, part_}, Init::xavier, rng);
  pc_b_ = store.create(p("char.b"), {1, part_}, Init::zeros, rng);
  pv_ = store.create(p("visual.w"), {d_model, part_}, Init::xavier, rng);
  pv_b_ = store.create(p("visual.b"), {1, part_}, Init::zeros, rng);
  out_w_ = store.create(p("out.w"), {3 * part_, d_model}, Init::xavier, rng);
  out_b_ = store.create(p("out.b"), {1, d_model}, Init::zeros, rng);
}

FusionOutput CmFusion::operator()(const Tensor& word_h, const Tensor& char_h, const ImageFeatures& image) const {
  require_global(image, "fuse_cm");
  if (word_h.rows() != char_h.rows()) throw ShapeError("fuse_cm: word and char rows differ");
  const std::size_t n = word_h.rows();
  const Tensor summary = mean_rows(affine(image.tensor(), img_w_, img_b_));
  const Tensor v = repeat_row(affine(summary, pv_, pv_b_), n);
  const Tensor joint = concat_cols({affine(word_h, pw_, pw_b_), affine(char_h, pc_, pc_b_), v});
  return {affine(joint, out_w_, out_b_), {}};
}

VamFusion::VamFusion(ParamStore& store, const std::string& prefix, std::size_t d_model, std::size_t image_dim,
                     Rng& rng) {
  auto p = [&](const std::string& n) { return prefix + "." + n; };
  wq_ = store.create(p("att.wq"), {d_model, d_model}, Init::xavier, rng);
  bq_ = store.create(p("att.bq"), {1, d_model}, Init::zeros, rng);
  wv_ = store.create(p("att.wv"), {image_dim, d_model}, Init::xavier, rng);
  w_ = store.create(p("att.w"), {d_model, 1}, Init::xavier, rng);
  vis_w_ = store.create(p("visual.w"), {image_dim, d_model}, Init::xavier, rng);
  vis_b_ = store.create(p("visual.b"), {1, d_model}, Init::zeros, rng);
  gate_w_ = store.create(p("gate.w"), {2 * d_model, d_model}, Init::xavier, rng);
  gate_b_ = store.create(p("gate.b"), {1, d_model}, Init::zeros, rng);
  c_w_ = store.create(p("context.w"), {d_model, d_model}, Init::xavier, rng);
  c_b_ = store.create(p("context.b"), {1, d_model}, Init::zeros, rng);
}

FusionOutput VamFusion::operator()(const Tensor& h, const Tensor& query, const ImageFeatures& image) const {
  require_global(image, "fuse_vam");
  if (query.rows() != 1) throw ShapeError("fuse_vam: query must be a single row");
  const std::size_t n = h.rows();
  const Tensor v = image.tensor();
  const Tensor alpha = softmax(additive_scores(affine(query, wq_, bq_), matmul(v, wv_), w_), 1);
  const Tensor c = repeat_row(matmul(alpha, affine(v, vis_w_, vis_b_)), n);
  const Tensor g = sigmoid(affine(concat_cols({h, c}), gate_w_, gate_b_));
  const Tensor m = add(mul(g, h), mul(one_minus(g), tanh(affine(c, c_w_, c_b_))));
  return {m, {{"region_attention", alpha}, {"gate", g}}};
}

CamFusion::CamFusion(ParamStore& store, const std::string& prefix, std::size_t d_model, std::size_t image_dim,
                     Rng& rng) {
  auto p = [&](const std::string& n) { return prefix + "." + n; };
  const std::size_t d = d_model;
  ah_w_ = store.create(p("visual_att.wh"), {d, d}, Init::xavier, rng);
  av_w_ = store.create(p("visual_att.wv"), {image_dim, d}, Init::xavier, rng);
  a_w_ = store.create(p("visual_att.w"), {d, 1}, Init::xavier, rng);
  vis_w_ = store.create(p("visual.w"), {image_dim, d}, Init::xavier, rng);
  vis_b_ = store.create(p("visual.b"), {1, d}, Init::zeros, rng);
  bv_w_ = store.create(p("text_att.wv"), {d, d}, Init::xavier, rng);
  bh_w_ = store.create(p("text_att.wh"), {d, d}, Init::xavier, rng);
  b_w_ = store.create(p("text_att.w"), {d, 1}, Init::xavier, rng);
  g_w_ = store.create(p("fusion_gate.w"), {2 * d, d}, Init::xavier, rng);
  g_b_ = store.create(p("fusion_gate.b"), {1, d}, Init::zeros, rng);
  tv_w_ = store.create(p("fusion_visual.w"), {d, d}, Init::xavier, rng);
  tv_b_ = store.create(p("fusion_visual.b"), {1, d}, Init::zeros, rng);
  s_w_ = store.create(p("filtration_gate.w"), {2 * d, d}, Init::xavier, rng);
  s_b_ = store.create(p("filtration_gate.b"), {1, d}, Init::zeros, rng);
  m_w_ = store.create(p("filtration_out.w"), {d, d}, Init::xavier, rng);
  m_b_ = store.create(p("filtration_out.b"), {1, d}, Init::zeros, rng);
}

FusionOutput CamFusion::operator()(const Tensor& h, const ImageFeatures& image) const {
  require_global(image, "fuse_cam");
  const Tensor v = image.tensor();
  // word-guided visual attention
  const Tensor alpha = softmax(additive_scores(matmul(h, ah_w_), matmul(v, av_w_), a_w_), 1);
  const Tensor v_hat = matmul(alpha, affine(v, vis_w_, vis_b_));
  // image-guided textual attention
  const Tensor beta = softmax(additive_scores(matmul(v_hat, bv_w_), matmul(h, bh_w_), b_w_), 1);
  const Tensor h_hat = matmul(beta, h);
  // gated multimodal fusion
  const Tensor g = sigmoid(affine(concat_cols({h_hat, v_hat}), g_w_, g_b_));
  const Tensor m = add(mul(g, tanh(affine(v_hat, tv_w_, tv_b_))), mul(one_minus(g), h_hat));
  // filtration gate; residual so s = 0 gives back h
  const Tensor s = closed_ ? Tensor::zeros(h.shape()) : sigmoid(affine(concat_cols({h, m}), s_w_, s_b_));
  const Tensor u = add(h, mul(s, affine(m, m_w_, m_b_)));
  return {u,
          {{"visual_attention", alpha}, {"textual_attention", beta}, {"fusion_gate", g}, {"filtration_gate", s}}};
}

FusionOutput fuse_tam(const Batch& b, std::size_t row, std::size_t length, const Encoder& encoder, Rng* dropout_rng) {
  std::vector<long> words, regions;
  const auto labels = b.label_row(row);
  const auto segments = b.segment_row(row);
  const auto mask = b.mask_row(row);
  for (std::size_t p = 0; p < length; ++p) {
    if (labels[p] != kIgnoreLabel) words.push_back(static_cast<long>(p));
    if (segments[p] == kSegmentRegion) regions.push_back(static_cast<long>(p));
  }
  if (regions.empty()) throw ContractError("fuse_tam: batch row has no region slots");
  if (words.empty()) throw ContractError("fuse_tam: batch row has no word positions");

  const auto hs = encoder.encode(encoder.embed(b, row, length, dropout_rng).x, mask.first(length), dropout_rng);
  FusionOutput out;
  out.m = gather_rows(hs.h, words);
  for (std::size_t l = 0; l < hs.attention.size(); ++l)
    for (std::size_t k = 0; k < hs.attention[l].size(); ++k) {
      const auto& a = hs.attention[l][k];
      std::vector<double> block;
      block.reserve(words.size() * regions.size());
      for (long w : words)
        for (long r : regions) block.push_back(a.at(static_cast<std::size_t>(w), static_cast<std::size_t>(r)));
      out.diagnostics["layer" + std::to_string(l) + ".head" + std::to_string(k) + ".text_to_region"] =
          Tensor::from({words.size(), regions.size()}, std::move(block));
    }
  return out;
}

}  // namespace mner
