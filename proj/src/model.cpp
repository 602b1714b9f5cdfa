#include "mner/model.hpp"

#include <array>

#include "mner/error.hpp"
#include "mner/labels.hpp"

namespace mner {

namespace {

constexpr std::array<const char*, 8> kModelNames{
    "bert_crf",  "bert_cm_crf",   "bert_vam_crf",     "bert_cam_crf",
    "vbert_crf", "vbert_tam_crf", "bert_caption_crf", "vbert_caption_crf",
};

}  // namespace

std::string to_string(ModelKind m) { return kModelNames[static_cast<std::size_t>(m)]; }

ModelKind model_from_string(const std::string& s) {
  for (std::size_t i = 0; i < kModelNames.size(); ++i)
    if (s == kModelNames[i]) return static_cast<ModelKind>(i);
  std::string known;
  for (auto n : kModelNames) known += std::string(known.empty() ? "" : ", ") + n;
  throw ConfigError("unknown model '" + s + "' (known: " + known + ")");
}

ModelInputs model_inputs(ModelKind m) {
  switch (m) {
    case ModelKind::bert_cm_crf:
    case ModelKind::bert_vam_crf:
    case ModelKind::bert_cam_crf:
      return {FeatureKind::global, false};
    case ModelKind::vbert_tam_crf:
      return {FeatureKind::regional, false};
    case ModelKind::bert_caption_crf:
    case ModelKind::vbert_caption_crf:
      return {FeatureKind::none, true};
    default:
      return {FeatureKind::none, false};
  }
}

InputMode input_mode(ModelKind m) {
  if (m == ModelKind::vbert_tam_crf) return InputMode::text_regions;
  if (model_inputs(m).caption) return InputMode::text_caption;
  return InputMode::text;
}

Model::Model(ModelKind kind, const EncoderConfig& enc, const Vocab& vocab, std::size_t image_dim,
             std::uint64_t seed)
    : kind_(kind), image_dim_(image_dim) {
  enc.validate();
  const bool needs_image = model_inputs(kind).features != FeatureKind::none;
  if (needs_image && image_dim == 0) throw ConfigError(to_string(kind) + " needs image features of nonzero width");
  if (!needs_image) image_dim_ = 0;
  Rng rng(seed);
  const std::size_t d = enc.d_model;
  encoder_ = Encoder(store_, "enc", enc, vocab.num_tokens(), vocab.num_chars(),
                     kind == ModelKind::vbert_tam_crf ? image_dim_ : 0, rng);
  switch (kind) {
    case ModelKind::bert_cm_crf:
      cm_ = CmFusion(store_, "cm", d, enc.char_filters, image_dim_, rng);
      break;
    case ModelKind::bert_vam_crf:
      query_ = QueryLstm(store_, "vam.query", d, rng);
      vam_ = VamFusion(store_, "vam", d, image_dim_, rng);
      break;
    case ModelKind::bert_cam_crf:
      cam_ = CamFusion(store_, "cam", d, image_dim_, rng);
      break;
    default:
      break;
  }
  crf_ = make_crf(store_, "crf", d, kNumLabels, rng);
}

std::size_t row_length(const Batch& b, std::size_t row) {
  const auto mask = b.mask_row(row);
  std::size_t n = 0;
  for (std::size_t p = 0; p < mask.size(); ++p)
    if (mask[p]) n = p + 1;
  return n;
}

ModelOutput Model::forward(const Batch& b, std::size_t row, Rng* dropout_rng) const {
  const std::size_t length = row_length(b, row);
  const auto image = b.images.empty() ? nullptr : b.images[row];
  if (model_inputs(kind_).features != FeatureKind::none && !image)
    throw DataError(to_string(kind_) + ": batch row " + std::to_string(row) + " carries no image");

  FusionOutput fused;
  if (kind_ == ModelKind::vbert_tam_crf) {
    fused = fuse_tam(b, row, length, encoder_, dropout_rng);
  } else {
    const auto emb = encoder_.embed(b, row, length, dropout_rng);
    const auto hs = encoder_.encode(emb.x, b.mask_row(row).first(length), dropout_rng);
    std::vector<long> words;
    for (auto p : b.word_positions(row)) words.push_back(static_cast<long>(p));
    const Tensor hw = gather_rows(hs.h, words);
    switch (kind_) {
      case ModelKind::bert_cm_crf:
        fused = cm_(hw, gather_rows(emb.chars, words), *image);
        break;
      case ModelKind::bert_vam_crf: {
        const std::vector<std::uint8_t> all(words.size(), 1);
        fused = vam_(hw, query_(hw, all), *image);
        break;
      }
      case ModelKind::bert_cam_crf:
        fused = cam_(hw, *image);
        break;
      default:
        fused.m = hw;
    }
  }
  return {crf_emissions(fused.m, crf_), std::move(fused.diagnostics)};
}

Tensor Model::loss(const Batch& b, Rng* dropout_rng) const {
  if (b.rows == 0) throw ContractError("loss: empty batch");
  Tensor total;
  for (std::size_t r = 0; r < b.rows; ++r) {
    const auto gold = b.gold(r);
    const Tensor nll = crf_nll(forward(b, r, dropout_rng).emissions, crf_, gold);
    total = r == 0 ? nll : add(total, nll);
  }
  return scale(total, 1.0 / static_cast<double>(b.rows));
}

std::vector<int> Model::decode(const Batch& b, std::size_t row, bool constrain_bio) const {
  return viterbi(forward(b, row).emissions, crf_, constrain_bio).labels;
}

}  // namespace mner
