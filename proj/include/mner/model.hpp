#pragma once

#include <map>
#include <string>
#include <vector>

#include "mner/batch.hpp"
#include "mner/crf.hpp"
#include "mner/encoder.hpp"
#include "mner/fusion.hpp"
#include "mner/vocab.hpp"

namespace mner {

enum class ModelKind {
  bert_crf,
  bert_cm_crf,
  bert_vam_crf,
  bert_cam_crf,
  vbert_crf,
  vbert_tam_crf,
  bert_caption_crf,
  vbert_caption_crf,
};

inline constexpr ModelKind kAllModels[] = {
    ModelKind::bert_crf,  ModelKind::bert_cm_crf,   ModelKind::bert_vam_crf,     ModelKind::bert_cam_crf,
    ModelKind::vbert_crf, ModelKind::vbert_tam_crf, ModelKind::bert_caption_crf, ModelKind::vbert_caption_crf,
};

std::string to_string(ModelKind m);
ModelKind model_from_string(const std::string& s);  // ConfigError on unknown names

// The inputs a model consumes. A config must match these exactly.
struct ModelInputs {
  FeatureKind features = FeatureKind::none;
  bool caption = false;
};
ModelInputs model_inputs(ModelKind m);
InputMode input_mode(ModelKind m);

struct ModelOutput {
  Tensor emissions;  // n_words × num_labels
  std::map<std::string, Tensor> diagnostics;
};

// Encoder, optional fusion module and CRF head. vbert_* models share the
// bert_* architecture; the single-stream region path lives in the encoder.
class Model {
 public:
  Model(ModelKind kind, const EncoderConfig& enc, const Vocab& vocab, std::size_t image_dim, std::uint64_t seed);

  Model(const Model&) = delete;
  Model& operator=(const Model&) = delete;
  Model(Model&&) = default;
  Model& operator=(Model&&) = default;

  ModelKind kind() const { return kind_; }
  std::size_t image_dim() const { return image_dim_; }
  ParamStore& params() { return store_; }
  const ParamStore& params() const { return store_; }
  const CrfParams& crf() const { return crf_; }

  // One batch row, trimmed to its real positions. A non-null rng turns on
  // dropout.
  ModelOutput forward(const Batch& b, std::size_t row, Rng* dropout_rng = nullptr) const;
  // Mean CRF negative log-likelihood over the batch rows.
  Tensor loss(const Batch& b, Rng* dropout_rng = nullptr) const;
  std::vector<int> decode(const Batch& b, std::size_t row, bool constrain_bio) const;

  CamFusion& cam() { return cam_; }

 private:
  ModelKind kind_;
  std::size_t image_dim_ = 0;
  ParamStore store_;
  Encoder encoder_;
  CmFusion cm_;
  VamFusion vam_;
  QueryLstm query_;
  CamFusion cam_;
  CrfParams crf_;
};

// Leading positions of a batch row up to its last real one.
std::size_t row_length(const Batch& b, std::size_t row);

}  // namespace mner
