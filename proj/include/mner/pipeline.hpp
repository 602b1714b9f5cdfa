#pragma once

#include <filesystem>
#include <functional>
#include <iosfwd>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "mner/config.hpp"
#include "mner/corpus.hpp"
#include "mner/eval.hpp"
#include "mner/features.hpp"
#include "mner/model.hpp"
#include "mner/vocab.hpp"

namespace mner {

// Adam over every parameter of a store. Parameters whose gradient is
// entirely zero in a step are left untouched, moments included.
class Adam {
 public:
  explicit Adam(const OptimizerConfig& cfg) : cfg_(cfg) {}
  void step(ParamStore& store);
  std::size_t steps() const { return t_; }

 private:
  struct Moments {
    std::vector<double> m, v;
    std::size_t t = 0;
  };
  OptimizerConfig cfg_;
  std::size_t t_ = 0;
  std::map<std::string, Moments> state_;
};

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  double train_loss = 0.0;
  double dev_f1 = 0.0;
};

struct TrainingMeta {
  std::size_t epochs_run = 0;
  std::size_t best_epoch = 0;
  double best_dev_f1 = 0.0;
  std::size_t image_dim = 0;
  std::size_t train_sentences = 0;
  std::vector<EpochRecord> history;
};

struct Checkpoint {
  ExperimentConfig config;
  Vocab vocab;
  EntityInventory inventory;  // from the training gold, for the breakdown
  TrainingMeta meta;
  std::unique_ptr<Model> model;
};

struct Dataset {
  std::vector<Sentence> train, dev, test;
  FeatureMap features;
};

// Reads the corpora (test only when set) and, when the config needs them,
// the feature sidecar. DataError on missing files.
Dataset load_dataset(const ExperimentConfig& cfg);
FeatureMap load_feature_map(const std::filesystem::path& path, FeatureKind kind);

struct TrainHooks {
  std::function<void(const EpochRecord&)> on_epoch;
};

// Validates the config first, then trains with best-dev-F1 selection and
// early stopping once `patience` epochs (at least one) pass without
// improvement. NumericalError names the offending batch on a non-finite loss.
Checkpoint train_model(const ExperimentConfig& cfg, const std::vector<Sentence>& train,
                       const std::vector<Sentence>& dev, const FeatureMap& features, const TrainHooks& hooks = {});
Checkpoint train(const ExperimentConfig& cfg, const TrainHooks& hooks = {});

// Viterbi label indices per sentence, in input order.
std::vector<std::vector<int>> predict(const Checkpoint& ckpt, const std::vector<Sentence>& sentences,
                                      const FeatureMap& features);
EvalReport evaluate(const Checkpoint& ckpt, const std::vector<Sentence>& sentences, const FeatureMap& features);
// Features default to the checkpoint's configured sidecar.
EvalReport evaluate(const Checkpoint& ckpt, const std::filesystem::path& data,
                    const std::optional<std::filesystem::path>& features = std::nullopt);

// Writes one JSON Lines record per sentence with every diagnostic matrix.
void dump_attention(const Checkpoint& ckpt, const std::vector<Sentence>& sentences, const FeatureMap& features,
                    std::ostream& out);

// Binary format: "MNERCKPT", u32 version, u64 length + JSON header (config,
// vocab, inventory, metadata), u64 tensor count, then per tensor u32 name
// length + name, u32 rank, u64 dims, little-endian f64 values.
std::string serialize_checkpoint(const Checkpoint& ckpt);
Checkpoint deserialize_checkpoint(const std::string& bytes);
void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace mner
