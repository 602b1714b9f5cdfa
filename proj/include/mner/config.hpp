#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include <nlohmann/json_fwd.hpp>

#include "mner/encoder.hpp"
#include "mner/model.hpp"

namespace mner {

struct OptimizerConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;
};

struct ExperimentConfig {
  std::string name;  // defaults to the model name
  ModelKind model = ModelKind::bert_crf;
  EncoderConfig encoder;
  OptimizerConfig optimizer;
  std::size_t epochs = 50;
  std::size_t batch_size = 16;
  std::uint64_t seed = 1;
  std::size_t patience = 10;
  std::optional<double> target_dev_f1;  // stop as soon as dev F1 reaches this

  std::filesystem::path train, dev, test, features;
  FeatureKind feature_kind = FeatureKind::none;
  bool caption = false;
  bool constrain_bio = true;

  std::size_t min_count = 1;
  bool lowercase = false;
  std::size_t caption_cap = 16;
  std::size_t max_word_chars = 16;

  // Config-only checks: model/input pairing, ranges, required paths.
  // Throws ConfigError.
  void validate() const;
  BatchConfig batch_config() const;

  nlohmann::json to_json() const;
};

// Unknown keys and wrong types are ConfigErrors. Relative paths resolve
// against base_dir. feature_kind and caption default to what the model
// consumes.
ExperimentConfig config_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
ExperimentConfig load_config(const std::filesystem::path& path);

}  // namespace mner
