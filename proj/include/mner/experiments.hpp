#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "mner/pipeline.hpp"

namespace mner {

struct MatrixRow {
  std::string name;
  ModelKind model = ModelKind::bert_crf;
  bool ok = false;
  std::string error;  // set when the member failed
  EvalReport report;
  std::size_t best_epoch = 0;
  std::optional<double> p_value;  // against the baseline member
  std::vector<std::vector<int>> predictions;
};

struct MatrixOptions {
  std::size_t resamples = 1000;
  std::uint64_t bootstrap_seed = 1;
  // When set, each member's checkpoint and report are written here.
  std::optional<std::filesystem::path> out_dir;
  TrainHooks hooks;
  std::function<void(const MatrixRow&)> on_member;
};

// Trains and evaluates every config on the shared test split. A member that
// throws is recorded and the matrix moves on. The first successful bert_crf
// member is the significance baseline, or failing that the first vbert_crf.
std::vector<MatrixRow> run_matrix(const std::vector<ExperimentConfig>& configs, const Dataset& data,
                                  const MatrixOptions& opts = {});
// Loads the data named by the configs, which must all agree on it.
std::vector<MatrixRow> run_matrix(const std::vector<ExperimentConfig>& configs, const MatrixOptions& opts = {});
void write_matrix_csv(std::ostream& out, const std::vector<MatrixRow>& rows);

// Every *.json file in a directory, by file name.
std::vector<ExperimentConfig> load_config_dir(const std::filesystem::path& dir);

// Trains each config once and scores its test predictions per length bucket.
std::vector<LengthRow> length_ablation(const std::vector<ExperimentConfig>& configs, const Dataset& data,
                                       const std::vector<std::size_t>& edges = {8, 16, 24});

// For each seed, trains each config on nested fractions of the training
// split (sampled with that seed) and reports test F1.
std::vector<CurvePoint> size_ablation(const std::vector<ExperimentConfig>& configs, const Dataset& data,
                                      const std::vector<double>& fractions, const std::vector<std::uint64_t>& seeds);

}  // namespace mner
