// mner: train, evaluate and analyse multimodal NER models.
//
// Exit codes: 0 success, 1 internal error, 2 config error, 3 data error,
// 4 numerical abort.

#include <cstdio>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "mner/error.hpp"
#include "mner/experiments.hpp"
#include "mner/pipeline.hpp"
#include "mner/synthetic.hpp"

namespace fs = std::filesystem;
using namespace mner;

namespace {

void log_epoch(const EpochRecord& e) {
  std::fprintf(stderr, "epoch %3zu  loss %.4f  dev F1 %.4f\n", e.epoch, e.train_loss, e.dev_f1);
}

std::ofstream open_out(const fs::path& p) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(p);
  if (!out) throw DataError("cannot write " + p.string());
  return out;
}

int run_train(const fs::path& config_path, const std::optional<fs::path>& out_path) {
  const auto cfg = load_config(config_path);
  cfg.validate();
  const auto data = load_dataset(cfg);
  auto ck = train_model(cfg, data.train, data.dev, data.features, {log_epoch});
  const fs::path out = out_path.value_or(fs::path(cfg.name + ".ckpt"));
  save_checkpoint(ck, out);
  std::fprintf(stderr, "best dev F1 %.4f at epoch %zu; checkpoint written to %s\n", ck.meta.best_dev_f1,
               ck.meta.best_epoch, out.string().c_str());
  if (!data.test.empty()) std::cout << evaluate(ck, data.test, data.features).to_text();
  return 0;
}

int run_evaluate(const fs::path& ckpt_path, const fs::path& data, const std::optional<fs::path>& features,
                 bool as_json) {
  const auto ck = load_checkpoint(ckpt_path);
  const auto report = evaluate(ck, data, features);
  if (as_json)
    std::cout << report.to_json().dump(2) << '\n';
  else
    std::cout << report.to_text();
  return 0;
}

int run_matrix_cmd(const fs::path& dir, const fs::path& out) {
  const auto configs = load_config_dir(dir);
  MatrixOptions opts;
  opts.out_dir = out;
  opts.hooks.on_epoch = log_epoch;
  opts.on_member = [](const MatrixRow& r) {
    if (r.ok)
      std::fprintf(stderr, "%s: test F1 %.4f\n", r.name.c_str(), r.report.overall.f1());
    else
      std::fprintf(stderr, "%s: failed: %s\n", r.name.c_str(), r.error.c_str());
  };
  const auto rows = run_matrix(configs, opts);
  auto csv = open_out(out / "matrix.csv");
  write_matrix_csv(csv, rows);
  write_matrix_csv(std::cout, rows);
  return 0;
}

int run_ablate(const std::string& mode, const std::vector<fs::path>& config_paths, const fs::path& out,
               const std::vector<double>& fractions, const std::vector<std::uint64_t>& seeds,
               const std::vector<std::size_t>& edges) {
  std::vector<ExperimentConfig> configs;
  for (const auto& p : config_paths) {
    configs.push_back(load_config(p));
    configs.back().validate();
  }
  Dataset data = load_dataset(configs.front());
  if (data.test.empty()) throw ConfigError("ablation needs a test split in " + config_paths.front().string());
  auto csv = open_out(out);
  if (mode == "length") {
    write_length_csv(csv, length_ablation(configs, data, edges));
  } else {
    write_curve_csv(csv, size_ablation(configs, data, fractions, seeds));
  }
  std::fprintf(stderr, "wrote %s\n", out.string().c_str());
  return 0;
}

int run_dump(const fs::path& ckpt_path, const fs::path& data, const std::optional<fs::path>& features,
             const fs::path& out) {
  const auto ck = load_checkpoint(ckpt_path);
  const auto sentences = parse_corpus(data).sentences;
  const auto fmap = load_feature_map(features.value_or(ck.config.features), ck.config.feature_kind);
  auto file = open_out(out);
  dump_attention(ck, sentences, fmap, file);
  return 0;
}

int run_synth(const SynthConfig& cfg, const fs::path& out) {
  const auto corpus = generate_synthetic(cfg);
  write_synthetic(corpus, out);
  std::fprintf(stderr, "wrote %zu/%zu/%zu sentences to %s\n", corpus.train.size(), corpus.dev.size(),
               corpus.test.size(), out.string().c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multimodal named entity recognition: training, evaluation and ablations"};
  app.require_subcommand(1);

  fs::path config, ckpt, data, out, dir;
  std::optional<fs::path> features, train_out;
  bool as_json = false;

  auto* train = app.add_subcommand("train", "Train one configuration and save the best-dev checkpoint");
  train->add_option("--config", config, "Experiment config (JSON)")->required();
  train->add_option("--out", train_out, "Checkpoint path (default: <name>.ckpt)");

  auto* eval = app.add_subcommand("evaluate", "Score a checkpoint on a labeled corpus");
  eval->add_option("--checkpoint", ckpt)->required();
  eval->add_option("--data", data)->required();
  eval->add_option("--features", features, "Feature sidecar (default: the one the model was trained with)");
  eval->add_flag("--json", as_json, "Print the report as JSON");

  auto* matrix = app.add_subcommand("matrix", "Train and compare every config in a directory");
  matrix->add_option("--configs", dir, "Directory of *.json configs")->required();
  matrix->add_option("--out", out, "Output directory")->required();

  std::string mode;
  std::vector<fs::path> ablate_configs;
  std::vector<double> fractions{0.1, 0.25, 0.5, 1.0};
  std::vector<std::uint64_t> seeds{1};
  std::vector<std::size_t> edges{8, 16, 24};
  auto* ablate = app.add_subcommand("ablate", "Sentence-length or training-size analysis");
  ablate->add_option("--mode", mode)->required()->check(CLI::IsMember({"length", "size"}));
  ablate->add_option("--config", ablate_configs, "Experiment config; repeat to compare models")->required();
  ablate->add_option("--out", out, "CSV output")->required();
  ablate->add_option("--fractions", fractions, "Training fractions (size mode)")->delimiter(',');
  ablate->add_option("--seeds", seeds, "Sampling seeds (size mode)")->delimiter(',');
  ablate->add_option("--edges", edges, "Length bucket edges (length mode)")->delimiter(',');

  auto* dump = app.add_subcommand("dump-attention", "Write attention and gate matrices as JSON Lines");
  dump->add_option("--checkpoint", ckpt)->required();
  dump->add_option("--data", data)->required();
  dump->add_option("--features", features);
  dump->add_option("--out", out)->required();

  SynthConfig synth_cfg;
  std::string signal = "caption";
  auto* synth = app.add_subcommand("synth", "Generate the synthetic multimodal corpus");
  synth->add_option("--seed", synth_cfg.seed)->required();
  synth->add_option("--signal", signal)->check(CLI::IsMember({"none", "caption", "region"}));
  synth->add_option("--out", out)->required();
  synth->add_option("--train", synth_cfg.n_train);
  synth->add_option("--dev", synth_cfg.n_dev);
  synth->add_option("--test", synth_cfg.n_test);
  synth->add_option("--feature-dim", synth_cfg.feature_dim);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*train) return run_train(config, train_out);
    if (*eval) return run_evaluate(ckpt, data, features, as_json);
    if (*matrix) return run_matrix_cmd(dir, out);
    if (*ablate) return run_ablate(mode, ablate_configs, out, fractions, seeds, edges);
    if (*dump) return run_dump(ckpt, data, features, out);
    if (*synth) {
      synth_cfg.signal = signal_from_string(signal);
      return run_synth(synth_cfg, out);
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return 3;
  } catch (const NumericalError& e) {
    std::cerr << "numerical error: " << e.what() << '\n';
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
