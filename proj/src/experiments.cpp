#include "mner/experiments.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <ostream>

#include <nlohmann/json.hpp>

#include "mner/error.hpp"
#include "mner/labels.hpp"

namespace mner {

namespace {

std::vector<std::vector<int>> gold_labels(const std::vector<Sentence>& sentences) {
  std::vector<std::vector<int>> out;
  for (const auto& s : sentences) {
    std::vector<int> ids;
    for (const auto& l : s.labels) ids.push_back(*label_index(l));
    out.push_back(std::move(ids));
  }
  return out;
}

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  return buf;
}

std::string bucket_f1(const Prf& p) { return p.gold ? num(p.f1()) : ""; }

void check_shared_data(const std::vector<ExperimentConfig>& configs) {
  if (configs.empty()) throw ConfigError("no experiment configs given");
  for (const auto& c : configs)
    if (c.train != configs[0].train || c.dev != configs[0].dev || c.test != configs[0].test)
      throw ConfigError("config '" + c.name + "' names different data splits than '" + configs[0].name + "'");
  if (configs[0].test.empty()) throw ConfigError("config '" + configs[0].name + "' has no test split");
}

// Shared corpora; each member loads its own sidecar.
Dataset load_shared(const std::vector<ExperimentConfig>& configs) {
  check_shared_data(configs);
  Dataset d;
  d.train = parse_corpus(configs[0].train).sentences;
  d.dev = parse_corpus(configs[0].dev).sentences;
  d.test = parse_corpus(configs[0].test).sentences;
  return d;
}

FeatureMap features_for(const ExperimentConfig& c, const Dataset& data) {
  if (c.feature_kind == FeatureKind::none) return {};
  if (!data.features.empty()) {
    const auto& first = *data.features.begin()->second;
    if (first.kind == c.feature_kind) return data.features;
  }
  return load_feature_map(c.features, c.feature_kind);
}

}  // namespace

std::vector<MatrixRow> run_matrix(const std::vector<ExperimentConfig>& configs, const Dataset& data,
                                  const MatrixOptions& opts) {
  if (configs.empty()) throw ConfigError("no experiment configs given");
  if (data.test.empty()) throw DataError("matrix needs a non-empty test split");
  if (opts.out_dir) std::filesystem::create_directories(*opts.out_dir);
  const auto gold = gold_labels(data.test);
  std::vector<MatrixRow> rows;
  for (const auto& cfg : configs) {
    MatrixRow row;
    row.name = cfg.name;
    row.model = cfg.model;
    try {
      const auto features = features_for(cfg, data);
      const auto ck = train_model(cfg, data.train, data.dev, features, opts.hooks);
      row.predictions = predict(ck, data.test, features);
      row.report = evaluate_predictions(data.test, row.predictions, ck.inventory);
      row.best_epoch = ck.meta.best_epoch;
      row.ok = true;
      if (opts.out_dir) {
        save_checkpoint(ck, *opts.out_dir / (cfg.name + ".ckpt"));
        std::ofstream(*opts.out_dir / (cfg.name + ".report.json")) << row.report.to_json().dump(2) << '\n';
      }
    } catch (const Error& e) {
      row.error = e.what();
    }
    if (opts.on_member) opts.on_member(row);
    rows.push_back(std::move(row));
  }
  auto first_ok = [&](ModelKind kind) {
    return std::find_if(rows.begin(), rows.end(), [&](const MatrixRow& r) { return r.ok && r.model == kind; });
  };
  auto base = first_ok(ModelKind::bert_crf);
  if (base == rows.end()) base = first_ok(ModelKind::vbert_crf);
  if (base != rows.end())
    for (auto& r : rows)
      if (r.ok && &r != &*base)
        r.p_value = significance(r.predictions, base->predictions, gold, opts.resamples, opts.bootstrap_seed);
  return rows;
}

std::vector<MatrixRow> run_matrix(const std::vector<ExperimentConfig>& configs, const MatrixOptions& opts) {
  for (const auto& c : configs) c.validate();
  return run_matrix(configs, load_shared(configs), opts);
}

void write_matrix_csv(std::ostream& out, const std::vector<MatrixRow>& rows) {
  out << "name,model,status,precision,recall,f1,seen_f1,unseen_f1,multi_type_f1,single_type_f1,"
         "p_vs_baseline,best_epoch,error\n";
  for (const auto& r : rows) {
    out << csv_escape(r.name) << ',' << to_string(r.model) << ',' << (r.ok ? "ok" : "error") << ',';
    if (r.ok) {
      const auto& o = r.report.overall;
      const auto& b = r.report.buckets;
      out << num(o.precision()) << ',' << num(o.recall()) << ',' << num(o.f1()) << ',' << bucket_f1(b.seen) << ','
          << bucket_f1(b.unseen) << ',' << bucket_f1(b.multi) << ',' << bucket_f1(b.single) << ','
          << (r.p_value ? num(*r.p_value) : "") << ',' << r.best_epoch << ",\n";
    } else {
      out << ",,,,,,,,," << csv_escape(r.error) << '\n';
    }
  }
}

std::vector<ExperimentConfig> load_config_dir(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw ConfigError("config directory not found: " + dir.string());
  std::vector<std::filesystem::path> files;
  for (const auto& e : std::filesystem::directory_iterator(dir))
    if (e.is_regular_file() && e.path().extension() == ".json") files.push_back(e.path());
  std::sort(files.begin(), files.end());
  if (files.empty()) throw ConfigError("no *.json configs in " + dir.string());
  std::vector<ExperimentConfig> out;
  for (const auto& f : files) out.push_back(load_config(f));
  return out;
}

std::vector<LengthRow> length_ablation(const std::vector<ExperimentConfig>& configs, const Dataset& data,
                                       const std::vector<std::size_t>& edges) {
  if (data.test.empty()) throw DataError("length ablation needs a non-empty test split");
  std::map<std::string, std::vector<std::vector<int>>> preds;
  for (const auto& cfg : configs) {
    const auto features = features_for(cfg, data);
    const auto ck = train_model(cfg, data.train, data.dev, features);
    preds[cfg.name] = predict(ck, data.test, features);
  }
  return length_buckets(data.test, preds, edges);
}

std::vector<CurvePoint> size_ablation(const std::vector<ExperimentConfig>& configs, const Dataset& data,
                                      const std::vector<double>& fractions, const std::vector<std::uint64_t>& seeds) {
  if (data.test.empty()) throw DataError("size ablation needs a non-empty test split");
  if (seeds.empty()) throw ConfigError("size ablation needs at least one seed");
  std::vector<CurvePoint> out;
  for (auto seed : seeds) {
    const auto subsets = nested_subsets(data.train.size(), fractions, seed);
    for (std::size_t f = 0; f < fractions.size(); ++f) {
      std::vector<Sentence> train;
      for (auto i : subsets[f]) train.push_back(data.train[i]);
      for (auto cfg : configs) {
        cfg.seed = seed;
        const auto features = features_for(cfg, data);
        const auto ck = train_model(cfg, train, data.dev, features);
        out.push_back({cfg.name, fractions[f], train.size(), seed, evaluate(ck, data.test, features).overall.f1()});
      }
    }
  }
  return out;
}

}  // namespace mner
