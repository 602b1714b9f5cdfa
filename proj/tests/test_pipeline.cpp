#include <gtest/gtest.h>

#include <cstring>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "mner/error.hpp"
#include "mner/experiments.hpp"
#include "mner/labels.hpp"
#include "mner/pipeline.hpp"
#include "mner/synthetic.hpp"

using namespace mner;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

ExperimentConfig tiny_config(ModelKind m) {
  ExperimentConfig c;
  c.model = m;
  c.name = to_string(m);
  const auto in = model_inputs(m);
  c.feature_kind = in.features;
  c.caption = in.caption;
  c.train = c.dev = c.test = "unused";
  if (in.features != FeatureKind::none) c.features = "unused";
  c.encoder.d_model = 8;
  c.encoder.n_layers = 1;
  c.encoder.n_heads = 2;
  c.encoder.d_ff = 16;
  c.encoder.char_dim = 4;
  c.encoder.char_filters = 4;
  c.encoder.dropout = 0.1;
  c.epochs = 3;
  c.batch_size = 8;
  c.optimizer.lr = 5e-3;
  return c;
}

const SynthCorpus& corpus() {
  static const SynthCorpus c = [] {
    SynthConfig s;
    s.seed = 3;
    s.n_train = 24;
    s.n_dev = 8;
    s.n_test = 12;
    s.feature_dim = 6;
    return generate_synthetic(s);
  }();
  return c;
}

const FeatureMap& features_for(ModelKind m) {
  static const FeatureMap none;
  switch (model_inputs(m).features) {
    case FeatureKind::global:
      return corpus().global;
    case FeatureKind::regional:
      return corpus().regional;
    default:
      return none;
  }
}

Checkpoint quick_train(ModelKind m, std::size_t epochs = 2) {
  auto c = tiny_config(m);
  c.epochs = epochs;
  return train_model(c, corpus().train, corpus().dev, features_for(m));
}

Batch first_batch(const Checkpoint& ck, ModelKind m) {
  return make_batches(corpus().test, features_for(m), ck.vocab, ck.config.batch_config(), 4).front();
}

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() / ("mner_test_" + std::to_string(::testing::UnitTest::GetInstance()->random_seed()) +
                                        "_" + ::testing::UnitTest::GetInstance()->current_test_info()->name());
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

}  // namespace

// ---- config ---------------------------------------------------------------

TEST(Config, ParsesFullDocument) {
  const json j = json::parse(R"({
    "name": "cap", "model": "bert_caption_crf",
    "encoder": {"d_model": 32, "n_layers": 1, "n_heads": 2, "d_ff": 64, "max_len": 48,
                "char_dim": 8, "char_filters": 8, "dropout": 0.0},
    "optimizer": {"lr": 0.002, "beta1": 0.8, "beta2": 0.99, "eps": 1e-7, "weight_decay": 0.01},
    "epochs": 7, "batch_size": 4, "seed": 99, "patience": 2, "target_dev_f1": 0.95,
    "train": "data/train.txt", "dev": "/abs/dev.txt", "test": "test.txt",
    "feature_kind": "none", "caption": true, "constrain_bio": false,
    "min_count": 2, "lowercase": true, "caption_cap": 8, "max_word_chars": 10
  })");
  const auto c = config_from_json(j, "/base");
  EXPECT_EQ(c.name, "cap");
  EXPECT_EQ(c.model, ModelKind::bert_caption_crf);
  EXPECT_EQ(c.encoder.d_model, 32u);
  EXPECT_EQ(c.encoder.max_len, 48u);
  EXPECT_EQ(c.optimizer.beta2, 0.99);
  EXPECT_EQ(c.optimizer.weight_decay, 0.01);
  EXPECT_EQ(c.seed, 99u);
  EXPECT_EQ(c.target_dev_f1.value(), 0.95);
  EXPECT_EQ(c.train, fs::path("/base/data/train.txt"));
  EXPECT_EQ(c.dev, fs::path("/abs/dev.txt"));
  EXPECT_FALSE(c.constrain_bio);
  EXPECT_TRUE(c.lowercase);
  EXPECT_NO_THROW(c.validate());

  // to_json is a fixed point of the parser
  const auto again = config_from_json(c.to_json());
  EXPECT_EQ(again.to_json(), c.to_json());
}

TEST(Config, Defaults) {
  const auto c = config_from_json(json::parse(R"({"model": "bert_vam_crf"})"));
  EXPECT_EQ(c.name, "bert_vam_crf");
  EXPECT_EQ(c.feature_kind, FeatureKind::global);
  EXPECT_FALSE(c.caption);
  EXPECT_EQ(c.optimizer.lr, 1e-3);
  EXPECT_EQ(c.optimizer.beta1, 0.9);
  EXPECT_EQ(c.optimizer.beta2, 0.999);
  EXPECT_EQ(c.optimizer.eps, 1e-8);
  EXPECT_EQ(c.optimizer.weight_decay, 0.0);
  EXPECT_EQ(c.patience, 10u);
  EXPECT_TRUE(c.constrain_bio);
}

TEST(Config, RejectsUnknownKeysAndBadTypes) {
  const char* bad[] = {
      R"({"model": "bert_crf", "learning_rate": 0.1})",
      R"({"model": "bert_crf", "encoder": {"hidden": 8}})",
      R"({"model": "bert_crf", "optimizer": {"momentum": 0.9}})",
      R"({"model": "bert_crf", "epochs": -1})",
      R"({"model": "bert_crf", "epochs": 2.5})",
      R"({"model": "bert_crf", "caption": "yes"})",
      R"({"model": "bert_crf", "train": 3})",
      R"({"model": "gpt_crf"})",
      R"({"model": "bert_crf", "feature_kind": "pixels"})",
      R"({"epochs": 3})",
      R"([1, 2])",
  };
  for (const char* text : bad) EXPECT_THROW(config_from_json(json::parse(text)), ConfigError) << text;
}

TEST(Config, LoadResolvesRelativeToFile) {
  TempDir dir;
  fs::create_directories(dir.path / "cfg");
  std::ofstream(dir.path / "cfg" / "a.json") << R"({"model": "bert_crf", "train": "../data/t.txt"})";
  const auto c = load_config(dir.path / "cfg" / "a.json");
  EXPECT_EQ(c.train, dir.path / "cfg" / ".." / "data" / "t.txt");
  std::ofstream(dir.path / "cfg" / "b.json") << "{not json";
  EXPECT_THROW(load_config(dir.path / "cfg" / "b.json"), ConfigError);
  EXPECT_THROW(load_config(dir.path / "missing.json"), ConfigError);
}

TEST(Config, PairingTableOverCrossProduct) {
  std::size_t valid = 0;
  for (auto m : kAllModels)
    for (auto kind : {FeatureKind::none, FeatureKind::global, FeatureKind::regional})
      for (bool caption : {false, true}) {
        auto c = tiny_config(m);
        c.feature_kind = kind;
        c.caption = caption;
        c.features = kind == FeatureKind::none ? fs::path() : fs::path("f.jsonl");
        const auto need = model_inputs(m);
        const bool ok = kind == need.features && caption == need.caption;
        if (ok) {
          EXPECT_NO_THROW(c.validate()) << to_string(m);
          ++valid;
        } else {
          EXPECT_THROW(c.validate(), ConfigError) << to_string(m) << " " << to_string(kind) << " " << caption;
          // and before any training happens
          EXPECT_THROW(train_model(c, corpus().train, corpus().dev, features_for(m)), ConfigError);
        }
      }
  EXPECT_EQ(valid, 8u);
}

TEST(Config, RangeChecks) {
  auto base = tiny_config(ModelKind::bert_crf);
  auto c = base;
  c.epochs = 0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = base;
  c.optimizer.beta1 = 1.0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = base;
  c.train.clear();
  EXPECT_THROW(c.validate(), ConfigError);
  c = tiny_config(ModelKind::bert_cm_crf);
  c.features.clear();
  EXPECT_THROW(c.validate(), ConfigError);
  c = base;
  c.encoder.n_heads = 3;
  EXPECT_THROW(c.validate(), ConfigError);
}

// ---- model ------------------------------------------------------------------

TEST(Model, ForwardShapesAndDiagnostics) {
  for (auto m : kAllModels) {
    const auto c = tiny_config(m);
    const auto& feats = features_for(m);
    const Vocab vocab = build_vocab(corpus().train, {1, false, c.caption});
    const std::size_t dim = feats.empty() ? 0 : feats.begin()->second->dim;
    Model model(m, c.encoder, vocab, dim, 5);
    const auto batch = make_batches(corpus().test, feats, vocab, c.batch_config(), 4).front();
    for (std::size_t r = 0; r < batch.rows; ++r) {
      const auto out = model.forward(batch, r);
      const auto n = corpus().test[batch.source[r]].tokens.size();
      EXPECT_EQ(out.emissions.shape(), (Shape{n, kNumLabels})) << to_string(m);
      std::set<std::string> keys;
      for (const auto& [k, _] : out.diagnostics) keys.insert(k);
      switch (m) {
        case ModelKind::bert_vam_crf:
          EXPECT_EQ(keys, (std::set<std::string>{"gate", "region_attention"}));
          break;
        case ModelKind::bert_cam_crf:
          EXPECT_EQ(keys,
                    (std::set<std::string>{"filtration_gate", "fusion_gate", "textual_attention", "visual_attention"}));
          break;
        case ModelKind::vbert_tam_crf:
          EXPECT_EQ(keys, (std::set<std::string>{"layer0.head0.text_to_region", "layer0.head1.text_to_region"}));
          break;
        default:
          EXPECT_TRUE(keys.empty()) << to_string(m);
      }
    }
  }
}

TEST(Model, VbertSharesBertArchitecture) {
  const auto c = tiny_config(ModelKind::bert_crf);
  const Vocab vocab = build_vocab(corpus().train, {});
  Model a(ModelKind::bert_crf, c.encoder, vocab, 0, 1), b(ModelKind::vbert_crf, c.encoder, vocab, 0, 1);
  EXPECT_EQ(a.params().names(), b.params().names());
}

TEST(Model, NamesRoundTrip) {
  for (auto m : kAllModels) EXPECT_EQ(model_from_string(to_string(m)), m);
  EXPECT_THROW(model_from_string("bert"), ConfigError);
}

// ---- optimizer ----------------------------------------------------------------

TEST(Adam, FirstStepMatchesClosedForm) {
  ParamStore store;
  Rng rng(1);
  Tensor w = store.create("w", {1, 3}, Init::zeros, rng);
  w.mutable_data()[0] = 1.0;
  w.mutable_grad()[0] = 0.5;
  w.mutable_grad()[1] = -2.0;
  w.mutable_grad()[2] = 0.0;
  OptimizerConfig cfg;
  cfg.lr = 0.1;
  Adam adam(cfg);
  adam.step(store);
  // m̂ = g and v̂ = g² after one step, so the update is lr·g/(|g|+eps).
  EXPECT_NEAR(w.at(0), 1.0 - 0.1 * 0.5 / (0.5 + 1e-8), 1e-15);
  EXPECT_NEAR(w.at(1), 0.1 * 2.0 / (2.0 + 1e-8), 1e-15);
  EXPECT_EQ(w.at(2), 0.0);
}

TEST(Adam, ZeroGradientParamsStayBitwiseIdentical) {
  const auto c = tiny_config(ModelKind::bert_crf);
  const Vocab vocab = build_vocab(corpus().train, {});
  Model model(ModelKind::bert_crf, c.encoder, vocab, 0, 7);
  const auto batch = make_batches(corpus().train, {}, vocab, c.batch_config(), 4).front();
  model.params().zero_grad();
  backward(model.loss(batch));
  std::map<std::string, std::vector<double>> before;
  std::set<std::string> frozen;
  for (const auto& n : model.params().names()) {
    const Tensor& t = model.params().get(n);
    before[n].assign(t.data().begin(), t.data().end());
    const auto g = t.has_grad() ? t.grad() : std::span<const double>();
    if (std::all_of(g.begin(), g.end(), [](double x) { return x == 0.0; })) frozen.insert(n);
  }
  Adam adam(c.optimizer);
  adam.step(model.params());
  std::size_t moved = 0;
  for (const auto& n : model.params().names()) {
    const auto d = model.params().get(n).data();
    const std::vector<double> after(d.begin(), d.end());
    if (frozen.count(n))
      EXPECT_EQ(after, before[n]) << n;
    else
      moved += after != before[n];
  }
  EXPECT_GT(moved, 0u);

  // a frozen row inside a partly-used table: word embeddings of tokens not in the batch
  const Tensor& word = model.params().get("enc.word");
  std::set<long> used;
  for (long t : batch.tokens) used.insert(t);
  for (std::size_t id = 0; id < vocab.num_tokens(); ++id) {
    if (used.count(long(id))) continue;
    const auto g = word.grad();
    for (std::size_t k = 0; k < word.cols(); ++k) EXPECT_EQ(g[id * word.cols() + k], 0.0);
    break;
  }
}

// ---- training -----------------------------------------------------------------

TEST(Train, DeterministicUnderSeed) {
  const auto a = quick_train(ModelKind::bert_vam_crf, 3);
  const auto b = quick_train(ModelKind::bert_vam_crf, 3);
  ASSERT_EQ(a.meta.history.size(), b.meta.history.size());
  for (std::size_t i = 0; i < a.meta.history.size(); ++i) {
    EXPECT_EQ(a.meta.history[i].dev_f1, b.meta.history[i].dev_f1);
    EXPECT_EQ(a.meta.history[i].train_loss, b.meta.history[i].train_loss);
  }
  EXPECT_EQ(serialize_checkpoint(a), serialize_checkpoint(b));
  EXPECT_EQ(evaluate(a, corpus().test, features_for(ModelKind::bert_vam_crf)).to_json(),
            evaluate(b, corpus().test, features_for(ModelKind::bert_vam_crf)).to_json());

  auto c = tiny_config(ModelKind::bert_vam_crf);
  c.epochs = 3;
  c.seed = 2;
  const auto other = train_model(c, corpus().train, corpus().dev, features_for(ModelKind::bert_vam_crf));
  EXPECT_NE(serialize_checkpoint(a), serialize_checkpoint(other));
}

TEST(Train, PatienceZeroStopsAtFirstNonImprovingEpoch) {
  for (std::uint64_t seed = 1; seed <= 4; ++seed) {
    auto c = tiny_config(ModelKind::bert_crf);
    c.epochs = 15;
    c.patience = 0;
    c.seed = seed;
    c.optimizer.lr = 1e-4;  // slow enough that improvements stall early
    const auto ck = train_model(c, corpus().train, corpus().dev, {});
    const auto& h = ck.meta.history;
    double best = -1.0;
    std::size_t expected = h.size();
    for (std::size_t i = 0; i < h.size(); ++i) {
      if (h[i].dev_f1 > best) {
        best = h[i].dev_f1;
      } else {
        expected = i + 1;
        break;
      }
    }
    EXPECT_EQ(ck.meta.epochs_run, expected);
    EXPECT_EQ(h.size(), expected);
    EXPECT_EQ(ck.meta.best_dev_f1, best);
  }
}

TEST(Train, KeepsBestDevEpoch) {
  auto c = tiny_config(ModelKind::bert_crf);
  c.epochs = 6;
  const auto ck = train_model(c, corpus().train, corpus().dev, {});
  double best = -1.0;
  std::size_t best_epoch = 0;
  for (const auto& e : ck.meta.history)
    if (e.dev_f1 > best) {
      best = e.dev_f1;
      best_epoch = e.epoch;
    }
  EXPECT_EQ(ck.meta.best_epoch, best_epoch);
  // the restored parameters reproduce the best dev score
  EXPECT_EQ(evaluate(ck, corpus().dev, {}).overall.f1(), best);
}

TEST(Train, TargetDevF1StopsEarly) {
  auto c = tiny_config(ModelKind::bert_crf);
  c.epochs = 40;
  c.patience = 40;
  c.target_dev_f1 = 1e-9;  // any nonzero F1
  c.optimizer.lr = 2e-2;
  const auto ck = train_model(c, corpus().train, corpus().dev, {});
  ASSERT_FALSE(ck.meta.history.empty());
  EXPECT_LT(ck.meta.history.size(), 40u);
  EXPECT_GT(ck.meta.history.back().dev_f1, 0.0);
  for (std::size_t i = 0; i + 1 < ck.meta.history.size(); ++i) EXPECT_EQ(ck.meta.history[i].dev_f1, 0.0);
}

TEST(Train, NonFiniteLossNamesTheBatch) {
  const bool was = finite_checks_enabled();
  set_finite_checks(false);
  auto c = tiny_config(ModelKind::bert_crf);
  c.optimizer.lr = 1e200;
  c.encoder.dropout = 0.0;
  try {
    train_model(c, corpus().train, corpus().dev, {});
    ADD_FAILURE() << "expected a numerical abort";
  } catch (const NumericalError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("batch"), std::string::npos) << msg;
    EXPECT_NE(msg.find("epoch 1"), std::string::npos) << msg;
  }
  set_finite_checks(was);
}

TEST(Train, EmptyOrMissingData) {
  auto c = tiny_config(ModelKind::bert_crf);
  EXPECT_THROW(train_model(c, {}, corpus().dev, {}), DataError);
  auto cm = tiny_config(ModelKind::bert_cm_crf);
  EXPECT_THROW(train_model(cm, corpus().train, corpus().dev, {}), DataError);
}

// ---- checkpoint -----------------------------------------------------------------

TEST(Checkpoint, RoundTripIsBitwise) {
  for (auto m : kAllModels) {
    const auto ck = quick_train(m, 1);
    const auto bytes = serialize_checkpoint(ck);
    const auto back = deserialize_checkpoint(bytes);
    EXPECT_EQ(serialize_checkpoint(back), bytes) << to_string(m);
    EXPECT_TRUE(back.vocab == ck.vocab);
    EXPECT_EQ(back.inventory, ck.inventory);
    EXPECT_EQ(back.meta.history.size(), ck.meta.history.size());
    const auto batch = first_batch(ck, m);
    for (std::size_t r = 0; r < batch.rows; ++r) {
      const Tensor ea = ck.model->forward(batch, r).emissions;
      const Tensor eb = back.model->forward(batch, r).emissions;
      const auto a = ea.data(), b = eb.data();
      ASSERT_EQ(a.size(), b.size());
      EXPECT_EQ(std::memcmp(a.data(), b.data(), a.size() * sizeof(double)), 0) << to_string(m);
    }
  }
}

TEST(Checkpoint, FileRoundTripAndCorruption) {
  TempDir dir;
  const auto ck = quick_train(ModelKind::bert_crf, 1);
  save_checkpoint(ck, dir.path / "m.ckpt");
  const auto back = load_checkpoint(dir.path / "m.ckpt");
  EXPECT_EQ(serialize_checkpoint(back), serialize_checkpoint(ck));

  const auto bytes = serialize_checkpoint(ck);
  auto bad_magic = bytes;
  bad_magic[0] = 'X';
  EXPECT_THROW(deserialize_checkpoint(bad_magic), FormatError);
  auto bad_version = bytes;
  bad_version[8] = 9;
  EXPECT_THROW(deserialize_checkpoint(bad_version), FormatError);
  EXPECT_THROW(deserialize_checkpoint(bytes.substr(0, bytes.size() - 3)), FormatError);
  EXPECT_THROW(deserialize_checkpoint(bytes + "x"), FormatError);
  EXPECT_THROW(deserialize_checkpoint(bytes.substr(0, 30)), FormatError);
  EXPECT_THROW(load_checkpoint(dir.path / "nope.ckpt"), DataError);
}

// ---- evaluation ---------------------------------------------------------------------

TEST(Evaluate, OverallRecomputableFromPerType) {
  const auto ck = quick_train(ModelKind::bert_crf, 3);
  const auto r = evaluate(ck, corpus().test, {});
  Prf sum;
  for (const auto& t : r.per_type) sum += t;
  EXPECT_EQ(sum.correct, r.overall.correct);
  EXPECT_EQ(sum.predicted, r.overall.predicted);
  EXPECT_EQ(sum.gold, r.overall.gold);
  EXPECT_EQ(r.sentences, corpus().test.size());
}

TEST(Evaluate, AllOutsideModelHasZeroRecall) {
  auto ck = quick_train(ModelKind::bert_crf, 1);
  const auto& crf = ck.model->crf();
  Tensor emission = crf.emission, start = crf.start, trans = crf.transitions;
  for (auto& v : emission.mutable_data()) v = 0.0;
  for (auto& v : trans.mutable_data()) v = 0.0;
  for (auto& v : start.mutable_data()) v = 0.0;
  start.mutable_data()[0] = 5.0;
  trans.mutable_data()[0] = 5.0;  // O -> O
  const auto r = evaluate(ck, corpus().test, {});
  EXPECT_EQ(r.overall.predicted, 0u);
  EXPECT_GT(r.overall.gold, 0u);
  EXPECT_EQ(r.overall.recall(), 0.0);
}

TEST(Evaluate, FromFilesAndMissingSidecar) {
  TempDir dir;
  write_synthetic(corpus(), dir.path);
  const auto ck = quick_train(ModelKind::bert_cm_crf, 1);
  const auto direct = evaluate(ck, corpus().test, corpus().global);
  const auto from_files = evaluate(ck, dir.path / "test.txt", dir.path / "global.jsonl");
  EXPECT_EQ(direct.to_json(), from_files.to_json());
  EXPECT_THROW(evaluate(ck, dir.path / "test.txt", dir.path / "absent.jsonl"), DataError);
  EXPECT_THROW(evaluate(ck, dir.path / "absent.txt", dir.path / "global.jsonl"), DataError);
}

TEST(Evaluate, TrainFromConfigFile) {
  TempDir dir;
  write_synthetic(corpus(), dir.path / "data");
  std::ofstream(dir.path / "cfg.json") << R"({
    "model": "bert_caption_crf", "train": "data/train.txt", "dev": "data/dev.txt", "test": "data/test.txt",
    "encoder": {"d_model": 8, "n_layers": 1, "n_heads": 2, "d_ff": 16, "char_dim": 4, "char_filters": 4},
    "epochs": 1, "seed": 4
  })";
  const auto ck = train(load_config(dir.path / "cfg.json"));
  EXPECT_EQ(ck.meta.epochs_run, 1u);
  EXPECT_EQ(ck.meta.train_sentences, corpus().train.size());
  const auto r = evaluate(ck, dir.path / "data" / "test.txt");
  EXPECT_EQ(r.sentences, corpus().test.size());
}

// ---- attention dump -----------------------------------------------------------------

TEST(AttentionDump, RecordsPerModel) {
  for (auto m : {ModelKind::bert_crf, ModelKind::bert_vam_crf, ModelKind::bert_cam_crf}) {
    const auto ck = quick_train(m, 1);
    std::ostringstream os;
    dump_attention(ck, corpus().test, features_for(m), os);
    std::istringstream in(os.str());
    std::string line;
    std::size_t count = 0;
    while (std::getline(in, line)) {
      const auto rec = json::parse(line);
      const auto& s = corpus().test[count];
      EXPECT_EQ(rec["sentence_id"], s.id);
      EXPECT_EQ(rec["tokens"].size(), s.tokens.size());
      EXPECT_EQ(rec["pred"].size(), s.tokens.size());
      const auto& d = rec["diagnostics"];
      if (m == ModelKind::bert_crf) EXPECT_TRUE(d.empty());
      if (m == ModelKind::bert_vam_crf) {
        ASSERT_EQ(d["region_attention"].size(), 1u);
        ASSERT_EQ(d["region_attention"][0].size(), kGlobalRegions);
        double sum = 0.0;
        for (const auto& v : d["region_attention"][0]) sum += v.get<double>();
        EXPECT_NEAR(sum, 1.0, 1e-6);
      }
      if (m == ModelKind::bert_cam_crf) {
        EXPECT_EQ(d["visual_attention"].size(), s.tokens.size());
        EXPECT_EQ(d["visual_attention"][0].size(), kGlobalRegions);
        EXPECT_EQ(d["textual_attention"].size(), s.tokens.size());
        EXPECT_EQ(d["textual_attention"][0].size(), s.tokens.size());
      }
      ++count;
    }
    EXPECT_EQ(count, corpus().test.size());
  }
}

// ---- matrix and ablations -----------------------------------------------------------------

TEST(Matrix, SingleConfigGivesOneRow) {
  const Dataset data{corpus().train, corpus().dev, corpus().test, {}};
  auto c = tiny_config(ModelKind::bert_crf);
  c.epochs = 1;
  const auto rows = run_matrix({c}, data);
  std::ostringstream os;
  write_matrix_csv(os, rows);
  const auto text = os.str();
  EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 2);
  EXPECT_TRUE(rows[0].ok);
  EXPECT_FALSE(rows[0].p_value.has_value());
}

TEST(Matrix, VbertBaselineWhenNoBertCrf) {
  const Dataset data{corpus().train, corpus().dev, corpus().test, {}};
  auto cap = tiny_config(ModelKind::vbert_caption_crf);
  cap.epochs = 1;
  auto base = tiny_config(ModelKind::vbert_crf);
  base.epochs = 1;
  const auto rows = run_matrix({cap, base}, data);
  ASSERT_TRUE(rows[0].p_value.has_value());
  EXPECT_FALSE(rows[1].p_value.has_value());
}

TEST(Matrix, FailingMemberIsRecordedAndMatrixContinues) {
  const Dataset data{corpus().train, corpus().dev, corpus().test, {}};
  auto base = tiny_config(ModelKind::bert_crf);
  base.epochs = 1;
  auto broken = tiny_config(ModelKind::bert_cm_crf);
  broken.features = "/nonexistent/global.jsonl";
  auto cap = tiny_config(ModelKind::bert_caption_crf);
  cap.epochs = 1;
  const auto rows = run_matrix({base, broken, cap}, data);
  ASSERT_EQ(rows.size(), 3u);
  EXPECT_TRUE(rows[0].ok);
  EXPECT_FALSE(rows[1].ok);
  EXPECT_NE(rows[1].error.find("not found"), std::string::npos);
  EXPECT_TRUE(rows[2].ok);
  ASSERT_TRUE(rows[2].p_value.has_value());
  EXPECT_GT(*rows[2].p_value, 0.0);
  EXPECT_LE(*rows[2].p_value, 1.0);
  std::ostringstream os;
  write_matrix_csv(os, rows);
  EXPECT_NE(os.str().find("bert_cm_crf,error"), std::string::npos);
}

TEST(Matrix, ConfigsMustShareData) {
  auto a = tiny_config(ModelKind::bert_crf), b = tiny_config(ModelKind::bert_caption_crf);
  b.dev = "elsewhere";
  EXPECT_THROW(run_matrix({a, b}), ConfigError);
}

TEST(Ablation, LengthAndSize) {
  const Dataset data{corpus().train, corpus().dev, corpus().test, {}};
  auto c = tiny_config(ModelKind::bert_crf);
  c.epochs = 1;
  const auto rows = length_ablation({c}, data);
  ASSERT_EQ(rows.size(), 4u);
  std::size_t total = 0;
  for (const auto& r : rows) total += r.sentences;
  EXPECT_EQ(total, corpus().test.size());

  const auto pts = size_ablation({c}, data, {0.5, 1.0}, {1, 2});
  ASSERT_EQ(pts.size(), 4u);
  EXPECT_EQ(pts[0].train_sentences, corpus().train.size() / 2);
  EXPECT_EQ(pts[1].train_sentences, corpus().train.size());
  EXPECT_EQ(pts[2].seed, 2u);
  EXPECT_THROW(size_ablation({c}, data, {0.01}, {1}), ConfigError);
}

TEST(Ablation, ConfigDirectory) {
  TempDir dir;
  std::ofstream(dir.path / "b.json") << R"({"model": "bert_caption_crf"})";
  std::ofstream(dir.path / "a.json") << R"({"model": "bert_crf"})";
  std::ofstream(dir.path / "notes.txt") << "ignored";
  const auto cs = load_config_dir(dir.path);
  ASSERT_EQ(cs.size(), 2u);
  EXPECT_EQ(cs[0].model, ModelKind::bert_crf);
  EXPECT_THROW(load_config_dir(dir.path / "none"), ConfigError);
}
