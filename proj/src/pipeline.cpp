#include "mner/pipeline.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <sstream>

#include <nlohmann/json.hpp>

#include "mner/batch.hpp"
#include "mner/error.hpp"

namespace mner {

using nlohmann::json;

namespace {

constexpr char kMagic[8] = {'M', 'N', 'E', 'R', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kVersion = 1;
constexpr std::size_t kEvalBatch = 32;

std::uint64_t mix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Independent streams for init, shuffling and dropout.
std::uint64_t stream_seed(std::uint64_t seed, std::uint64_t stream) { return mix(mix(seed) ^ stream); }

std::vector<std::vector<double>> snapshot(const ParamStore& store) {
  std::vector<std::vector<double>> out;
  for (const auto& n : store.names()) {
    const auto d = store.get(n).data();
    out.emplace_back(d.begin(), d.end());
  }
  return out;
}

void restore(ParamStore& store, const std::vector<std::vector<double>>& values) {
  const auto names = store.names();
  for (std::size_t i = 0; i < names.size(); ++i) {
    auto d = store.get(names[i]).mutable_data();
    std::copy(values[i].begin(), values[i].end(), d.begin());
  }
}

// ---- little-endian byte IO ----

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}
void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

class Reader {
 public:
  explicit Reader(const std::string& s) : s_(s) {}
  std::uint64_t u(int bytes) {
    need(static_cast<std::size_t>(bytes));
    std::uint64_t v = 0;
    for (int i = 0; i < bytes; ++i) v |= std::uint64_t(static_cast<unsigned char>(s_[pos_ + std::size_t(i)])) << (8 * i);
    pos_ += static_cast<std::size_t>(bytes);
    return v;
  }
  std::string bytes(std::size_t n) {
    need(n);
    std::string out = s_.substr(pos_, n);
    pos_ += n;
    return out;
  }
  bool done() const { return pos_ == s_.size(); }

 private:
  void need(std::size_t n) const {
    if (s_.size() - pos_ < n) throw FormatError("checkpoint is truncated");
  }
  const std::string& s_;
  std::size_t pos_ = 0;
};

json meta_json(const TrainingMeta& m) {
  json hist = json::array();
  for (const auto& e : m.history)
    hist.push_back({{"epoch", e.epoch}, {"train_loss", e.train_loss}, {"dev_f1", e.dev_f1}});
  return {{"epochs_run", m.epochs_run},       {"best_epoch", m.best_epoch}, {"best_dev_f1", m.best_dev_f1},
          {"image_dim", m.image_dim},         {"train_sentences", m.train_sentences}, {"history", hist}};
}

TrainingMeta meta_from_json(const json& j) {
  TrainingMeta m;
  m.epochs_run = j.at("epochs_run").get<std::size_t>();
  m.best_epoch = j.at("best_epoch").get<std::size_t>();
  m.best_dev_f1 = j.at("best_dev_f1").get<double>();
  m.image_dim = j.at("image_dim").get<std::size_t>();
  m.train_sentences = j.at("train_sentences").get<std::size_t>();
  for (const auto& e : j.at("history"))
    m.history.push_back({e.at("epoch").get<std::size_t>(), e.at("train_loss").get<double>(),
                         e.at("dev_f1").get<double>()});
  return m;
}

std::vector<Sentence> read_corpus(const std::filesystem::path& p, const char* what) {
  if (!std::filesystem::exists(p)) throw DataError(std::string(what) + " corpus not found: " + p.string());
  return parse_corpus(p).sentences;
}

}  // namespace

void Adam::step(ParamStore& store) {
  ++t_;
  for (const auto& name : store.names()) {
    Tensor& p = store.get(name);
    if (!p.has_grad()) continue;
    const auto g = p.grad();
    if (std::all_of(g.begin(), g.end(), [](double x) { return x == 0.0; })) continue;
    auto& st = state_[name];
    if (st.m.empty()) {
      st.m.assign(g.size(), 0.0);
      st.v.assign(g.size(), 0.0);
    }
    ++st.t;
    const double c1 = 1.0 - std::pow(cfg_.beta1, double(st.t));
    const double c2 = 1.0 - std::pow(cfg_.beta2, double(st.t));
    auto w = p.mutable_data();
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double gi = g[i] + cfg_.weight_decay * w[i];
      st.m[i] = cfg_.beta1 * st.m[i] + (1.0 - cfg_.beta1) * gi;
      st.v[i] = cfg_.beta2 * st.v[i] + (1.0 - cfg_.beta2) * gi * gi;
      w[i] -= cfg_.lr * (st.m[i] / c1) / (std::sqrt(st.v[i] / c2) + cfg_.eps);
    }
  }
}

FeatureMap load_feature_map(const std::filesystem::path& path, FeatureKind kind) {
  if (kind == FeatureKind::none) return {};
  if (path.empty()) throw DataError(to_string(kind) + " image features are required but no sidecar was given");
  if (!std::filesystem::exists(path)) throw DataError("feature sidecar not found: " + path.string());
  return load_features(path, kind).images;
}

Dataset load_dataset(const ExperimentConfig& cfg) {
  Dataset d;
  d.train = read_corpus(cfg.train, "train");
  d.dev = read_corpus(cfg.dev, "dev");
  if (!cfg.test.empty()) d.test = read_corpus(cfg.test, "test");
  d.features = load_feature_map(cfg.features, cfg.feature_kind);
  return d;
}

Checkpoint train_model(const ExperimentConfig& cfg, const std::vector<Sentence>& train,
                       const std::vector<Sentence>& dev, const FeatureMap& features, const TrainHooks& hooks) {
  cfg.validate();
  if (train.empty()) throw DataError("training corpus is empty");
  if (dev.empty()) throw DataError("dev corpus is empty");

  Checkpoint ck;
  ck.config = cfg;
  ck.vocab = build_vocab(train, {cfg.min_count, cfg.lowercase, cfg.caption});
  ck.inventory = build_inventory(train);
  ck.meta.train_sentences = train.size();
  if (cfg.feature_kind != FeatureKind::none) {
    if (features.empty()) throw DataError("no image features loaded for " + to_string(cfg.model));
    ck.meta.image_dim = features.begin()->second->dim;
  }
  ck.model = std::make_unique<Model>(cfg.model, cfg.encoder, ck.vocab, ck.meta.image_dim, stream_seed(cfg.seed, 1));
  Model& model = *ck.model;

  const auto bcfg = cfg.batch_config();
  const auto dev_batches = make_batches(dev, features, ck.vocab, bcfg, kEvalBatch);
  std::vector<std::vector<int>> dev_gold(dev.size());
  for (const auto& b : dev_batches)
    for (std::size_t r = 0; r < b.rows; ++r) dev_gold[b.source[r]] = b.gold(r);

  Rng shuffle_rng(stream_seed(cfg.seed, 2));
  Rng dropout_rng(stream_seed(cfg.seed, 3));
  Rng* drop = cfg.encoder.dropout > 0.0 ? &dropout_rng : nullptr;
  Adam adam(cfg.optimizer);
  std::vector<std::size_t> order(train.size());
  std::vector<std::vector<double>> best;
  double best_f1 = -1.0;
  std::size_t stale = 0;

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    const auto batches = make_batches(train, order, features, ck.vocab, bcfg, cfg.batch_size);
    double loss_sum = 0.0;
    for (std::size_t k = 0; k < batches.size(); ++k) {
      model.params().zero_grad();
      const Tensor loss = model.loss(batches[k], drop);
      const double v = loss.item();
      if (!std::isfinite(v)) {
        std::string ids;
        for (std::size_t r = 0; r < batches[k].rows && r < 4; ++r)
          ids += (r ? "," : "") + train[batches[k].source[r]].id;
        throw NumericalError("non-finite loss (" + std::to_string(v) + ") at epoch " + std::to_string(epoch) +
                             ", batch " + std::to_string(k) + " (sentences " + ids +
                             (batches[k].rows > 4 ? ",..." : "") + ")");
      }
      backward(loss);
      adam.step(model.params());
      loss_sum += v;
    }

    std::vector<std::vector<int>> pred(dev.size());
    for (const auto& b : dev_batches)
      for (std::size_t r = 0; r < b.rows; ++r) pred[b.source[r]] = model.decode(b, r, cfg.constrain_bio);
    std::vector<EntitySpan> g, p;
    for (std::size_t i = 0; i < dev.size(); ++i) {
      auto gs = extract_entities(dev_gold[i], dev[i].id);
      auto ps = extract_entities(pred[i], dev[i].id);
      g.insert(g.end(), gs.begin(), gs.end());
      p.insert(p.end(), ps.begin(), ps.end());
    }
    const EpochRecord rec{epoch, loss_sum / double(batches.size()), entity_prf(g, p).f1()};
    ck.meta.history.push_back(rec);
    ck.meta.epochs_run = epoch;
    if (hooks.on_epoch) hooks.on_epoch(rec);

    if (rec.dev_f1 > best_f1) {
      best_f1 = rec.dev_f1;
      best = snapshot(model.params());
      ck.meta.best_epoch = epoch;
      ck.meta.best_dev_f1 = rec.dev_f1;
      stale = 0;
    } else if (++stale >= std::max<std::size_t>(1, cfg.patience)) {
      break;
    }
    if (cfg.target_dev_f1 && rec.dev_f1 >= *cfg.target_dev_f1) break;
  }
  restore(model.params(), best);
  return ck;
}

Checkpoint train(const ExperimentConfig& cfg, const TrainHooks& hooks) {
  cfg.validate();
  const auto d = load_dataset(cfg);
  return train_model(cfg, d.train, d.dev, d.features, hooks);
}

std::vector<std::vector<int>> predict(const Checkpoint& ckpt, const std::vector<Sentence>& sentences,
                                      const FeatureMap& features) {
  std::vector<std::vector<int>> out(sentences.size());
  for (const auto& b : make_batches(sentences, features, ckpt.vocab, ckpt.config.batch_config(), kEvalBatch))
    for (std::size_t r = 0; r < b.rows; ++r) out[b.source[r]] = ckpt.model->decode(b, r, ckpt.config.constrain_bio);
  return out;
}

EvalReport evaluate(const Checkpoint& ckpt, const std::vector<Sentence>& sentences, const FeatureMap& features) {
  return evaluate_predictions(sentences, predict(ckpt, sentences, features), ckpt.inventory);
}

EvalReport evaluate(const Checkpoint& ckpt, const std::filesystem::path& data,
                    const std::optional<std::filesystem::path>& features) {
  const auto sentences = read_corpus(data, "evaluation");
  const auto fmap = load_feature_map(features.value_or(ckpt.config.features), ckpt.config.feature_kind);
  return evaluate(ckpt, sentences, fmap);
}

void dump_attention(const Checkpoint& ckpt, const std::vector<Sentence>& sentences, const FeatureMap& features,
                    std::ostream& out) {
  std::vector<json> records(sentences.size());
  for (const auto& b : make_batches(sentences, features, ckpt.vocab, ckpt.config.batch_config(), kEvalBatch))
    for (std::size_t r = 0; r < b.rows; ++r) {
      const auto o = ckpt.model->forward(b, r);
      const auto labels = viterbi(o.emissions, ckpt.model->crf(), ckpt.config.constrain_bio).labels;
      records[b.source[r]] = attention_record(sentences[b.source[r]], labels, o.diagnostics);
    }
  for (const auto& rec : records) out << rec.dump() << '\n';
}

std::string serialize_checkpoint(const Checkpoint& ckpt) {
  if (!ckpt.model) throw ContractError("serialize_checkpoint: checkpoint has no model");
  json inv = json::array();
  for (const auto& [surface, types] : ckpt.inventory) inv.push_back({surface, types});
  const json header{{"config", ckpt.config.to_json()},
                    {"vocab", ckpt.vocab.to_json()},
                    {"inventory", inv},
                    {"meta", meta_json(ckpt.meta)}};
  const std::string text = header.dump();

  std::string out(kMagic, sizeof kMagic);
  put_u32(out, kVersion);
  put_u64(out, text.size());
  out += text;
  const auto& store = ckpt.model->params();
  const auto names = store.names();
  put_u64(out, names.size());
  for (const auto& n : names) {
    const Tensor& t = store.get(n);
    put_u32(out, static_cast<std::uint32_t>(n.size()));
    out += n;
    put_u32(out, static_cast<std::uint32_t>(t.rank()));
    for (auto d : t.shape()) put_u64(out, d);
    for (double v : t.data()) put_u64(out, std::bit_cast<std::uint64_t>(v));
  }
  return out;
}

Checkpoint deserialize_checkpoint(const std::string& bytes) {
  Reader in(bytes);
  if (in.bytes(sizeof kMagic) != std::string(kMagic, sizeof kMagic)) throw FormatError("not a checkpoint file");
  const auto version = in.u(4);
  if (version != kVersion) throw FormatError("unsupported checkpoint version " + std::to_string(version));
  Checkpoint ck;
  try {
    const json header = json::parse(in.bytes(in.u(8)));
    ck.config = config_from_json(header.at("config"));
    ck.vocab = Vocab::from_json(header.at("vocab"));
    for (const auto& e : header.at("inventory"))
      ck.inventory[e.at(0).get<std::string>()] = e.at(1).get<std::set<int>>();
    ck.meta = meta_from_json(header.at("meta"));
  } catch (const json::exception& e) {
    throw FormatError(std::string("checkpoint header is malformed: ") + e.what());
  } catch (const ConfigError& e) {
    throw FormatError(std::string("checkpoint config is invalid: ") + e.what());
  }
  ck.model = std::make_unique<Model>(ck.config.model, ck.config.encoder, ck.vocab, ck.meta.image_dim, 0);
  auto& store = ck.model->params();
  const auto count = in.u(8);
  if (count != store.size())
    throw FormatError("checkpoint holds " + std::to_string(count) + " tensors, model expects " +
                      std::to_string(store.size()));
  for (std::uint64_t k = 0; k < count; ++k) {
    const std::string name = in.bytes(in.u(4));
    if (!store.contains(name)) throw FormatError("checkpoint tensor '" + name + "' is not a model parameter");
    Tensor& t = store.get(name);
    Shape shape(in.u(4));
    for (auto& d : shape) d = in.u(8);
    if (shape != t.shape())
      throw FormatError("checkpoint tensor '" + name + "' has shape " + shape_str(shape) + ", model expects " +
                        shape_str(t.shape()));
    for (double& v : t.mutable_data()) v = std::bit_cast<double>(in.u(8));
  }
  if (!in.done()) throw FormatError("trailing bytes after checkpoint tensors");
  return ck;
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  const auto bytes = serialize_checkpoint(ckpt);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write checkpoint " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("failed writing checkpoint " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return deserialize_checkpoint(ss.str());
}

}  // namespace mner
