#include "mner/config.hpp"

#include <fstream>
#include <functional>
#include <map>

#include <nlohmann/json.hpp>

#include "mner/error.hpp"

namespace mner {

using nlohmann::json;

namespace {

std::size_t get_count(const json& v, const std::string& key) {
  if (!v.is_number_unsigned()) throw ConfigError(key + ": expected a non-negative integer");
  return v.get<std::size_t>();
}

double get_number(const json& v, const std::string& key) {
  if (!v.is_number()) throw ConfigError(key + ": expected a number");
  return v.get<double>();
}

bool get_bool(const json& v, const std::string& key) {
  if (!v.is_boolean()) throw ConfigError(key + ": expected true or false");
  return v.get<bool>();
}

std::string get_string(const json& v, const std::string& key) {
  if (!v.is_string()) throw ConfigError(key + ": expected a string");
  return v.get<std::string>();
}

using Handlers = std::map<std::string, std::function<void(const json&)>>;

void dispatch(const json& obj, const Handlers& handlers, const std::string& where) {
  if (!obj.is_object()) throw ConfigError(where + ": expected a JSON object");
  for (const auto& [key, value] : obj.items()) {
    auto it = handlers.find(key);
    if (it == handlers.end()) throw ConfigError(where + ": unknown key '" + key + "'");
    it->second(value);
  }
}

void in_range(bool ok, const std::string& what) {
  if (!ok) throw ConfigError(what);
}

}  // namespace

void ExperimentConfig::validate() const {
  const auto need = model_inputs(model);
  if (feature_kind != need.features)
    throw ConfigError(to_string(model) + " needs feature_kind '" + to_string(need.features) + "', got '" +
                      to_string(feature_kind) + "'");
  if (caption != need.caption)
    throw ConfigError(to_string(model) + (need.caption ? " needs captions (caption: true)"
                                                       : " does not read captions (caption must be false)"));
  encoder.validate();
  in_range(epochs >= 1, "epochs must be at least 1");
  in_range(batch_size >= 1, "batch_size must be at least 1");
  in_range(optimizer.lr > 0.0, "optimizer.lr must be positive");
  in_range(optimizer.beta1 >= 0.0 && optimizer.beta1 < 1.0, "optimizer.beta1 must lie in [0, 1)");
  in_range(optimizer.beta2 >= 0.0 && optimizer.beta2 < 1.0, "optimizer.beta2 must lie in [0, 1)");
  in_range(optimizer.eps > 0.0, "optimizer.eps must be positive");
  in_range(optimizer.weight_decay >= 0.0, "optimizer.weight_decay must be non-negative");
  in_range(!target_dev_f1 || (*target_dev_f1 > 0.0 && *target_dev_f1 <= 1.0), "target_dev_f1 must lie in (0, 1]");
  in_range(min_count >= 1, "min_count must be at least 1");
  in_range(max_word_chars >= 1, "max_word_chars must be at least 1");
  in_range(!train.empty(), "train path is required");
  in_range(!dev.empty(), "dev path is required");
  in_range(feature_kind == FeatureKind::none || !features.empty(),
           to_string(model) + " needs a features path for its " + to_string(feature_kind) + " image features");
}

BatchConfig ExperimentConfig::batch_config() const {
  BatchConfig b;
  b.mode = input_mode(model);
  b.features = feature_kind;
  b.caption_cap = caption_cap;
  b.max_len = encoder.max_len;
  b.max_word_chars = max_word_chars;
  return b;
}

json ExperimentConfig::to_json() const {
  auto path = [](const std::filesystem::path& p) { return p.empty() ? json(nullptr) : json(p.string()); };
  return {
      {"name", name},
      {"model", to_string(model)},
      {"encoder",
       {{"d_model", encoder.d_model},
        {"n_layers", encoder.n_layers},
        {"n_heads", encoder.n_heads},
        {"d_ff", encoder.d_ff},
        {"max_len", encoder.max_len},
        {"char_dim", encoder.char_dim},
        {"char_filters", encoder.char_filters},
        {"dropout", encoder.dropout}}},
      {"optimizer",
       {{"lr", optimizer.lr},
        {"beta1", optimizer.beta1},
        {"beta2", optimizer.beta2},
        {"eps", optimizer.eps},
        {"weight_decay", optimizer.weight_decay}}},
      {"epochs", epochs},
      {"batch_size", batch_size},
      {"seed", seed},
      {"patience", patience},
      {"target_dev_f1", target_dev_f1 ? json(*target_dev_f1) : json(nullptr)},
      {"train", path(train)},
      {"dev", path(dev)},
      {"test", path(test)},
      {"features", path(features)},
      {"feature_kind", to_string(feature_kind)},
      {"caption", caption},
      {"constrain_bio", constrain_bio},
      {"min_count", min_count},
      {"lowercase", lowercase},
      {"caption_cap", caption_cap},
      {"max_word_chars", max_word_chars},
  };
}

ExperimentConfig config_from_json(const json& j, const std::filesystem::path& base_dir) {
  ExperimentConfig c;
  std::optional<FeatureKind> kind;
  std::optional<bool> caption;
  bool have_model = false;
  auto path = [&](std::filesystem::path& out, const std::string& key) {
    return [&out, key, &base_dir](const json& v) {
      if (v.is_null()) {
        out.clear();
        return;
      }
      std::filesystem::path p = get_string(v, key);
      out = p.is_absolute() || base_dir.empty() ? p : base_dir / p;
    };
  };
  auto count = [](std::size_t& out, const std::string& key) {
    return [&out, key](const json& v) { out = get_count(v, key); };
  };
  auto number = [](double& out, const std::string& key) {
    return [&out, key](const json& v) { out = get_number(v, key); };
  };

  const Handlers encoder{
      {"d_model", count(c.encoder.d_model, "encoder.d_model")},
      {"n_layers", count(c.encoder.n_layers, "encoder.n_layers")},
      {"n_heads", count(c.encoder.n_heads, "encoder.n_heads")},
      {"d_ff", count(c.encoder.d_ff, "encoder.d_ff")},
      {"max_len", count(c.encoder.max_len, "encoder.max_len")},
      {"char_dim", count(c.encoder.char_dim, "encoder.char_dim")},
      {"char_filters", count(c.encoder.char_filters, "encoder.char_filters")},
      {"dropout", number(c.encoder.dropout, "encoder.dropout")},
  };
  const Handlers optimizer{
      {"lr", number(c.optimizer.lr, "optimizer.lr")},
      {"beta1", number(c.optimizer.beta1, "optimizer.beta1")},
      {"beta2", number(c.optimizer.beta2, "optimizer.beta2")},
      {"eps", number(c.optimizer.eps, "optimizer.eps")},
      {"weight_decay", number(c.optimizer.weight_decay, "optimizer.weight_decay")},
  };
  const Handlers top{
      {"name", [&](const json& v) { c.name = get_string(v, "name"); }},
      {"model",
       [&](const json& v) {
         c.model = model_from_string(get_string(v, "model"));
         have_model = true;
       }},
      {"encoder", [&](const json& v) { dispatch(v, encoder, "encoder"); }},
      {"optimizer", [&](const json& v) { dispatch(v, optimizer, "optimizer"); }},
      {"epochs", count(c.epochs, "epochs")},
      {"batch_size", count(c.batch_size, "batch_size")},
      {"seed", [&](const json& v) { c.seed = get_count(v, "seed"); }},
      {"patience", count(c.patience, "patience")},
      {"target_dev_f1",
       [&](const json& v) {
         if (v.is_null())
           c.target_dev_f1.reset();
         else
           c.target_dev_f1 = get_number(v, "target_dev_f1");
       }},
      {"train", path(c.train, "train")},
      {"dev", path(c.dev, "dev")},
      {"test", path(c.test, "test")},
      {"features", path(c.features, "features")},
      {"feature_kind", [&](const json& v) { kind = feature_kind_from_string(get_string(v, "feature_kind")); }},
      {"caption", [&](const json& v) { caption = get_bool(v, "caption"); }},
      {"constrain_bio", [&](const json& v) { c.constrain_bio = get_bool(v, "constrain_bio"); }},
      {"min_count", count(c.min_count, "min_count")},
      {"lowercase", [&](const json& v) { c.lowercase = get_bool(v, "lowercase"); }},
      {"caption_cap", count(c.caption_cap, "caption_cap")},
      {"max_word_chars", count(c.max_word_chars, "max_word_chars")},
  };
  dispatch(j, top, "config");
  if (!have_model) throw ConfigError("config: 'model' is required");
  const auto need = model_inputs(c.model);
  c.feature_kind = kind.value_or(need.features);
  c.caption = caption.value_or(need.caption);
  if (c.name.empty()) c.name = to_string(c.model);
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError("config file " + path.string() + " is not valid JSON: " + e.what());
  }
  return config_from_json(j, path.parent_path());
}

}  // namespace mner
