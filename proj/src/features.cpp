#include "mner/features.hpp"

#include <cmath>
#include <fstream>

#include <nlohmann/json.hpp>

#include "mner/error.hpp"

namespace mner {

using nlohmann::json;

std::string to_string(FeatureKind k) {
  switch (k) {
    case FeatureKind::none: return "none";
    case FeatureKind::global: return "global";
    case FeatureKind::regional: return "regional";
  }
  return "none";
}

FeatureKind feature_kind_from_string(const std::string& s) {
  if (s == "none") return FeatureKind::none;
  if (s == "global") return FeatureKind::global;
  if (s == "regional") return FeatureKind::regional;
  throw ConfigError("unknown feature kind '" + s + "'");
}

void ImageFeatures::validate() const {
  const std::string who = "image '" + image_id + "': ";
  if (kind == FeatureKind::global && regions != kGlobalRegions)
    throw FormatError(who + "global features need exactly 49 rows, got " + std::to_string(regions));
  if (kind == FeatureKind::regional && (regions < 1 || regions > kMaxRegions))
    throw FormatError(who + "regional features need 1-36 rows, got " + std::to_string(regions));
  if (kind == FeatureKind::none) throw FormatError(who + "feature kind must be global or regional");
  if (dim == 0) throw FormatError(who + "empty feature vectors");
  if (values.size() != regions * dim) throw FormatError(who + "value count does not match rows x dim");
  for (double v : values)
    if (!std::isfinite(v)) throw FormatError(who + "non-finite feature value");
}

FeatureSet parse_features(std::istream& in, FeatureKind kind) {
  if (kind == FeatureKind::none) throw ContractError("parse_features: kind must be global or regional");
  FeatureSet set;
  set.kind = kind;
  std::string line;
  std::size_t lineno = 0;
  std::size_t dim = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = "feature line " + std::to_string(lineno) + ": ";
    json rec;
    try {
      rec = json::parse(line);
    } catch (const json::exception& e) {
      // overflowing literals such as 1e999 land here too
      throw FormatError(where + "invalid JSON (" + e.what() + ")");
    }
    if (!rec.is_object()) throw FormatError(where + "record must be an object");
    for (const auto& [key, _] : rec.items())
      if (key != "image_id" && key != "kind" && key != "vectors") throw FormatError(where + "unknown field '" + key + "'");
    if (!rec.contains("image_id") || !rec["image_id"].is_string()) throw FormatError(where + "missing string image_id");
    if (!rec.contains("kind") || !rec["kind"].is_string()) throw FormatError(where + "missing string kind");
    if (!rec.contains("vectors") || !rec["vectors"].is_array()) throw FormatError(where + "missing vectors array");

    auto img = std::make_shared<ImageFeatures>();
    img->image_id = rec["image_id"].get<std::string>();
    const auto k = rec["kind"].get<std::string>();
    if (k != "global" && k != "regional") throw FormatError(where + "unknown kind '" + k + "'");
    img->kind = k == "global" ? FeatureKind::global : FeatureKind::regional;
    if (img->kind != kind) throw FormatError(where + "expected kind " + to_string(kind) + ", got " + k);

    const auto& rows = rec["vectors"];
    img->regions = rows.size();
    for (const auto& r : rows) {
      if (!r.is_array()) throw FormatError(where + "vectors must be an array of arrays");
      if (img->dim == 0) img->dim = r.size();
      if (r.size() != img->dim) throw FormatError(where + "ragged vectors");
      for (const auto& v : r) {
        if (!v.is_number()) throw FormatError(where + "non-numeric feature value");
        img->values.push_back(v.get<double>());
      }
    }
    try {
      img->validate();
    } catch (const FormatError& e) {
      throw FormatError(where + e.what());
    }
    if (dim == 0) dim = img->dim;
    if (img->dim != dim)
      throw FormatError(where + "dimension " + std::to_string(img->dim) + " differs from earlier records (" +
                        std::to_string(dim) + ")");
    if (set.images.count(img->image_id)) ++set.duplicates;
    set.images[img->image_id] = std::move(img);
  }
  return set;
}

FeatureSet load_features(const std::filesystem::path& path, FeatureKind kind) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open feature file " + path.string());
  return parse_features(in, kind);
}

void write_features(std::ostream& out, const FeatureMap& images) {
  for (const auto& [id, img] : images) {
    json rows = json::array();
    for (std::size_t r = 0; r < img->regions; ++r) {
      json row = json::array();
      for (std::size_t c = 0; c < img->dim; ++c) row.push_back(img->values[r * img->dim + c]);
      rows.push_back(std::move(row));
    }
    json rec = {{"image_id", id}, {"kind", to_string(img->kind)}, {"vectors", std::move(rows)}};
    out << rec.dump() << '\n';
  }
}

void save_features(const std::filesystem::path& path, const FeatureMap& images) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write feature file " + path.string());
  write_features(out, images);
}

}  // namespace mner
