#pragma once

#include <filesystem>
#include <iosfwd>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "mner/tensor.hpp"

namespace mner {

enum class FeatureKind { none, global, regional };

std::string to_string(FeatureKind k);
FeatureKind feature_kind_from_string(const std::string& s);

inline constexpr std::size_t kGlobalRegions = 49;  // 7×7 grid
inline constexpr std::size_t kMaxRegions = 36;

// Precomputed image representation: a 7×7 grid of region vectors (global)
// or a set of detected-object vectors (regional).
struct ImageFeatures {
  std::string image_id;
  FeatureKind kind = FeatureKind::global;
  std::size_t regions = 0;
  std::size_t dim = 0;
  std::vector<double> values;  // regions × dim, row-major

  Tensor tensor() const { return Tensor::from({regions, dim}, values); }
  // Throws FormatError when the row count or values break the kind's invariants.
  void validate() const;
};

using FeatureMap = std::map<std::string, std::shared_ptr<const ImageFeatures>>;

struct FeatureSet {
  FeatureKind kind = FeatureKind::none;
  FeatureMap images;
  std::size_t duplicates = 0;  // later records replaced earlier ones
  std::size_t dim() const { return images.empty() ? 0 : images.begin()->second->dim; }
};

// JSON Lines: {"image_id": str, "kind": "global"|"regional", "vectors": [[...], ...]}.
FeatureSet load_features(const std::filesystem::path& path, FeatureKind kind);
FeatureSet parse_features(std::istream& in, FeatureKind kind);
void write_features(std::ostream& out, const FeatureMap& images);
void save_features(const std::filesystem::path& path, const FeatureMap& images);

}  // namespace mner
