#pragma once

#include <array>
#include <optional>
#include <string>
#include <string_view>

namespace mner {

inline constexpr std::array<std::string_view, 4> kEntityTypes{"PER", "LOC", "ORG", "MISC"};

// Fixed BIO label inventory; the index is the CRF label id.
inline constexpr std::array<std::string_view, 9> kLabels{"O",     "B-PER", "I-PER", "B-LOC", "I-LOC",
                                                         "B-ORG", "I-ORG", "B-MISC", "I-MISC"};
inline constexpr std::size_t kNumLabels = kLabels.size();
inline constexpr int kOutside = 0;

std::optional<int> label_index(std::string_view label);

inline bool is_begin(int label) { return label > 0 && label % 2 == 1; }
inline bool is_inside(int label) { return label > 0 && label % 2 == 0; }
// Entity type index into kEntityTypes, or -1 for O.
inline int label_type(int label) { return label == 0 ? -1 : (label - 1) / 2; }
inline int begin_label(int type) { return 1 + 2 * type; }
inline int inside_label(int type) { return 2 + 2 * type; }

// Whether `next` may follow `prev` under BIO; prev == -1 means sentence start.
inline bool bio_allowed(int prev, int next) {
  if (!is_inside(next)) return true;
  return prev >= 0 && prev != kOutside && label_type(prev) == label_type(next);
}

}  // namespace mner
