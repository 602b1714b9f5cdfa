#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <vector>

#include "mner/corpus.hpp"
#include "mner/features.hpp"
#include "mner/vocab.hpp"

namespace mner {

// Sequence layout fed to the encoder.
//   text:          [CLS] w1..wn [SEP]
//   text_caption:  [CLS] w1..wn [SEP] c1..cm [SEP]   (segments 0 / 1)
//   text_regions:  [CLS] w1..wn [SEP] r1..rR          (regions use segment 2)
enum class InputMode { text, text_caption, text_regions };

inline constexpr int kIgnoreLabel = -1;
inline constexpr int kSegmentText = 0;
inline constexpr int kSegmentCaption = 1;
inline constexpr int kSegmentRegion = 2;

struct BatchConfig {
  InputMode mode = InputMode::text;
  FeatureKind features = FeatureKind::none;  // attach images of this kind to every row
  std::size_t caption_cap = 16;              // captions are cut from the right
  std::size_t max_len = 64;                  // text + caption positions
  std::size_t max_word_chars = 16;
};

// Padded batch. All per-position arrays are rows × width, row-major.
struct Batch {
  std::size_t rows = 0;
  std::size_t width = 0;
  std::size_t char_width = 0;
  std::vector<long> tokens;
  std::vector<long> chars;                // rows × width × char_width, char PAD filled
  std::vector<std::size_t> char_lengths;  // 0 on special, region and pad positions
  std::vector<std::uint8_t> mask;         // 1 on real positions (including regions)
  std::vector<int> segments;
  std::vector<int> labels;  // kIgnoreLabel off word positions
  std::vector<std::shared_ptr<const ImageFeatures>> images;
  std::vector<std::size_t> source;  // sentence index of each row

  std::span<const long> token_row(std::size_t r) const { return {tokens.data() + r * width, width}; }
  std::span<const std::uint8_t> mask_row(std::size_t r) const { return {mask.data() + r * width, width}; }
  std::span<const int> segment_row(std::size_t r) const { return {segments.data() + r * width, width}; }
  std::span<const int> label_row(std::size_t r) const { return {labels.data() + r * width, width}; }
  std::span<const long> word_chars(std::size_t r, std::size_t pos) const {
    const std::size_t at = r * width + pos;
    return {chars.data() + at * char_width, char_lengths[at]};
  }

  std::vector<std::size_t> word_positions(std::size_t r) const;
  std::vector<std::size_t> region_positions(std::size_t r) const;
  std::vector<int> gold(std::size_t r) const;
  std::size_t real_positions() const;
};

// Batches in input order, `batch_size` rows each (the last may be short).
// Throws DataError listing every sentence whose required image or caption is
// missing.
std::vector<Batch> make_batches(const std::vector<Sentence>& sentences, const FeatureMap& features,
                                const Vocab& vocab, const BatchConfig& cfg, std::size_t batch_size);
// Same, visiting sentences in `order`.
std::vector<Batch> make_batches(const std::vector<Sentence>& sentences, std::span<const std::size_t> order,
                                const FeatureMap& features, const Vocab& vocab, const BatchConfig& cfg,
                                std::size_t batch_size);

}  // namespace mner
