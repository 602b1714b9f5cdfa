#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "mner/corpus.hpp"
#include "mner/features.hpp"

namespace mner {

// Where the image side carries information about ambiguous entities.
enum class Signal { none, caption, region };

std::string to_string(Signal s);
Signal signal_from_string(const std::string& s);

struct SynthConfig {
  std::uint64_t seed = 7;
  std::size_t n_train = 400;
  std::size_t n_dev = 100;
  std::size_t n_test = 200;
  Signal signal = Signal::caption;
  std::size_t feature_dim = 16;
  std::size_t min_regions = 2;
  std::size_t max_regions = 6;
};

struct SynthCorpus {
  std::vector<Sentence> train, dev, test;
  FeatureMap global;
  FeatureMap regional;
};

// Multimodal toy corpus. Every sentence has an image id and a caption.
// Most sentences contain one surface form from an ambiguous lexicon whose
// type varies between occurrences. Short sentences carry no textual hint
// about that type; longer ones place a type-revealing cue word right after
// it. With signal=caption the caption holds a keyword naming the type; with
// signal=region one region vector (and one grid cell) points along a
// per-type direction. Image content for every other case is drawn from a
// stream seeded only by (seed, split, index), so it is independent of the
// text.
SynthCorpus generate_synthetic(const SynthConfig& cfg);

// Writes train.txt, dev.txt, test.txt, global.jsonl and regional.jsonl.
void write_synthetic(const SynthCorpus& corpus, const std::filesystem::path& dir);

// Type named by the first type keyword in a caption, if any.
std::optional<int> caption_keyword_type(const std::vector<std::string>& caption);
bool is_ambiguous_surface(const std::string& surface);

}  // namespace mner
