#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace mner {

// One supervised unit: tokens with gold BIO labels, optionally paired with
// an image id and a caption.
struct Sentence {
  std::string id;
  std::vector<std::string> tokens;
  std::vector<std::string> labels;
  std::optional<std::string> image_id;
  std::optional<std::vector<std::string>> caption;

  bool operator==(const Sentence&) const = default;
};

struct Corpus {
  std::vector<Sentence> sentences;
  std::size_t repairs = 0;  // I-X tags rewritten to B-X on load
};

// Blocks separated by blank lines; optional `# id: ` / `# caption: ` header
// lines, then `token<TAB>label` lines. Sentence ids are "s<ordinal>".
Corpus parse_corpus(const std::filesystem::path& path);
Corpus parse_corpus_text(std::string_view text);

void write_corpus(std::ostream& out, const std::vector<Sentence>& sentences);
std::string serialize_corpus(const std::vector<Sentence>& sentences);
void save_corpus(const std::filesystem::path& path, const std::vector<Sentence>& sentences);

// Rewrites every I-X that cannot continue its predecessor into B-X.
// Returns the number of rewrites.
std::size_t repair_bio(std::vector<std::string>& labels);

}  // namespace mner
