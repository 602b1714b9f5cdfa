#pragma once

#include <filesystem>
#include <string>
#include <unordered_map>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "mner/corpus.hpp"

namespace mner {

struct VocabOptions {
  std::size_t min_count = 1;
  bool lowercase = false;
  bool include_captions = false;
};

// Token, character and label index maps. Reserved token indices are fixed:
// PAD 0, UNK 1, SEP 2, CLS 3, MASK 4; characters reserve PAD 0 and UNK 1.
class Vocab {
 public:
  static constexpr long kPad = 0;
  static constexpr long kUnk = 1;
  static constexpr long kSep = 2;
  static constexpr long kCls = 3;
  static constexpr long kMask = 4;
  static constexpr long kCharPad = 0;
  static constexpr long kCharUnk = 1;

  Vocab();

  long token_id(const std::string& token) const;
  long char_id(const std::string& ch) const;
  int label_id(const std::string& label) const;
  const std::string& token(long id) const { return tokens_.at(static_cast<std::size_t>(id)); }

  std::size_t num_tokens() const { return tokens_.size(); }
  std::size_t num_chars() const { return chars_.size(); }
  std::size_t num_labels() const;
  bool lowercase() const { return lowercase_; }

  nlohmann::json to_json() const;
  static Vocab from_json(const nlohmann::json& j);
  void save(const std::filesystem::path& path) const;
  static Vocab load(const std::filesystem::path& path);

  bool operator==(const Vocab& o) const { return tokens_ == o.tokens_ && chars_ == o.chars_ && lowercase_ == o.lowercase_; }

 private:
  friend Vocab build_vocab(const std::vector<Sentence>&, const VocabOptions&);
  void add_token(const std::string& t);
  void add_char(const std::string& c);

  std::vector<std::string> tokens_;
  std::unordered_map<std::string, long> token_index_;
  std::vector<std::string> chars_;
  std::unordered_map<std::string, long> char_index_;
  bool lowercase_ = false;
};

// Tokens with frequency >= min_count, ordered by descending frequency with
// lexicographic tie-breaking. Characters are collected from all tokens.
Vocab build_vocab(const std::vector<Sentence>& train, const VocabOptions& opts);

// Splits a UTF-8 string into code points (invalid bytes become single units).
std::vector<std::string> utf8_chars(const std::string& s);
std::string to_lower_ascii(std::string s);

}  // namespace mner
