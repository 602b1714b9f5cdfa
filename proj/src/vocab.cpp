#include "mner/vocab.hpp"

#include <algorithm>
#include <fstream>
#include <map>

#include <nlohmann/json.hpp>

#include "mner/error.hpp"
#include "mner/labels.hpp"

namespace mner {

using nlohmann::json;

namespace {

const std::vector<std::string> kReservedTokens{"[PAD]", "[UNK]", "[SEP]", "[CLS]", "[MASK]"};
const std::vector<std::string> kReservedChars{"<pad>", "<unk>"};

}  // namespace

std::vector<std::string> utf8_chars(const std::string& s) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < s.size()) {
    const auto c = static_cast<unsigned char>(s[i]);
    std::size_t len = 1;
    if (c >= 0xF0) len = 4;
    else if (c >= 0xE0) len = 3;
    else if (c >= 0xC0) len = 2;
    if (i + len > s.size()) len = 1;
    out.push_back(s.substr(i, len));
    i += len;
  }
  return out;
}

std::string to_lower_ascii(std::string s) {
  for (auto& c : s)
    if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
  return s;
}

Vocab::Vocab() {
  for (const auto& t : kReservedTokens) add_token(t);
  for (const auto& c : kReservedChars) add_char(c);
}

void Vocab::add_token(const std::string& t) {
  if (token_index_.emplace(t, static_cast<long>(tokens_.size())).second) tokens_.push_back(t);
}

void Vocab::add_char(const std::string& c) {
  if (char_index_.emplace(c, static_cast<long>(chars_.size())).second) chars_.push_back(c);
}

long Vocab::token_id(const std::string& token) const {
  auto it = token_index_.find(lowercase_ ? to_lower_ascii(token) : token);
  return it == token_index_.end() ? kUnk : it->second;
}

long Vocab::char_id(const std::string& ch) const {
  auto it = char_index_.find(ch);
  return it == char_index_.end() ? kCharUnk : it->second;
}

int Vocab::label_id(const std::string& label) const {
  auto idx = label_index(label);
  if (!idx) throw ContractError("unknown label '" + label + "'");
  return *idx;
}

std::size_t Vocab::num_labels() const { return kNumLabels; }

json Vocab::to_json() const {
  json tokens = json::object(), chars = json::object(), labels = json::object();
  for (std::size_t i = 0; i < tokens_.size(); ++i) tokens[tokens_[i]] = i;
  for (std::size_t i = 0; i < chars_.size(); ++i) chars[chars_[i]] = i;
  for (std::size_t i = 0; i < kLabels.size(); ++i) labels[std::string(kLabels[i])] = i;
  return {{"reserved", {{"PAD", kPad}, {"UNK", kUnk}, {"SEP", kSep}, {"CLS", kCls}, {"MASK", kMask},
                        {"CHAR_PAD", kCharPad}, {"CHAR_UNK", kCharUnk}}},
          {"lowercase", lowercase_},
          {"tokens", tokens},
          {"chars", chars},
          {"labels", labels}};
}

Vocab Vocab::from_json(const json& j) {
  auto read_map = [](const json& m, const char* what) {
    if (!m.is_object()) throw FormatError(std::string("vocab: '") + what + "' must be an object");
    std::vector<std::string> out(m.size());
    for (const auto& [k, v] : m.items()) {
      if (!v.is_number_unsigned() || v.get<std::size_t>() >= out.size() || !out[v.get<std::size_t>()].empty())
        throw FormatError(std::string("vocab: '") + what + "' indices must be a permutation of 0..n-1");
      out[v.get<std::size_t>()] = k;
    }
    return out;
  };
  try {
    Vocab v;
    const auto tokens = read_map(j.at("tokens"), "tokens");
    const auto chars = read_map(j.at("chars"), "chars");
    for (std::size_t i = 0; i < kReservedTokens.size(); ++i)
      if (i >= tokens.size() || tokens[i] != kReservedTokens[i]) throw FormatError("vocab: reserved tokens moved");
    for (std::size_t i = 0; i < kReservedChars.size(); ++i)
      if (i >= chars.size() || chars[i] != kReservedChars[i]) throw FormatError("vocab: reserved chars moved");
    const auto labels = read_map(j.at("labels"), "labels");
    if (labels.size() != kLabels.size()) throw FormatError("vocab: label map must hold the 9 BIO tags");
    for (std::size_t i = 0; i < labels.size(); ++i)
      if (labels[i] != kLabels[i]) throw FormatError("vocab: label order differs from the built-in inventory");
    for (const auto& t : tokens) v.add_token(t);
    for (const auto& c : chars) v.add_char(c);
    v.lowercase_ = j.at("lowercase").get<bool>();
    return v;
  } catch (const json::exception& e) {
    throw FormatError(std::string("vocab: ") + e.what());
  }
}

void Vocab::save(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write vocab file " + path.string());
  out << to_json().dump(1) << '\n';
}

Vocab Vocab::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open vocab file " + path.string());
  try {
    return from_json(json::parse(in));
  } catch (const json::parse_error& e) {
    throw FormatError(std::string("vocab: ") + e.what());
  }
}

Vocab build_vocab(const std::vector<Sentence>& train, const VocabOptions& opts) {
  if (train.empty()) throw ContractError("build_vocab: empty training set");
  std::map<std::string, std::size_t> counts;  // ordered: lexicographic tie-break
  std::map<std::string, std::size_t> char_counts;
  auto see = [&](const std::string& raw) {
    ++counts[opts.lowercase ? to_lower_ascii(raw) : raw];
    for (const auto& c : utf8_chars(raw)) ++char_counts[c];
  };
  for (const auto& s : train) {
    for (const auto& t : s.tokens) see(t);
    if (opts.include_captions && s.caption)
      for (const auto& t : *s.caption) see(t);
  }
  std::vector<std::pair<std::string, std::size_t>> sorted(counts.begin(), counts.end());
  std::stable_sort(sorted.begin(), sorted.end(), [](const auto& a, const auto& b) { return a.second > b.second; });

  Vocab v;
  v.lowercase_ = opts.lowercase;
  for (const auto& [tok, n] : sorted)
    if (n >= opts.min_count) v.add_token(tok);
  std::vector<std::pair<std::string, std::size_t>> chars(char_counts.begin(), char_counts.end());
  std::stable_sort(chars.begin(), chars.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
  for (const auto& [c, n] : chars) v.add_char(c);
  return v;
}

}  // namespace mner
