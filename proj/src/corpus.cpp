#include "mner/corpus.hpp"

#include <fstream>
#include <sstream>

#include "mner/error.hpp"
#include "mner/labels.hpp"

namespace mner {

std::optional<int> label_index(std::string_view label) {
  for (std::size_t i = 0; i < kLabels.size(); ++i)
    if (kLabels[i] == label) return static_cast<int>(i);
  return std::nullopt;
}

namespace {

constexpr std::string_view kIdHeader = "# id:";
constexpr std::string_view kCaptionHeader = "# caption:";

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_ws(std::string_view s) {
  std::vector<std::string> out;
  std::istringstream is{std::string(s)};
  std::string w;
  while (is >> w) out.push_back(w);
  return out;
}

}  // namespace

std::size_t repair_bio(std::vector<std::string>& labels) {
  std::size_t fixes = 0;
  int prev = -1;
  for (auto& l : labels) {
    int cur = *label_index(l);
    if (!bio_allowed(prev, cur)) {
      cur = begin_label(label_type(cur));
      l = std::string(kLabels[static_cast<std::size_t>(cur)]);
      ++fixes;
    }
    prev = cur;
  }
  return fixes;
}

Corpus parse_corpus_text(std::string_view text) {
  Corpus corpus;
  Sentence cur;
  bool in_block = false;
  std::size_t lineno = 0;
  std::size_t block_start = 0;

  auto flush = [&] {
    if (!in_block) return;
    if (cur.tokens.empty()) throw ParseError("sentence block has no tokens", block_start);
    corpus.repairs += repair_bio(cur.labels);
    cur.id = "s" + std::to_string(corpus.sentences.size());
    corpus.sentences.push_back(std::move(cur));
    cur = Sentence{};
    in_block = false;
  };

  std::size_t pos = 0;
  while (pos <= text.size()) {
    auto nl = text.find('\n', pos);
    if (nl == std::string_view::npos) nl = text.size();
    std::string_view line = text.substr(pos, nl - pos);
    pos = nl + 1;
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);

    if (trim(line).empty()) {
      flush();
      if (nl == text.size()) break;
      continue;
    }
    if (!in_block) {
      in_block = true;
      block_start = lineno;
    }

    const auto tab = line.find('\t');
    if (tab == std::string_view::npos) {
      if (line.starts_with("#")) {
        if (!cur.tokens.empty()) throw ParseError("header line after token lines", lineno);
        if (line.starts_with(kIdHeader)) {
          auto id = trim(line.substr(kIdHeader.size()));
          if (id.empty()) throw ParseError("empty image id", lineno);
          cur.image_id = std::string(id);
          continue;
        }
        if (line.starts_with(kCaptionHeader)) {
          auto words = split_ws(line.substr(kCaptionHeader.size()));
          if (!words.empty()) cur.caption = std::move(words);
          continue;
        }
        throw ParseError("unknown header line", lineno);
      }
      throw ParseError("expected token<TAB>label", lineno);
    }
    if (line.find('\t', tab + 1) != std::string_view::npos) throw ParseError("more than one tab", lineno);
    auto token = line.substr(0, tab);
    auto label = trim(line.substr(tab + 1));
    if (token.empty() || trim(token).empty()) throw ParseError("empty token", lineno);
    if (label.empty()) throw ParseError("empty label", lineno);
    if (!label_index(label)) throw ParseError("unknown label '" + std::string(label) + "'", lineno);
    cur.tokens.emplace_back(token);
    cur.labels.emplace_back(label);
    if (nl == text.size()) break;
  }
  flush();
  return corpus;
}

Corpus parse_corpus(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open corpus file " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_corpus_text(ss.str());
}

void write_corpus(std::ostream& out, const std::vector<Sentence>& sentences) {
  bool first = true;
  for (const auto& s : sentences) {
    if (!first) out << '\n';
    first = false;
    if (s.image_id) out << kIdHeader << ' ' << *s.image_id << '\n';
    if (s.caption && !s.caption->empty()) {
      out << kCaptionHeader;
      for (const auto& w : *s.caption) out << ' ' << w;
      out << '\n';
    }
    for (std::size_t i = 0; i < s.tokens.size(); ++i) out << s.tokens[i] << '\t' << s.labels[i] << '\n';
  }
}

std::string serialize_corpus(const std::vector<Sentence>& sentences) {
  std::ostringstream os;
  write_corpus(os, sentences);
  return os.str();
}

void save_corpus(const std::filesystem::path& path, const std::vector<Sentence>& sentences) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write corpus file " + path.string());
  write_corpus(out, sentences);
}

}  // namespace mner
