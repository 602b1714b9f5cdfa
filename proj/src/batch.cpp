#include "mner/batch.hpp"

#include <algorithm>
#include <numeric>

#include "mner/error.hpp"
#include "mner/labels.hpp"

namespace mner {

namespace {

struct Encoded {
  std::vector<long> tokens;
  std::vector<std::vector<long>> chars;
  std::vector<int> segments;
  std::vector<int> labels;
  std::shared_ptr<const ImageFeatures> image;
  std::size_t source = 0;
};

Encoded encode(const Sentence& s, std::size_t index, const FeatureMap& features, const Vocab& vocab,
               const BatchConfig& cfg) {
  Encoded e;
  e.source = index;
  const std::size_t n = s.tokens.size();
  if (n + 2 > cfg.max_len)
    throw DataError("sentence " + s.id + " has " + std::to_string(n) + " tokens; max_len " +
                    std::to_string(cfg.max_len) + " leaves room for " + std::to_string(cfg.max_len - 2));

  auto push = [&](long tok, std::vector<long> chars, int seg, int label) {
    e.tokens.push_back(tok);
    e.chars.push_back(std::move(chars));
    e.segments.push_back(seg);
    e.labels.push_back(label);
  };
  auto word_chars = [&](const std::string& w) {
    std::vector<long> ids;
    for (const auto& c : utf8_chars(w)) {
      if (ids.size() == cfg.max_word_chars) break;
      ids.push_back(vocab.char_id(c));
    }
    return ids;
  };

  push(Vocab::kCls, {}, kSegmentText, kIgnoreLabel);
  for (std::size_t i = 0; i < n; ++i)
    push(vocab.token_id(s.tokens[i]), word_chars(s.tokens[i]), kSegmentText, vocab.label_id(s.labels[i]));
  push(Vocab::kSep, {}, kSegmentText, kIgnoreLabel);

  if (cfg.mode == InputMode::text_caption) {
    const auto& cap = *s.caption;
    const std::size_t room = cfg.max_len - e.tokens.size() - 1;
    const std::size_t m = std::min({cap.size(), cfg.caption_cap, room});
    for (std::size_t i = 0; i < m; ++i) push(vocab.token_id(cap[i]), word_chars(cap[i]), kSegmentCaption, kIgnoreLabel);
    push(Vocab::kSep, {}, kSegmentCaption, kIgnoreLabel);
  }
  if (cfg.features != FeatureKind::none) e.image = features.at(*s.image_id);
  if (cfg.mode == InputMode::text_regions)
    for (std::size_t r = 0; r < e.image->regions; ++r) push(Vocab::kPad, {}, kSegmentRegion, kIgnoreLabel);
  return e;
}

Batch collate(std::vector<Encoded>& rows) {
  Batch b;
  b.rows = rows.size();
  for (const auto& r : rows) {
    b.width = std::max(b.width, r.tokens.size());
    for (const auto& c : r.chars) b.char_width = std::max(b.char_width, c.size());
  }
  b.char_width = std::max<std::size_t>(b.char_width, 1);
  const std::size_t cells = b.rows * b.width;
  b.tokens.assign(cells, Vocab::kPad);
  b.chars.assign(cells * b.char_width, Vocab::kCharPad);
  b.char_lengths.assign(cells, 0);
  b.mask.assign(cells, 0);
  b.segments.assign(cells, kSegmentText);
  b.labels.assign(cells, kIgnoreLabel);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    auto& e = rows[r];
    for (std::size_t p = 0; p < e.tokens.size(); ++p) {
      const std::size_t at = r * b.width + p;
      b.tokens[at] = e.tokens[p];
      b.mask[at] = 1;
      b.segments[at] = e.segments[p];
      b.labels[at] = e.labels[p];
      b.char_lengths[at] = e.chars[p].size();
      std::copy(e.chars[p].begin(), e.chars[p].end(), b.chars.begin() + static_cast<long>(at * b.char_width));
    }
    b.images.push_back(std::move(e.image));
    b.source.push_back(e.source);
  }
  return b;
}

}  // namespace

std::vector<std::size_t> Batch::word_positions(std::size_t r) const {
  std::vector<std::size_t> out;
  for (std::size_t p = 0; p < width; ++p)
    if (labels[r * width + p] != kIgnoreLabel) out.push_back(p);
  return out;
}

std::vector<std::size_t> Batch::region_positions(std::size_t r) const {
  std::vector<std::size_t> out;
  for (std::size_t p = 0; p < width; ++p)
    if (mask[r * width + p] && segments[r * width + p] == kSegmentRegion) out.push_back(p);
  return out;
}

std::vector<int> Batch::gold(std::size_t r) const {
  std::vector<int> out;
  for (std::size_t p = 0; p < width; ++p)
    if (labels[r * width + p] != kIgnoreLabel) out.push_back(labels[r * width + p]);
  return out;
}

std::size_t Batch::real_positions() const { return static_cast<std::size_t>(std::count(mask.begin(), mask.end(), 1)); }

std::vector<Batch> make_batches(const std::vector<Sentence>& sentences, std::span<const std::size_t> order,
                                const FeatureMap& features, const Vocab& vocab, const BatchConfig& cfg,
                                std::size_t batch_size) {
  if (batch_size == 0) throw ContractError("make_batches: batch_size must be positive");
  if (cfg.mode == InputMode::text_regions && cfg.features != FeatureKind::regional)
    throw ContractError("make_batches: region slots need regional features");

  std::vector<std::string> missing;
  for (auto i : order) {
    const auto& s = sentences.at(i);
    if (cfg.features != FeatureKind::none) {
      if (!s.image_id) missing.push_back(s.id + " (no image id)");
      else if (!features.count(*s.image_id)) missing.push_back(*s.image_id);
      else if (features.at(*s.image_id)->kind != cfg.features) missing.push_back(*s.image_id + " (wrong kind)");
    }
    if (cfg.mode == InputMode::text_caption && (!s.caption || s.caption->empty()))
      missing.push_back(s.id + " (no caption)");
  }
  if (!missing.empty()) {
    std::string msg = "missing inputs for " + std::to_string(missing.size()) + " sentence(s):";
    for (std::size_t i = 0; i < missing.size() && i < 20; ++i) msg += " " + missing[i];
    if (missing.size() > 20) msg += " ...";
    throw DataError(msg);
  }

  std::vector<Batch> out;
  std::vector<Encoded> rows;
  for (auto i : order) {
    rows.push_back(encode(sentences[i], i, features, vocab, cfg));
    if (rows.size() == batch_size) {
      out.push_back(collate(rows));
      rows.clear();
    }
  }
  if (!rows.empty()) out.push_back(collate(rows));
  return out;
}

std::vector<Batch> make_batches(const std::vector<Sentence>& sentences, const FeatureMap& features,
                                const Vocab& vocab, const BatchConfig& cfg, std::size_t batch_size) {
  std::vector<std::size_t> order(sentences.size());
  std::iota(order.begin(), order.end(), 0);
  return make_batches(sentences, order, features, vocab, cfg, batch_size);
}

}  // namespace mner
