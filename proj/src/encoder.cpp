#include "mner/encoder.hpp"

#include <cmath>

#include "mner/error.hpp"

namespace mner {

void EncoderConfig::validate() const {
  auto positive = [](std::size_t v, const char* name) {
    if (v == 0) throw ConfigError(std::string("encoder.") + name + " must be >= 1");
  };
  positive(d_model, "d_model");
  positive(n_layers, "n_layers");
  positive(n_heads, "n_heads");
  positive(d_ff, "d_ff");
  positive(max_len, "max_len");
  positive(char_dim, "char_dim");
  positive(char_filters, "char_filters");
  if (d_model % n_heads != 0)
    throw ConfigError("encoder.d_model (" + std::to_string(d_model) + ") must be divisible by n_heads (" +
                      std::to_string(n_heads) + ")");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("encoder.dropout must lie in [0, 1)");
}

Encoder::Encoder(ParamStore& store, const std::string& prefix, const EncoderConfig& cfg, std::size_t vocab_size,
                 std::size_t char_vocab_size, std::size_t region_dim, Rng& rng)
    : cfg_(cfg), vocab_size_(vocab_size), char_vocab_size_(char_vocab_size), region_dim_(region_dim) {
  cfg_.validate();
  const std::size_t d = cfg.d_model;
  auto p = [&](const std::string& name) { return prefix + "." + name; };
  word_emb_ = store.create(p("word"), {vocab_size, d}, Init::normal, rng, 0.1);
  pos_emb_ = store.create(p("position"), {cfg.max_len, d}, Init::normal, rng, 0.1);
  seg_emb_ = store.create(p("segment"), {3, d}, Init::normal, rng, 0.1);
  char_emb_ = store.create(p("char"), {char_vocab_size, cfg.char_dim}, Init::normal, rng, 0.1);
  char_conv_w_ = store.create(p("char_conv.w"), {3 * cfg.char_dim, cfg.char_filters}, Init::xavier, rng);
  char_conv_b_ = store.create(p("char_conv.b"), {1, cfg.char_filters}, Init::zeros, rng);
  char_proj_ = store.create(p("char_proj"), {cfg.char_filters, d}, Init::xavier, rng);
  if (region_dim > 0) {
    region_w_ = store.create(p("region.w"), {region_dim, d}, Init::xavier, rng);
    region_b_ = store.create(p("region.b"), {1, d}, Init::zeros, rng);
    region_pos_ = store.create(p("region.position"), {1, d}, Init::normal, rng, 0.1);
  }
  for (std::size_t l = 0; l < cfg.n_layers; ++l) {
    const std::string q = "layer" + std::to_string(l) + ".";
    Layer L;
    L.ln1_g = store.create(p(q + "ln1.g"), {1, d}, Init::ones, rng);
    L.ln1_b = store.create(p(q + "ln1.b"), {1, d}, Init::zeros, rng);
    L.wq = store.create(p(q + "attn.wq"), {d, d}, Init::xavier, rng);
    L.bq = store.create(p(q + "attn.bq"), {1, d}, Init::zeros, rng);
    L.wk = store.create(p(q + "attn.wk"), {d, d}, Init::xavier, rng);
    L.bk = store.create(p(q + "attn.bk"), {1, d}, Init::zeros, rng);
    L.wv = store.create(p(q + "attn.wv"), {d, d}, Init::xavier, rng);
    L.bv = store.create(p(q + "attn.bv"), {1, d}, Init::zeros, rng);
    L.wo = store.create(p(q + "attn.wo"), {d, d}, Init::xavier, rng);
    L.bo = store.create(p(q + "attn.bo"), {1, d}, Init::zeros, rng);
    L.ln2_g = store.create(p(q + "ln2.g"), {1, d}, Init::ones, rng);
    L.ln2_b = store.create(p(q + "ln2.b"), {1, d}, Init::zeros, rng);
    L.w1 = store.create(p(q + "ff.w1"), {d, cfg.d_ff}, Init::xavier, rng);
    L.b1 = store.create(p(q + "ff.b1"), {1, cfg.d_ff}, Init::zeros, rng);
    L.w2 = store.create(p(q + "ff.w2"), {cfg.d_ff, d}, Init::xavier, rng);
    L.b2 = store.create(p(q + "ff.b2"), {1, d}, Init::zeros, rng);
    layers_.push_back(std::move(L));
  }
  final_g_ = store.create(p("final_ln.g"), {1, d}, Init::ones, rng);
  final_b_ = store.create(p("final_ln.b"), {1, d}, Init::zeros, rng);
}

Tensor Encoder::maybe_dropout(const Tensor& x, Rng* rng) const {
  return rng && cfg_.dropout > 0.0 ? dropout(x, cfg_.dropout, *rng) : x;
}

Tensor Encoder::char_features(const std::vector<std::span<const long>>& words) const {
  if (words.empty()) throw ContractError("char_features: no words");
  std::vector<long> left, mid, right;
  std::vector<std::size_t> offsets{0};
  for (const auto& w : words) {
    if (w.empty()) throw ContractError("char_features: empty word");
    for (long c : w)
      if (c < 0 || static_cast<std::size_t>(c) >= char_vocab_size_)
        throw ContractError("char_features: char index " + std::to_string(c) + " out of range");
    for (std::size_t i = 0; i < w.size(); ++i) {
      left.push_back(i == 0 ? -1 : w[i - 1]);
      mid.push_back(w[i]);
      right.push_back(i + 1 == w.size() ? -1 : w[i + 1]);
    }
    offsets.push_back(offsets.back() + w.size());
  }
  const Tensor windows =
      concat_cols({gather_rows(char_emb_, left), gather_rows(char_emb_, mid), gather_rows(char_emb_, right)});
  return segment_max(tanh(affine(windows, char_conv_w_, char_conv_b_)), offsets);
}

Tensor Encoder::char_features(std::span<const long> word) const {
  return char_features(std::vector<std::span<const long>>{word});
}

Embedded Encoder::embed(const Batch& b, std::size_t row, std::size_t length, Rng* dropout_rng) const {
  if (row >= b.rows || length == 0 || length > b.width) throw ContractError("embed: row or length out of range");
  const auto tokens = b.token_row(row);
  const auto segments = b.segment_row(row);
  const auto mask = b.mask_row(row);

  std::vector<long> word_idx(length), pos_idx(length), seg_idx(length), region_idx(length, -1), char_row(length, -1);
  std::vector<std::span<const long>> words;
  long next_region = 0, text_pos = 0;
  for (std::size_t p = 0; p < length; ++p) {
    seg_idx[p] = segments[p];
    if (segments[p] == kSegmentRegion) {  // slot k holds region k even when masked
      word_idx[p] = -1;
      pos_idx[p] = -1;
      region_idx[p] = next_region++;
      continue;
    }
    if (!mask[p]) {  // padding: content is irrelevant, keep it cheap and in range
      word_idx[p] = Vocab::kPad;
      pos_idx[p] = -1;
      continue;
    }
    if (tokens[p] < 0 || static_cast<std::size_t>(tokens[p]) >= vocab_size_)
      throw ContractError("embed: token index " + std::to_string(tokens[p]) + " out of range");
    if (static_cast<std::size_t>(text_pos) >= cfg_.max_len)
      throw ContractError("embed: position " + std::to_string(text_pos) + " exceeds max_len " +
                          std::to_string(cfg_.max_len));
    word_idx[p] = tokens[p];
    pos_idx[p] = text_pos++;
    const auto chars = b.word_chars(row, p);
    if (!chars.empty()) {
      char_row[p] = static_cast<long>(words.size());
      words.push_back(chars);
    }
  }

  Embedded out;
  Tensor x = add(gather_rows(word_emb_, word_idx), gather_rows(pos_emb_, pos_idx));
  x = add(x, gather_rows(seg_emb_, seg_idx));
  if (!words.empty()) {
    out.chars = gather_rows(char_features(words), char_row);
    x = add(x, matmul(out.chars, char_proj_));
  } else {
    out.chars = Tensor::zeros({length, cfg_.char_filters});
  }
  if (next_region > 0) {
    if (region_dim_ == 0) throw ContractError("embed: region slots present but the encoder has no region projection");
    const auto& img = b.images.at(row);
    if (!img || img->dim != region_dim_ || static_cast<long>(img->regions) < next_region)
      throw ContractError("embed: region features do not match the region slots");
    Tensor feats = slice_rows(img->tensor(), 0, static_cast<std::size_t>(next_region));
    Tensor regions = add_bias(affine(feats, region_w_, region_b_), region_pos_);
    x = add(x, gather_rows(regions, region_idx));
  }
  out.x = maybe_dropout(x, dropout_rng);
  return out;
}

HiddenStates Encoder::encode(const Tensor& x, std::span<const std::uint8_t> mask, Rng* dropout_rng) const {
  const std::size_t n = x.rows(), d = cfg_.d_model, dh = d / cfg_.n_heads;
  if (x.cols() != d) throw ShapeError("encode: input " + shape_str(x.shape()) + " does not have d_model columns");
  if (mask.size() != n) throw ShapeError("encode: mask length differs from the position count");
  const double inv = 1.0 / std::sqrt(static_cast<double>(dh));

  HiddenStates hs;
  Tensor h = x;
  for (const auto& L : layers_) {
    const Tensor a = layer_norm(h, L.ln1_g, L.ln1_b);
    const Tensor q = affine(a, L.wq, L.bq), k = affine(a, L.wk, L.bk), v = affine(a, L.wv, L.bv);
    std::vector<Tensor> heads;
    std::vector<Tensor> maps;
    for (std::size_t hd = 0; hd < cfg_.n_heads; ++hd) {
      const Tensor qh = slice_cols(q, hd * dh, dh);
      const Tensor kh = slice_cols(k, hd * dh, dh);
      const Tensor vh = slice_cols(v, hd * dh, dh);
      const Tensor w = masked_softmax(scale(matmul(qh, transpose(kh)), inv), mask);
      maps.push_back(w.detach());
      heads.push_back(matmul(w, vh));
    }
    hs.attention.push_back(std::move(maps));
    h = add(h, maybe_dropout(affine(concat_cols(heads), L.wo, L.bo), dropout_rng));
    const Tensor f = layer_norm(h, L.ln2_g, L.ln2_b);
    h = add(h, maybe_dropout(affine(relu(affine(f, L.w1, L.b1)), L.w2, L.b2), dropout_rng));
  }
  hs.h = layer_norm(h, final_g_, final_b_);
  return hs;
}

QueryLstm::QueryLstm(ParamStore& store, const std::string& prefix, std::size_t d_model, Rng& rng) : d_(d_model) {
  auto make = [&](const std::string& dir) {
    Direction D;
    D.wx = store.create(prefix + "." + dir + ".wx", {d_model, 4 * d_model}, Init::xavier, rng);
    D.wh = store.create(prefix + "." + dir + ".wh", {d_model, 4 * d_model}, Init::xavier, rng);
    D.b = store.create(prefix + "." + dir + ".b", {1, 4 * d_model}, Init::zeros, rng);
    // forget gate starts open
    auto bv = D.b.mutable_data();
    for (std::size_t i = d_model; i < 2 * d_model; ++i) bv[i] = 1.0;
    return D;
  };
  fwd_ = make("fwd");
  bwd_ = make("bwd");
  proj_w_ = store.create(prefix + ".proj.w", {2 * d_model, d_model}, Init::xavier, rng);
  proj_b_ = store.create(prefix + ".proj.b", {1, d_model}, Init::zeros, rng);
}

Tensor QueryLstm::run(const Direction& D, const Tensor& xs, bool reverse) const {
  const std::size_t n = xs.rows();
  const Tensor gates_x = affine(xs, D.wx, D.b);  // input part for every step at once
  Tensor h = Tensor::zeros({1, d_}), c = Tensor::zeros({1, d_});
  for (std::size_t s = 0; s < n; ++s) {
    const std::size_t t = reverse ? n - 1 - s : s;
    const Tensor z = add(slice_rows(gates_x, t, 1), matmul(h, D.wh));
    const Tensor i = sigmoid(slice_cols(z, 0, d_));
    const Tensor f = sigmoid(slice_cols(z, d_, d_));
    const Tensor g = tanh(slice_cols(z, 2 * d_, d_));
    const Tensor o = sigmoid(slice_cols(z, 3 * d_, d_));
    c = add(mul(f, c), mul(i, g));
    h = mul(o, tanh(c));
  }
  return h;
}

Tensor QueryLstm::operator()(const Tensor& h, std::span<const std::uint8_t> text_mask) const {
  if (text_mask.size() != h.rows()) throw ShapeError("lstm_query: mask length differs from the row count");
  if (h.cols() != d_) throw ShapeError("lstm_query: hidden width " + std::to_string(h.cols()) + " != " + std::to_string(d_));
  std::vector<long> rows;
  for (std::size_t i = 0; i < text_mask.size(); ++i)
    if (text_mask[i]) rows.push_back(static_cast<long>(i));
  if (rows.empty()) throw ContractError("lstm_query: no unmasked text positions");
  const Tensor xs = gather_rows(h, rows);
  return affine(concat_cols({run(fwd_, xs, false), run(bwd_, xs, true)}), proj_w_, proj_b_);
}

}  // namespace mner
