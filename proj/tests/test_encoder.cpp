#include <gtest/gtest.h>

#include <cmath>
#include <cstring>

#include "mner/batch.hpp"
#include "mner/crf.hpp"
#include "mner/encoder.hpp"
#include "mner/vocab.hpp"
#include "test_util.hpp"

using namespace mner;
using mner::testing::random_tensor;
using mner::testing::weighted_sum;

namespace {

EncoderConfig small_config() {
  EncoderConfig c;
  c.d_model = 8;
  c.n_layers = 2;
  c.n_heads = 2;
  c.d_ff = 12;
  c.char_dim = 4;
  c.char_filters = 5;
  c.dropout = 0.0;
  return c;
}

Sentence sentence(std::vector<std::string> tokens) {
  Sentence s;
  s.id = "s";
  s.labels.assign(tokens.size(), "O");
  s.tokens = std::move(tokens);
  s.image_id = "img";
  s.caption = std::vector<std::string>{"a", "dog"};
  return s;
}

struct Fixture {
  std::vector<Sentence> sents;
  Vocab vocab;
  ParamStore store;
  Encoder enc;

  explicit Fixture(std::vector<Sentence> s, EncoderConfig cfg = small_config(), std::size_t region_dim = 0,
                   std::uint64_t seed = 1)
      : sents(std::move(s)), vocab(build_vocab(sents, {.include_captions = true})) {
    Rng rng(seed);
    enc = Encoder(store, "enc", cfg, vocab.num_tokens(), vocab.num_chars(), region_dim, rng);
  }

  Batch batch(BatchConfig cfg = {}, const FeatureMap& f = {}) const { return make_batches(sents, f, vocab, cfg, 64)[0]; }
};

std::vector<std::uint8_t> row_mask(const Batch& b, std::size_t r) {
  return {b.mask_row(r).begin(), b.mask_row(r).end()};
}

bool bitwise_equal(std::span<const double> a, std::span<const double> b) {
  return a.size() == b.size() && std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

}  // namespace

TEST(EncoderConfig, Validation) {
  auto c = small_config();
  EXPECT_NO_THROW(c.validate());
  c.n_heads = 3;
  EXPECT_THROW(c.validate(), ConfigError);
  c = small_config();
  c.d_ff = 0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = small_config();
  c.dropout = 1.0;
  EXPECT_THROW(c.validate(), ConfigError);
}

TEST(Embed, ShapeForEveryMode) {
  Fixture f({sentence({"x", "y", "z"})}, small_config(), 6);
  auto feats = std::make_shared<ImageFeatures>();
  feats->image_id = "img";
  feats->kind = FeatureKind::regional;
  feats->regions = 2;
  feats->dim = 6;
  feats->values.assign(12, 0.3);
  FeatureMap fm{{"img", feats}};
  for (auto mode : {InputMode::text, InputMode::text_caption, InputMode::text_regions}) {
    auto b = f.batch({.mode = mode, .features = mode == InputMode::text_regions ? FeatureKind::regional : FeatureKind::none}, fm);
    auto e = f.enc.embed(b, 0, b.width);
    EXPECT_EQ(e.x.shape(), (Shape{b.width, 8u}));
    EXPECT_EQ(e.chars.shape(), (Shape{b.width, 5u}));
  }
}

TEST(Embed, PositionTermSeparatesRepeats) {
  Fixture f({sentence({"rose", "a", "b", "c", "rose"})});
  auto b = f.batch();
  auto e = f.enc.embed(b, 0, b.width);
  EXPECT_EQ(b.token_row(0)[1], b.token_row(0)[5]);
  EXPECT_NE(e.x.row(1), e.x.row(5));
  EXPECT_EQ(e.chars.row(1), e.chars.row(5));
}

TEST(Embed, TokenOutOfRange) {
  Fixture f({sentence({"x"})});
  auto big = build_vocab({sentence({"p", "q", "r", "s", "t", "x"})}, {});
  auto b = make_batches({sentence({"t"})}, {}, big, {}, 1)[0];
  EXPECT_THROW(f.enc.embed(b, 0, b.width), ContractError);
}

TEST(CharFeatures, SingleCharFinite) {
  Fixture f({sentence({"a"})});
  std::vector<long> w{f.vocab.char_id("a")};
  auto c = f.enc.char_features(std::span<const long>(w));
  EXPECT_EQ(c.shape(), (Shape{1, 5}));
  for (double v : c.data()) EXPECT_TRUE(std::isfinite(v));
  EXPECT_THROW(f.enc.char_features(std::span<const long>()), ContractError);
}

TEST(CharFeatures, IdenticalWordsIdenticalVectors) {
  Fixture f({sentence({"abc", "abc"})});
  std::vector<long> w{f.vocab.char_id("a"), f.vocab.char_id("b"), f.vocab.char_id("c")};
  auto c = f.enc.char_features({std::span<const long>(w), std::span<const long>(w)});
  EXPECT_EQ(c.row(0), c.row(1));
}

// Recompute the three windows of a 3-char word by hand; the pooled vector
// is their coordinatewise max.
TEST(CharFeatures, MaxPoolDominatesWindows) {
  Fixture f({sentence({"abc"})});
  const auto& emb = f.store.get("enc.char");
  const auto& w = f.store.get("enc.char_conv.w");
  const auto& bias = f.store.get("enc.char_conv.b");
  const std::size_t cd = 4, nf = 5;
  std::vector<long> word{f.vocab.char_id("a"), f.vocab.char_id("b"), f.vocab.char_id("c")};
  auto pooled = f.enc.char_features(std::span<const long>(word));
  std::vector<double> best(nf, -2.0);
  for (int i = 0; i < 3; ++i) {
    std::vector<double> window(3 * cd, 0.0);
    for (int k = -1; k <= 1; ++k) {
      const int pos = i + k;
      if (pos < 0 || pos > 2) continue;
      for (std::size_t c = 0; c < cd; ++c)
        window[static_cast<std::size_t>(k + 1) * cd + c] = emb.at(static_cast<std::size_t>(word[static_cast<std::size_t>(pos)]), c);
    }
    for (std::size_t j = 0; j < nf; ++j) {
      double s = bias.at(j);
      for (std::size_t r = 0; r < 3 * cd; ++r) s += window[r] * w.at(r, j);
      const double act = std::tanh(s);
      EXPECT_GE(pooled.at(j), act - 1e-15);
      best[j] = std::max(best[j], act);
    }
  }
  for (std::size_t j = 0; j < nf; ++j) EXPECT_NEAR(pooled.at(j), best[j], 1e-14);
}

TEST(Encode, SingleRealTokenPointMass) {
  Fixture f({sentence({"x"})});
  Rng rng(3);
  auto x = random_tensor({5, 8}, rng, 1.0, false);
  std::vector<std::uint8_t> mask{1, 0, 0, 0, 0};
  auto hs = f.enc.encode(x, mask);
  for (const auto& layer : hs.attention)
    for (const auto& head : layer) {
      EXPECT_EQ(head.at(0, 0), 1.0);
      for (std::size_t k = 1; k < 5; ++k) EXPECT_EQ(head.at(0, k), 0.0);
    }
}

TEST(Encode, AttentionRowsSumToOne) {
  Fixture f({sentence({"x"})});
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Rng rng(seed);
    const std::size_t n = 2 + seed % 7;
    auto x = random_tensor({n, 8}, rng, 2.0, false);
    std::vector<std::uint8_t> mask(n, 1);
    for (std::size_t i = 1; i < n; ++i) mask[i] = rng() % 3 != 0;
    auto hs = f.enc.encode(x, mask);
    ASSERT_EQ(hs.attention.size(), 2u);
    for (const auto& layer : hs.attention) {
      ASSERT_EQ(layer.size(), 2u);
      for (const auto& head : layer)
        for (std::size_t r = 0; r < n; ++r) {
          double s = 0;
          for (std::size_t c = 0; c < n; ++c) {
            s += head.at(r, c);
            if (!mask[c]) EXPECT_EQ(head.at(r, c), 0.0);
          }
          EXPECT_NEAR(s, 1.0, 1e-6);
        }
    }
  }
}

// Real-position outputs do not depend on pad content, pad order or pad
// count. Masked keys get weight exactly 0, so equality is bitwise.
TEST(Encode, PadInvariance) {
  Fixture f({sentence({"x"})});
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Rng rng(seed + 50);
    const std::size_t real = 1 + seed % 4;
    auto base = random_tensor({real, 8}, rng, 1.0, false);
    const auto ref = f.enc.encode(base, std::vector<std::uint8_t>(real, 1)).h;
    for (std::size_t pads : {1u, 3u, 6u}) {
      auto padrows = random_tensor({pads, 8}, rng, 5.0, false);
      auto x = concat_rows({base, padrows});
      std::vector<std::uint8_t> mask(real + pads, 0);
      std::fill_n(mask.begin(), real, 1);
      auto h = f.enc.encode(x, mask).h;
      EXPECT_TRUE(bitwise_equal(slice_rows(h, 0, real).data(), ref.data())) << seed << " " << pads;
      if (pads >= 2) {
        // swap the first two pad rows
        std::vector<Tensor> parts{base, slice_rows(padrows, 1, 1), slice_rows(padrows, 0, 1)};
        if (pads > 2) parts.push_back(slice_rows(padrows, 2, pads - 2));
        auto swapped = concat_rows(parts);
        auto h2 = f.enc.encode(swapped, mask).h;
        for (std::size_t i = 0; i < real * 8; ++i) EXPECT_NEAR(h2.data()[i], ref.data()[i], 1e-9);
      }
    }
  }
}

TEST(Encode, BatchPaddingInvariance) {
  Fixture f({sentence({"aa", "bb"}), sentence({"cc", "dd", "ee", "ff", "gg", "hh"})});
  auto both = f.batch();
  auto alone = make_batches({f.sents[0]}, {}, f.vocab, {}, 1)[0];
  ASSERT_EQ(alone.width, 4u);
  ASSERT_EQ(both.width, 8u);
  auto h_alone = f.enc.encode(f.enc.embed(alone, 0, 4).x, row_mask(alone, 0)).h;
  auto h_both = f.enc.encode(f.enc.embed(both, 0, 8).x, row_mask(both, 0)).h;
  EXPECT_TRUE(bitwise_equal(slice_rows(h_both, 0, 4).data(), h_alone.data()));
}

TEST(Encode, DeterministicWithoutDropout) {
  Fixture a({sentence({"x", "y"})}), b({sentence({"x", "y"})});
  auto ba = a.batch(), bb = b.batch();
  auto ha = a.enc.encode(a.enc.embed(ba, 0, ba.width).x, row_mask(ba, 0)).h;
  auto hb = b.enc.encode(b.enc.embed(bb, 0, bb.width).x, row_mask(bb, 0)).h;
  EXPECT_TRUE(bitwise_equal(ha.data(), hb.data()));
}

TEST(Encode, DropoutOnlyWithRng) {
  auto cfg = small_config();
  cfg.dropout = 0.3;
  Fixture f({sentence({"x", "y", "z"})}, cfg);
  auto b = f.batch();
  auto m = row_mask(b, 0);
  auto eval1 = f.enc.encode(f.enc.embed(b, 0, b.width).x, m).h;
  auto eval2 = f.enc.encode(f.enc.embed(b, 0, b.width).x, m).h;
  EXPECT_TRUE(bitwise_equal(eval1.data(), eval2.data()));
  Rng r1(9), r2(9);
  auto t1 = f.enc.encode(f.enc.embed(b, 0, b.width, &r1).x, m, &r1).h;
  auto t2 = f.enc.encode(f.enc.embed(b, 0, b.width, &r2).x, m, &r2).h;
  EXPECT_TRUE(bitwise_equal(t1.data(), t2.data()));
  EXPECT_FALSE(bitwise_equal(t1.data(), eval1.data()));
}

TEST(QueryLstmTest, ShapeAndSingleToken) {
  ParamStore store;
  Rng rng(2);
  QueryLstm lstm(store, "q", 8, rng);
  auto h = random_tensor({4, 8}, rng, 1.0, false);
  std::vector<std::uint8_t> one{0, 1, 0, 0};
  auto q = lstm(h, one);
  EXPECT_EQ(q.shape(), (Shape{1, 8}));
  // with one step both directions read the same row: the result equals a
  // run over that row alone
  auto alone = lstm(slice_rows(h, 1, 1), std::vector<std::uint8_t>{1});
  EXPECT_TRUE(bitwise_equal(q.data(), alone.data()));
  EXPECT_THROW(lstm(h, std::vector<std::uint8_t>(4, 0)), ContractError);
}

TEST(QueryLstmTest, TrailingPadInvariance) {
  ParamStore store;
  Rng rng(5);
  QueryLstm lstm(store, "q", 8, rng);
  auto h = random_tensor({3, 8}, rng, 1.0, false);
  auto ref = lstm(h, std::vector<std::uint8_t>{1, 1, 1});
  for (std::size_t pads : {1u, 4u, 9u}) {
    auto padded = concat_rows({h, random_tensor({pads, 8}, rng, 3.0, false)});
    std::vector<std::uint8_t> m(3 + pads, 0);
    std::fill_n(m.begin(), 3, 1);
    auto q = lstm(padded, m);
    for (std::size_t i = 0; i < 8; ++i) EXPECT_NEAR(q.at(i), ref.at(i), 1e-9);
  }
}

TEST(QueryLstmTest, GradCheck) {
  ParamStore store;
  Rng rng(6);
  QueryLstm lstm(store, "q", 4, rng);
  auto h = random_tensor({3, 4}, rng);
  std::vector<Tensor> leaves{h};
  for (const auto& n : store.names()) leaves.push_back(store.get(n));
  std::vector<std::uint8_t> m{1, 1, 1};
  EXPECT_LE(grad_check([&] { return weighted_sum(lstm(h, m)); }, leaves), 1e-4);
}

// embed -> encode -> CRF loss against finite differences, every parameter.
TEST(EncoderGrad, EndToEndThreeTokens) {
  Fixture f({sentence({"ab", "c", "ab"})});
  Rng rng(12);
  auto crf = make_crf(f.store, "crf", 8, 9, rng);
  auto b = f.batch();
  const auto mask = row_mask(b, 0);
  std::vector<long> words{1, 2, 3};
  std::vector<int> gold{1, 2, 0};
  auto loss = [&] {
    auto h = f.enc.encode(f.enc.embed(b, 0, b.width).x, mask).h;
    return crf_nll(crf_emissions(gather_rows(h, words), crf), crf, gold);
  };
  std::vector<Tensor> leaves;
  for (const auto& n : f.store.names()) leaves.push_back(f.store.get(n));
  EXPECT_LE(grad_check(loss, leaves), 1e-4);
}

TEST(EncoderGrad, RegionPath) {
  auto s = sentence({"x", "y"});
  Fixture f({s}, small_config(), 3);
  auto feats = std::make_shared<ImageFeatures>();
  feats->image_id = "img";
  feats->kind = FeatureKind::regional;
  feats->regions = 2;
  feats->dim = 3;
  feats->values = {0.1, -0.4, 0.9, 1.2, 0.3, -0.7};
  auto b = f.batch({.mode = InputMode::text_regions, .features = FeatureKind::regional}, {{"img", feats}});
  const auto mask = row_mask(b, 0);
  auto loss = [&] { return weighted_sum(f.enc.encode(f.enc.embed(b, 0, b.width).x, mask).h); };
  std::vector<Tensor> leaves{f.store.get("enc.region.w"), f.store.get("enc.region.position"),
                             f.store.get("enc.layer0.attn.wq"), f.store.get("enc.segment")};
  EXPECT_LE(grad_check(loss, leaves), 1e-4);
}
