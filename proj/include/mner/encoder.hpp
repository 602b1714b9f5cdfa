#pragma once

#include <span>
#include <string>
#include <vector>

#include "mner/batch.hpp"
#include "mner/tensor.hpp"

namespace mner {

struct EncoderConfig {
  std::size_t d_model = 64;
  std::size_t n_layers = 2;
  std::size_t n_heads = 4;
  std::size_t d_ff = 128;
  std::size_t max_len = 64;
  std::size_t char_dim = 16;
  std::size_t char_filters = 16;
  double dropout = 0.1;

  // Throws ConfigError.
  void validate() const;
};

struct Embedded {
  Tensor x;      // positions × d_model
  Tensor chars;  // positions × char_filters; zero rows where the position has no characters
};

struct HiddenStates {
  Tensor h;                                     // positions × d_model
  std::vector<std::vector<Tensor>> attention;  // [layer][head], positions × positions, detached
};

// Word + character + position + segment embeddings followed by a pre-LN
// transformer. Region slots (segment 2) embed a projected image vector plus
// one region-position vector shared by all slots.
class Encoder {
 public:
  Encoder() = default;
  // region_dim 0 leaves out the region projection.
  Encoder(ParamStore& store, const std::string& prefix, const EncoderConfig& cfg, std::size_t vocab_size,
          std::size_t char_vocab_size, std::size_t region_dim, Rng& rng);

  const EncoderConfig& config() const { return cfg_; }

  // Width-3 convolution over character embeddings (zero padded at both
  // ends), tanh, then max over positions. One row per word.
  Tensor char_features(const std::vector<std::span<const long>>& words) const;
  Tensor char_features(std::span<const long> word) const;

  // First `length` positions of batch row `row`. A non-null rng turns on
  // dropout.
  Embedded embed(const Batch& b, std::size_t row, std::size_t length, Rng* dropout_rng = nullptr) const;
  HiddenStates encode(const Tensor& x, std::span<const std::uint8_t> mask, Rng* dropout_rng = nullptr) const;

 private:
  struct Layer {
    Tensor ln1_g, ln1_b, wq, bq, wk, bk, wv, bv, wo, bo;
    Tensor ln2_g, ln2_b, w1, b1, w2, b2;
  };

  Tensor maybe_dropout(const Tensor& x, Rng* rng) const;

  EncoderConfig cfg_;
  std::size_t vocab_size_ = 0, char_vocab_size_ = 0, region_dim_ = 0;
  Tensor word_emb_, pos_emb_, seg_emb_;
  Tensor char_emb_, char_conv_w_, char_conv_b_, char_proj_;
  Tensor region_w_, region_b_, region_pos_;
  std::vector<Layer> layers_;
  Tensor final_g_, final_b_;
};

// Bidirectional LSTM over the rows of H selected by `text_mask`, in order.
// The query is a linear map of [final forward state ; final backward state].
class QueryLstm {
 public:
  QueryLstm() = default;
  QueryLstm(ParamStore& store, const std::string& prefix, std::size_t d_model, Rng& rng);

  // 1 × d_model. Throws ContractError when no row is selected.
  Tensor operator()(const Tensor& h, std::span<const std::uint8_t> text_mask) const;

 private:
  struct Direction {
    Tensor wx, wh, b;
  };
  Tensor run(const Direction& d, const Tensor& xs, bool reverse) const;

  std::size_t d_ = 0;
  Direction fwd_, bwd_;
  Tensor proj_w_, proj_b_;
};

}  // namespace mner
