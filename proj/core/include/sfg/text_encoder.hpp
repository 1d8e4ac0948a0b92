#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "sfg/param_set.hpp"
#include "sfg/tensor.hpp"

namespace sfg {

inline constexpr int kBosId = 0;
inline constexpr int kUnkId = 1;

/// Closed toy vocabulary: the two specials, articles, colors, shapes and
/// spatial words. Id 0 is BOS, id 1 is UNK.
const std::vector<std::string>& vocabulary();
int vocabulary_size();
/// UNK for words outside the vocabulary.
int token_id(std::string_view word);
const std::string& token_word(int id);

struct TokenSeq {
  std::vector<int> ids;  // ids[0] == kBosId

  std::size_t size() const { return ids.size(); }
  friend bool operator==(const TokenSeq&, const TokenSeq&) = default;
};

/// Per-token embeddings, (n+1)×text_dim. Row 0 is the BOS embedding.
struct TextEmbeddings {
  Tensor vectors;

  std::size_t rows() const { return vectors.rows(); }
  /// Number of non-BOS tokens.
  std::size_t content_tokens() const { return vectors.rows() - 1; }
  std::size_t dim() const { return vectors.cols(); }

  /// Embeddings with row i removed and nothing re-encoded.
  TextEmbeddings without_row(std::size_t i) const;
  /// Mean over all rows; the pooled prompt vector used by the evaluation code.
  std::vector<double> pooled() const;

  friend bool operator==(const TextEmbeddings&, const TextEmbeddings&) = default;
};

struct EncoderConfig {
  int text_dim = 32;
  int max_len = 32;
  std::uint64_t seed = 1234;
};

/// Frozen random weights of a one-layer causal self-attention encoder.
struct EncoderParams {
  EncoderConfig config;
  Tensor token_table;  // V×d
  Tensor pos_table;    // max_len×d
  Tensor wq, wk, wv, wo, w_out;  // d×d each

  static EncoderParams random(const EncoderConfig& config);

  ParamSet to_params() const;
  static EncoderParams from_params(const ParamSet& params);
};

/// Lowercase, whitespace split, BOS prepended, UNK for unknown words.
TokenSeq tokenize(std::string_view text);

/// Causal encoding: output row j depends only on tokens 0..j, and two token
/// sequences sharing a k-token prefix produce bit-identical rows 0..k−1.
TextEmbeddings encode(const TokenSeq& tokens, const EncoderParams& params);

/// The empty prompt, encode([BOS]).
TextEmbeddings null_embeddings(const EncoderParams& params);

}  // namespace sfg
