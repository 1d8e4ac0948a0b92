#include "sfg/text_encoder.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <sstream>

#include "sfg/errors.hpp"
#include "sfg/rng.hpp"

namespace sfg {

const std::vector<std::string>& vocabulary() {
  static const std::vector<std::string> words = {
      "<bos>", "<unk>", "a",     "red",   "green", "blue",  "yellow", "square", "circle",
      "cross", "left",  "right", "of",    "above", "below", "next",   "to",
  };
  return words;
}

int vocabulary_size() { return static_cast<int>(vocabulary().size()); }

int token_id(std::string_view word) {
  const auto& words = vocabulary();
  // Specials are not reachable from text.
  for (std::size_t i = 2; i < words.size(); ++i) {
    if (words[i] == word) return static_cast<int>(i);
  }
  return kUnkId;
}

const std::string& token_word(int id) {
  const auto& words = vocabulary();
  if (id < 0 || id >= static_cast<int>(words.size())) {
    throw DomainError("token id out of range: " + std::to_string(id));
  }
  return words[static_cast<std::size_t>(id)];
}

TextEmbeddings TextEmbeddings::without_row(std::size_t i) const {
  if (i >= rows()) throw DimensionError("without_row: index out of range");
  Tensor out = Tensor::matrix(rows() - 1, dim());
  std::size_t dst = 0;
  for (std::size_t r = 0; r < rows(); ++r) {
    if (r == i) continue;
    std::copy_n(vectors.row(r).begin(), dim(), out.row(dst++).begin());
  }
  return {std::move(out)};
}

std::vector<double> TextEmbeddings::pooled() const {
  std::vector<double> out(dim(), 0.0);
  for (std::size_t r = 0; r < rows(); ++r)
    for (std::size_t j = 0; j < dim(); ++j) out[j] += vectors(r, j);
  for (double& v : out) v /= static_cast<double>(rows());
  return out;
}

EncoderParams EncoderParams::random(const EncoderConfig& config) {
  if (config.text_dim < 1 || config.max_len < 1) throw ConfigError("encoder dims must be positive");
  const auto d = static_cast<std::size_t>(config.text_dim);
  const double w_std = 1.0 / std::sqrt(static_cast<double>(d));
  Rng root(config.seed, 0x7e47);

  EncoderParams p;
  p.config = config;
  Rng r0 = root.substream(0);
  p.token_table = randn(r0, {static_cast<std::size_t>(vocabulary_size()), d});
  Rng r1 = root.substream(1);
  p.pos_table = scale(randn(r1, {static_cast<std::size_t>(config.max_len), d}), 0.5);
  Tensor* mats[] = {&p.wq, &p.wk, &p.wv, &p.wo, &p.w_out};
  std::uint64_t id = 2;
  for (Tensor* m : mats) {
    Rng r = root.substream(id++);
    *m = scale(randn(r, {d, d}), w_std);
  }
  return p;
}

ParamSet EncoderParams::to_params() const {
  ParamSet out;
  out.add("config", Tensor({3}, {static_cast<double>(config.text_dim),
                                 static_cast<double>(config.max_len),
                                 static_cast<double>(config.seed)}));
  out.add("token_table", token_table);
  out.add("pos_table", pos_table);
  out.add("wq", wq);
  out.add("wk", wk);
  out.add("wv", wv);
  out.add("wo", wo);
  out.add("w_out", w_out);
  return out;
}

EncoderParams EncoderParams::from_params(const ParamSet& params) {
  EncoderParams p;
  const Tensor& cfg = params.at("config");
  if (cfg.size() != 3) throw FormatError("encoder config has wrong length");
  p.config.text_dim = static_cast<int>(cfg[0]);
  p.config.max_len = static_cast<int>(cfg[1]);
  p.config.seed = static_cast<std::uint64_t>(cfg[2]);
  p.token_table = params.at("token_table");
  p.pos_table = params.at("pos_table");
  p.wq = params.at("wq");
  p.wk = params.at("wk");
  p.wv = params.at("wv");
  p.wo = params.at("wo");
  p.w_out = params.at("w_out");
  const auto d = static_cast<std::size_t>(p.config.text_dim);
  const std::vector<std::size_t> square = {d, d};
  if (p.token_table.shape() != std::vector<std::size_t>{static_cast<std::size_t>(vocabulary_size()), d} ||
      p.pos_table.shape() != std::vector<std::size_t>{static_cast<std::size_t>(p.config.max_len), d} ||
      p.wq.shape() != square || p.wk.shape() != square || p.wv.shape() != square ||
      p.wo.shape() != square || p.w_out.shape() != square) {
    throw FormatError("encoder tensors have inconsistent shapes");
  }
  return p;
}

TokenSeq tokenize(std::string_view text) {
  TokenSeq seq;
  seq.ids.push_back(kBosId);
  std::string lowered(text);
  std::transform(lowered.begin(), lowered.end(), lowered.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  std::istringstream words(lowered);
  std::string w;
  while (words >> w) seq.ids.push_back(token_id(w));
  return seq;
}

TextEmbeddings encode(const TokenSeq& tokens, const EncoderParams& params) {
  const std::size_t n = tokens.size();
  if (n == 0 || tokens.ids[0] != kBosId) throw DomainError("token sequence must start with BOS");
  if (n > static_cast<std::size_t>(params.config.max_len)) {
    throw DomainError("prompt longer than encoder max_len (" +
                      std::to_string(params.config.max_len) + ")");
  }
  const std::size_t d = params.token_table.cols();

  Tensor e = Tensor::matrix(n, d);
  for (std::size_t j = 0; j < n; ++j) {
    const int id = tokens.ids[j];
    if (id < 0 || id >= vocabulary_size()) throw DomainError("token id out of range");
    for (std::size_t c = 0; c < d; ++c) {
      e(j, c) = params.token_table(static_cast<std::size_t>(id), c) + params.pos_table(j, c);
    }
  }
  const Tensor q = matmul(e, params.wq);
  const Tensor k = matmul(e, params.wk);
  const Tensor v = matmul(e, params.wv);
  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(d));

  // Each row attends over its own prefix only; no masked terms enter any sum.
  Tensor mixed = Tensor::matrix(n, d);
  std::vector<double> w(n);
  for (std::size_t j = 0; j < n; ++j) {
    double mx = -INFINITY;
    for (std::size_t i = 0; i <= j; ++i) {
      w[i] = dot(q.row(j), k.row(i)) * inv_sqrt_d;
      mx = std::max(mx, w[i]);
    }
    double sum = 0.0;
    for (std::size_t i = 0; i <= j; ++i) {
      w[i] = std::exp(w[i] - mx);
      sum += w[i];
    }
    for (std::size_t i = 0; i <= j; ++i) {
      const double p = w[i] / sum;
      for (std::size_t c = 0; c < d; ++c) mixed(j, c) += p * v(i, c);
    }
  }
  Tensor h = add(e, matmul(mixed, params.wo));
  return {matmul(h, params.w_out)};
}

TextEmbeddings null_embeddings(const EncoderParams& params) {
  return encode(TokenSeq{{kBosId}}, params);
}

}  // namespace sfg
