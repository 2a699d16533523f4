// Copyright 2026 The MLMME Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef MLMME_ENCODER_H_
#define MLMME_ENCODER_H_

#include <cstdint>
#include <iosfwd>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "mlmme/numerics.h"

namespace mlmme {

using TokenId = std::uint32_t;
using TokenSequence = std::vector<TokenId>;

inline constexpr TokenId kPaddingId = 0;
inline constexpr TokenId kUnknownId = 1;
inline constexpr std::size_t kReservedTokens = 2;

// Splits on ASCII whitespace. No other normalization is applied.
std::vector<std::string> tokenize(std::string_view text);

// Per-language word index. Index 0 is padding and 1 is the unknown word;
// corpus tokens start at 2.
class Vocabulary {
 public:
  Vocabulary() = default;
  explicit Vocabulary(std::string language) : language_(std::move(language)) {}

  // Tokens with frequency >= min_count, ordered by descending frequency and
  // then lexicographically.
  static Vocabulary build(std::string language,
                          const std::vector<std::vector<std::string>>& corpus,
                          std::size_t min_count = 1);

  // Builds from an explicit ordered token list (index = position + 2).
  static Vocabulary from_tokens(std::string language,
                                std::vector<std::string> tokens);

  const std::string& language() const { return language_; }
  // Including the two reserved entries.
  std::size_t size() const { return tokens_.size() + kReservedTokens; }

  TokenId index(std::string_view token) const;
  const std::string& token(TokenId id) const;
  TokenSequence encode(const std::vector<std::string>& tokens) const;

  // Corpus tokens in index order (reserved entries excluded).
  const std::vector<std::string>& tokens() const { return tokens_; }

  // Text form: one token per line, line number = index - 2.
  void save(std::ostream& out) const;
  static Vocabulary load(std::istream& in, std::string language);

  bool operator==(const Vocabulary& o) const {
    return language_ == o.language_ && tokens_ == o.tokens_;
  }

 private:
  std::string language_;
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, TokenId> index_;
};

// Rows of `table` for each token, in order. The table's padding row is
// expected to be zero.
template <typename T>
Matrix<T> lookup(const TokenSequence& sentence, const Matrix<T>& table);

// Scatter-adds per-token gradients into the table gradient. The padding row
// never receives gradient.
template <typename T>
void lookup_backward(const TokenSequence& sentence, const Matrix<T>& grad_rows,
                     Matrix<T>& grad_table);

template <typename T>
struct GruParameters {
  Matrix<T> w_z, w_r, w_h;  // hidden x input
  Matrix<T> u_z, u_r, u_h;  // hidden x hidden
  Matrix<T> b_z, b_r, b_h;  // hidden x 1

  static GruParameters zeros(std::size_t hidden, std::size_t input);
  // Input matrices Gaussian(0, stddev), recurrent matrices orthogonal,
  // biases zero.
  static GruParameters initialized(std::size_t hidden, std::size_t input,
                                   double stddev, Rng& rng);

  std::size_t hidden_dim() const { return u_z.rows(); }
  std::size_t input_dim() const { return w_z.cols(); }

  template <typename F>
  void for_each(F&& f) {
    f("W_z", w_z); f("W_r", w_r); f("W_h", w_h);
    f("U_z", u_z); f("U_r", u_r); f("U_h", u_h);
    f("b_z", b_z); f("b_r", b_r); f("b_h", b_h);
  }
  template <typename F>
  void for_each(F&& f) const {
    f("W_z", w_z); f("W_r", w_r); f("W_h", w_h);
    f("U_z", u_z); f("U_r", u_r); f("U_h", u_h);
    f("b_z", b_z); f("b_r", b_r); f("b_h", b_h);
  }

  bool operator==(const GruParameters&) const = default;
};

// Activations kept by gru_forward for the backward pass. Row t of `hidden`
// is h_t with h_0 = 0, so it has N + 1 rows; the gate matrices have N rows
// indexed from step 1.
template <typename T>
struct GruCache {
  Matrix<T> inputs;
  Matrix<T> hidden;
  Matrix<T> update;     // z_t
  Matrix<T> reset;      // r_t
  Matrix<T> candidate;  // h~_t
  Matrix<T> reset_hidden;  // r_t * h_{t-1}

  std::size_t steps() const { return inputs.rows(); }
  std::span<const T> last_hidden() const { return hidden.row(steps()); }
};

// z_t = sigm(W_z x_t + U_z h_{t-1} + b_z)
// r_t = sigm(W_r x_t + U_r h_{t-1} + b_r)
// h~_t = tanh(W_h x_t + U_h (r_t * h_{t-1}) + b_h)
// h_t = (1 - z_t) * h_{t-1} + z_t * h~_t
template <typename T>
GruCache<T> gru_forward(const Matrix<T>& inputs, const GruParameters<T>& params);

// Accumulates parameter gradients into `grads` and returns dL/dx_t (N rows).
// `grad_hidden` holds dL/dh_t for t = 1..N as N rows.
template <typename T>
Matrix<T> gru_backward(const GruCache<T>& cache, const GruParameters<T>& params,
                       const Matrix<T>& grad_hidden, GruParameters<T>& grads);

// Everything language-specific: word embeddings, the recurrent encoder, and
// the map from its hidden state into the shared space.
template <typename T>
struct TextEncoderParameters {
  Matrix<T> embedding;   // vocab x embed; row 0 stays zero
  GruParameters<T> gru;  // hidden x embed
  Matrix<T> projection;  // multimodal x hidden

  static TextEncoderParameters zeros(std::size_t vocab, std::size_t embed,
                                     std::size_t hidden,
                                     std::size_t multimodal);
  static TextEncoderParameters initialized(std::size_t vocab,
                                           std::size_t embed,
                                           std::size_t hidden,
                                           std::size_t multimodal,
                                           double stddev, Rng& rng);

  std::size_t multimodal_dim() const { return projection.rows(); }

  template <typename F>
  void for_each(F&& f) {
    f("embedding", embedding);
    gru.for_each([&](const char* n, Matrix<T>& m) {
      f(std::string("gru.") + n, m);
    });
    f("projection", projection);
  }
  template <typename F>
  void for_each(F&& f) const {
    f("embedding", embedding);
    gru.for_each([&](const char* n, const Matrix<T>& m) {
      f(std::string("gru.") + n, m);
    });
    f("projection", projection);
  }

  bool operator==(const TextEncoderParameters&) const = default;
};

// A point in the shared space. Unit norm in inference mode.
template <typename T>
struct SentenceEmbedding {
  std::vector<T> values;
  std::string language;
};

// Intermediate state of one encode_sentence call.
template <typename T>
struct SentenceTrace {
  TokenSequence sentence;
  GruCache<T> gru;
  std::vector<T> dropout_mask;
  std::vector<T> output;  // normalized embedding
  T norm = 0;             // pre-normalization norm; 0 if fully dropped
};

// lookup -> GRU -> last hidden state -> projection -> dropout (training
// only) -> L2 normalization. A training-mode vector that dropout zeroed
// completely comes out as zero and passes no gradient.
template <typename T>
std::vector<T> encode_sentence(const TokenSequence& sentence,
                               const TextEncoderParameters<T>& params,
                               double dropout, bool training, Rng& rng,
                               SentenceTrace<T>* trace = nullptr);

// Accumulates into `grads` the gradient of a loss whose derivative with
// respect to the encoded vector is `grad_output`.
template <typename T>
void encode_sentence_backward(const SentenceTrace<T>& trace,
                              const TextEncoderParameters<T>& params,
                              std::span<const T> grad_output,
                              TextEncoderParameters<T>& grads);

}  // namespace mlmme

#endif  // MLMME_ENCODER_H_
