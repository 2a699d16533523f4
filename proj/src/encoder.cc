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

#include "mlmme/encoder.h"

#include <algorithm>
#include <cctype>
#include <istream>
#include <map>
#include <ostream>

namespace mlmme {

namespace {

const std::string kPaddingToken = "<pad>";
const std::string kUnknownToken = "<unk>";

template <typename T>
T sigmoid(T x) {
  return T(1) / (T(1) + std::exp(-x));
}

}  // namespace

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i])))
      ++i;
    std::size_t start = i;
    while (i < text.size() &&
           !std::isspace(static_cast<unsigned char>(text[i])))
      ++i;
    if (i > start) out.emplace_back(text.substr(start, i - start));
  }
  return out;
}

Vocabulary Vocabulary::build(
    std::string language, const std::vector<std::vector<std::string>>& corpus,
    std::size_t min_count) {
  if (corpus.empty()) throw InvalidArgument("build_vocabulary: empty corpus");
  std::map<std::string, std::size_t> counts;
  for (const auto& sentence : corpus)
    for (const auto& tok : sentence) ++counts[tok];
  std::vector<std::pair<std::string, std::size_t>> kept;
  for (auto& [tok, n] : counts)
    if (n >= min_count) kept.emplace_back(tok, n);
  std::stable_sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  std::vector<std::string> tokens;
  tokens.reserve(kept.size());
  for (auto& [tok, n] : kept) tokens.push_back(tok);
  return from_tokens(std::move(language), std::move(tokens));
}

Vocabulary Vocabulary::from_tokens(std::string language,
                                   std::vector<std::string> tokens) {
  Vocabulary v(std::move(language));
  v.tokens_ = std::move(tokens);
  for (std::size_t i = 0; i < v.tokens_.size(); ++i) {
    auto [it, inserted] =
        v.index_.emplace(v.tokens_[i], TokenId(i + kReservedTokens));
    if (!inserted)
      throw InvalidArgument("vocabulary: duplicate token '" + v.tokens_[i] +
                            "'");
  }
  return v;
}

TokenId Vocabulary::index(std::string_view token) const {
  auto it = index_.find(std::string(token));
  return it == index_.end() ? kUnknownId : it->second;
}

const std::string& Vocabulary::token(TokenId id) const {
  if (id == kPaddingId) return kPaddingToken;
  if (id == kUnknownId) return kUnknownToken;
  if (id >= size())
    throw InvalidArgument("vocabulary: index " + std::to_string(id) +
                          " out of range");
  return tokens_[id - kReservedTokens];
}

TokenSequence Vocabulary::encode(const std::vector<std::string>& tokens) const {
  TokenSequence out;
  out.reserve(tokens.size());
  for (const auto& t : tokens) out.push_back(index(t));
  return out;
}

void Vocabulary::save(std::ostream& out) const {
  for (const auto& t : tokens_) out << t << '\n';
}

Vocabulary Vocabulary::load(std::istream& in, std::string language) {
  std::vector<std::string> tokens;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    tokens.push_back(line);
  }
  return from_tokens(std::move(language), std::move(tokens));
}

template <typename T>
Matrix<T> lookup(const TokenSequence& sentence, const Matrix<T>& table) {
  Matrix<T> out(sentence.size(), table.cols());
  for (std::size_t i = 0; i < sentence.size(); ++i) {
    if (sentence[i] >= table.rows())
      throw InvalidArgument("lookup: token index " +
                            std::to_string(sentence[i]) +
                            " outside table of " +
                            std::to_string(table.rows()) + " rows");
    auto src = table.row(sentence[i]);
    std::copy(src.begin(), src.end(), out.row(i).begin());
  }
  return out;
}

template <typename T>
void lookup_backward(const TokenSequence& sentence, const Matrix<T>& grad_rows,
                     Matrix<T>& grad_table) {
  if (grad_rows.rows() != sentence.size() ||
      grad_rows.cols() != grad_table.cols())
    throw InvalidArgument("lookup_backward: shape mismatch");
  for (std::size_t i = 0; i < sentence.size(); ++i) {
    const TokenId id = sentence[i];
    if (id == kPaddingId) continue;
    if (id >= grad_table.rows())
      throw InvalidArgument("lookup_backward: token index out of range");
    axpy(grad_table.row(id), grad_rows.row(i));
  }
}

template <typename T>
GruParameters<T> GruParameters<T>::zeros(std::size_t hidden,
                                         std::size_t input) {
  GruParameters p;
  p.w_z = p.w_r = p.w_h = Matrix<T>(hidden, input);
  p.u_z = p.u_r = p.u_h = Matrix<T>(hidden, hidden);
  p.b_z = p.b_r = p.b_h = Matrix<T>(hidden, 1);
  return p;
}

template <typename T>
GruParameters<T> GruParameters<T>::initialized(std::size_t hidden,
                                               std::size_t input,
                                               double stddev, Rng& rng) {
  GruParameters p = zeros(hidden, input);
  p.w_z = gaussian_init<T>(hidden, input, stddev, rng);
  p.w_r = gaussian_init<T>(hidden, input, stddev, rng);
  p.w_h = gaussian_init<T>(hidden, input, stddev, rng);
  p.u_z = orthogonal_init<T>(hidden, rng);
  p.u_r = orthogonal_init<T>(hidden, rng);
  p.u_h = orthogonal_init<T>(hidden, rng);
  return p;
}

template <typename T>
GruCache<T> gru_forward(const Matrix<T>& inputs,
                        const GruParameters<T>& params) {
  const std::size_t n = inputs.rows();
  const std::size_t hd = params.hidden_dim();
  if (n == 0) throw InvalidArgument("gru_forward: empty input sequence");
  if (inputs.cols() != params.input_dim())
    throw InvalidArgument("gru_forward: input width " +
                          std::to_string(inputs.cols()) +
                          " does not match W of " +
                          shape_string(params.w_z.rows(), params.w_z.cols()));

  GruCache<T> c;
  c.inputs = inputs;
  c.hidden = Matrix<T>(n + 1, hd);
  c.update = Matrix<T>(n, hd);
  c.reset = Matrix<T>(n, hd);
  c.candidate = Matrix<T>(n, hd);
  c.reset_hidden = Matrix<T>(n, hd);

  std::vector<T> a(hd);
  for (std::size_t t = 0; t < n; ++t) {
    auto x = inputs.row(t);
    std::span<const T> prev = c.hidden.row(t);
    auto z = c.update.row(t);
    auto r = c.reset.row(t);
    auto cand = c.candidate.row(t);
    auto rh = c.reset_hidden.row(t);

    gemv(params.w_z, x, std::span<T>(a));
    gemv(params.u_z, prev, std::span<T>(a), true);
    for (std::size_t i = 0; i < hd; ++i) z[i] = sigmoid(a[i] + params.b_z[i]);

    gemv(params.w_r, x, std::span<T>(a));
    gemv(params.u_r, prev, std::span<T>(a), true);
    for (std::size_t i = 0; i < hd; ++i) r[i] = sigmoid(a[i] + params.b_r[i]);

    for (std::size_t i = 0; i < hd; ++i) rh[i] = r[i] * prev[i];
    gemv(params.w_h, x, std::span<T>(a));
    gemv(params.u_h, std::span<const T>(rh), std::span<T>(a), true);
    for (std::size_t i = 0; i < hd; ++i)
      cand[i] = std::tanh(a[i] + params.b_h[i]);

    auto h = c.hidden.row(t + 1);
    for (std::size_t i = 0; i < hd; ++i)
      h[i] = (T(1) - z[i]) * prev[i] + z[i] * cand[i];
  }
  return c;
}

template <typename T>
Matrix<T> gru_backward(const GruCache<T>& cache, const GruParameters<T>& params,
                       const Matrix<T>& grad_hidden, GruParameters<T>& grads) {
  const std::size_t n = cache.steps();
  const std::size_t hd = params.hidden_dim();
  if (grad_hidden.rows() != n || grad_hidden.cols() != hd ||
      cache.hidden.rows() != n + 1 || cache.hidden.cols() != hd ||
      cache.inputs.cols() != params.input_dim())
    throw InvalidArgument("gru_backward: cache or gradient shape mismatch");
  if (!(grads.w_z.same_shape(params.w_z) && grads.u_z.same_shape(params.u_z) &&
        grads.b_z.same_shape(params.b_z)))
    throw InvalidArgument("gru_backward: gradient buffers do not match");

  Matrix<T> grad_inputs(n, params.input_dim());
  std::vector<T> dh(hd, T(0));  // carried dL/dh_{t}
  std::vector<T> dprev(hd), da_h(hd), da_z(hd), da_r(hd), drh(hd);

  for (std::size_t step = n; step-- > 0;) {
    auto upstream = grad_hidden.row(step);
    for (std::size_t i = 0; i < hd; ++i) dh[i] += upstream[i];

    auto x = cache.inputs.row(step);
    auto prev = cache.hidden.row(step);
    auto z = cache.update.row(step);
    auto r = cache.reset.row(step);
    auto cand = cache.candidate.row(step);
    auto rh = cache.reset_hidden.row(step);
    auto dx = grad_inputs.row(step);

    for (std::size_t i = 0; i < hd; ++i) {
      const T dz = dh[i] * (cand[i] - prev[i]);
      const T dcand = dh[i] * z[i];
      dprev[i] = dh[i] * (T(1) - z[i]);
      da_h[i] = dcand * (T(1) - cand[i] * cand[i]);
      da_z[i] = dz * z[i] * (T(1) - z[i]);
    }

    // Candidate branch.
    add_outer(grads.w_h, std::span<const T>(da_h), x);
    add_outer(grads.u_h, std::span<const T>(da_h), rh);
    axpy(grads.b_h.values(), std::span<const T>(da_h));
    gemv_transposed(params.w_h, std::span<const T>(da_h), dx, true);
    gemv_transposed(params.u_h, std::span<const T>(da_h), std::span<T>(drh));
    for (std::size_t i = 0; i < hd; ++i) {
      const T dr = drh[i] * prev[i];
      dprev[i] += drh[i] * r[i];
      da_r[i] = dr * r[i] * (T(1) - r[i]);
    }

    // Update gate.
    add_outer(grads.w_z, std::span<const T>(da_z), x);
    add_outer(grads.u_z, std::span<const T>(da_z), prev);
    axpy(grads.b_z.values(), std::span<const T>(da_z));
    gemv_transposed(params.w_z, std::span<const T>(da_z), dx, true);
    gemv_transposed(params.u_z, std::span<const T>(da_z), std::span<T>(dprev),
                    true);

    // Reset gate.
    add_outer(grads.w_r, std::span<const T>(da_r), x);
    add_outer(grads.u_r, std::span<const T>(da_r), prev);
    axpy(grads.b_r.values(), std::span<const T>(da_r));
    gemv_transposed(params.w_r, std::span<const T>(da_r), dx, true);
    gemv_transposed(params.u_r, std::span<const T>(da_r), std::span<T>(dprev),
                    true);

    dh.swap(dprev);
  }
  return grad_inputs;
}

template <typename T>
TextEncoderParameters<T> TextEncoderParameters<T>::zeros(
    std::size_t vocab, std::size_t embed, std::size_t hidden,
    std::size_t multimodal) {
  TextEncoderParameters p;
  p.embedding = Matrix<T>(vocab, embed);
  p.gru = GruParameters<T>::zeros(hidden, embed);
  p.projection = Matrix<T>(multimodal, hidden);
  return p;
}

template <typename T>
TextEncoderParameters<T> TextEncoderParameters<T>::initialized(
    std::size_t vocab, std::size_t embed, std::size_t hidden,
    std::size_t multimodal, double stddev, Rng& rng) {
  if (vocab < kReservedTokens)
    throw InvalidArgument("text encoder: vocabulary lacks reserved entries");
  TextEncoderParameters p;
  p.embedding = gaussian_init<T>(vocab, embed, stddev, rng);
  for (T& v : p.embedding.row(kPaddingId)) v = T(0);
  p.gru = GruParameters<T>::initialized(hidden, embed, stddev, rng);
  p.projection = gaussian_init<T>(multimodal, hidden, stddev, rng);
  return p;
}

template <typename T>
std::vector<T> encode_sentence(const TokenSequence& sentence,
                               const TextEncoderParameters<T>& params,
                               double dropout, bool training, Rng& rng,
                               SentenceTrace<T>* trace) {
  if (sentence.empty()) throw InvalidArgument("encode_sentence: empty sentence");
  GruCache<T> cache = gru_forward(lookup(sentence, params.embedding), params.gru);
  std::vector<T> projected(params.projection.rows());
  gemv(params.projection, cache.last_hidden(), std::span<T>(projected));

  std::vector<T> mask;
  std::vector<T> out = dropout_apply(std::span<const T>(projected), dropout,
                                     training, rng, trace ? &mask : nullptr);
  T norm = 0;
  const T raw_norm = l2_norm(std::span<const T>(out));
  if (training && raw_norm == T(0)) {
    // Fully dropped; see header.
  } else {
    norm = normalize_in_place(std::span<T>(out));
  }
  if (trace) {
    trace->sentence = sentence;
    trace->gru = std::move(cache);
    trace->dropout_mask = std::move(mask);
    trace->output = out;
    trace->norm = norm;
  }
  return out;
}

template <typename T>
void encode_sentence_backward(const SentenceTrace<T>& trace,
                              const TextEncoderParameters<T>& params,
                              std::span<const T> grad_output,
                              TextEncoderParameters<T>& grads) {
  if (grad_output.size() != trace.output.size() ||
      trace.output.size() != params.projection.rows())
    throw InvalidArgument("encode_sentence_backward: gradient length mismatch");
  if (trace.norm == T(0)) return;
  std::vector<T> grad_u = normalize_backward(
      std::span<const T>(trace.output), trace.norm, grad_output);
  for (std::size_t i = 0; i < grad_u.size(); ++i)
    grad_u[i] *= trace.dropout_mask[i];

  const std::size_t n = trace.gru.steps();
  add_outer(grads.projection, std::span<const T>(grad_u),
            trace.gru.last_hidden());
  Matrix<T> grad_hidden(n, params.gru.hidden_dim());
  gemv_transposed(params.projection, std::span<const T>(grad_u),
                  grad_hidden.row(n - 1));
  Matrix<T> grad_inputs =
      gru_backward(trace.gru, params.gru, grad_hidden, grads.gru);
  lookup_backward(trace.sentence, grad_inputs, grads.embedding);
}

#define MLMME_INSTANTIATE(T)                                                  \
  template Matrix<T> lookup<T>(const TokenSequence&, const Matrix<T>&);       \
  template void lookup_backward<T>(const TokenSequence&, const Matrix<T>&,    \
                                   Matrix<T>&);                               \
  template struct GruParameters<T>;                                           \
  template GruCache<T> gru_forward<T>(const Matrix<T>&,                       \
                                      const GruParameters<T>&);               \
  template Matrix<T> gru_backward<T>(const GruCache<T>&,                      \
                                     const GruParameters<T>&,                 \
                                     const Matrix<T>&, GruParameters<T>&);    \
  template struct TextEncoderParameters<T>;                                   \
  template std::vector<T> encode_sentence<T>(                                 \
      const TokenSequence&, const TextEncoderParameters<T>&, double, bool,    \
      Rng&, SentenceTrace<T>*);                                               \
  template void encode_sentence_backward<T>(                                  \
      const SentenceTrace<T>&, const TextEncoderParameters<T>&,               \
      std::span<const T>, TextEncoderParameters<T>&);

MLMME_INSTANTIATE(float)
MLMME_INSTANTIATE(double)

#undef MLMME_INSTANTIATE

}  // namespace mlmme
