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

#ifndef MLMME_MODEL_H_
#define MLMME_MODEL_H_

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "mlmme/dataio.h"
#include "mlmme/encoder.h"
#include "mlmme/numerics.h"

namespace mlmme {

struct ModelDims {
  std::size_t embed = 620;
  std::size_t hidden = 1024;
  std::size_t multimodal = 2048;
  std::size_t image_features = 4096;
};

struct LossConfig {
  double margin = 0.2;  // alpha
  double beta = 1.0;    // weight of the image-sentence term
  std::size_t negatives_per_instance = 5;

  void validate() const;
};

// All trainable matrices. Also used as the gradient container.
template <typename T>
struct ModelParameters {
  std::vector<TextEncoderParameters<T>> encoders;  // model language order
  Matrix<T> image_projection;                      // multimodal x features

  ModelParameters zeros_like() const;
  void set_zero();
  // a += scale * b over every matrix.
  void add(const ModelParameters& other, T scale = T(1));
  double squared_norm() const;
  void scale(T factor);
  // Every matrix in for_each order.
  std::vector<Matrix<T>*> matrices();
  std::vector<const Matrix<T>*> matrices() const;

  // f(name, matrix) for every parameter matrix in a fixed order. Names are
  // "<language>.embedding", "<language>.gru.W_z", ..., "image_projection".
  template <typename F>
  void for_each(std::span<const std::string> languages, F&& f);
  template <typename F>
  void for_each(std::span<const std::string> languages, F&& f) const;

  bool operator==(const ModelParameters&) const = default;
};

template <typename T>
template <typename F>
void ModelParameters<T>::for_each(std::span<const std::string> languages,
                                  F&& f) {
  for (std::size_t k = 0; k < encoders.size(); ++k)
    encoders[k].for_each([&](const std::string& n, Matrix<T>& m) {
      f(languages[k] + "." + n, m);
    });
  f(std::string("image_projection"), image_projection);
}

template <typename T>
template <typename F>
void ModelParameters<T>::for_each(std::span<const std::string> languages,
                                  F&& f) const {
  for (std::size_t k = 0; k < encoders.size(); ++k)
    encoders[k].for_each([&](const std::string& n, const Matrix<T>& m) {
      f(languages[k] + "." + n, m);
    });
  f(std::string("image_projection"), image_projection);
}

template <typename T>
struct ImageTrace {
  std::vector<T> input;
  std::vector<T> dropout_mask;
  std::vector<T> output;
  T norm = 0;
};

// Per-language encoders plus the image projection W_I.
template <typename T>
class MlmmeModel {
 public:
  MlmmeModel() = default;

  // Gaussian(0, init_stddev) for non-recurrent matrices, orthogonal
  // recurrent matrices, zero biases.
  static MlmmeModel create(std::vector<Vocabulary> vocabularies,
                           const ModelDims& dims, const LossConfig& loss,
                           double dropout, Rng& rng,
                           double init_stddev = 0.01);

  std::size_t language_count() const { return languages_.size(); }
  const std::vector<std::string>& languages() const { return languages_; }
  // Throws InvalidArgument for unregistered languages.
  std::size_t language_index(std::string_view language) const;
  const Vocabulary& vocabulary(std::size_t k) const { return vocabularies_[k]; }
  const ModelDims& dims() const { return dims_; }
  const LossConfig& loss_config() const { return loss_; }
  void set_loss_config(const LossConfig& loss);
  double dropout() const { return dropout_; }
  void set_dropout(double p);

  ModelParameters<T>& params() { return params_; }
  const ModelParameters<T>& params() const { return params_; }

  std::vector<T> encode_sentence(std::size_t language,
                                 const TokenSequence& sentence, bool training,
                                 Rng& rng,
                                 SentenceTrace<T>* trace = nullptr) const;
  void encode_sentence_backward(std::size_t language,
                                const SentenceTrace<T>& trace,
                                std::span<const T> grad,
                                ModelParameters<T>& grads) const;

  // W_I q -> dropout (training only) -> L2 normalization.
  std::vector<T> embed_image(std::span<const float> features, bool training,
                             Rng& rng, ImageTrace<T>* trace = nullptr) const;
  void embed_image_backward(const ImageTrace<T>& trace,
                            std::span<const T> grad,
                            ModelParameters<T>& grads) const;

  // Little-endian binary checkpoint with a format version and per-matrix
  // shape headers.
  void save(const std::filesystem::path& path) const;
  static MlmmeModel load(const std::filesystem::path& path);
  void write(std::ostream& out) const;
  static MlmmeModel read(std::istream& in);

  template <typename U>
  MlmmeModel<U> cast() const;

 private:
  template <typename U>
  friend class MlmmeModel;

  std::vector<std::string> languages_;
  std::vector<Vocabulary> vocabularies_;
  ModelDims dims_;
  LossConfig loss_;
  double dropout_ = 0.5;
  ModelParameters<T> params_;
};

// Convenience wrappers taking a language name.
// Bytes per stored scalar (4 or 8) of a checkpoint file.
std::uint32_t checkpoint_scalar_width(const std::filesystem::path& path);

template <typename T>
SentenceEmbedding<T> encode_sentence(const MlmmeModel<T>& model,
                                     std::string_view language,
                                     const TokenSequence& sentence,
                                     bool training, Rng& rng);

// Inner product s_i / s_s.
template <typename T>
T similarity(std::span<const T> a, std::span<const T> b);

enum class Direction : std::size_t {
  kImageToSentence = 0,  // image query, contrastive sentences
  kSentenceToImage = 1,  // sentence query, contrastive images
  kSentenceToSentence = 2,
};
inline constexpr std::size_t kDirectionCount = 3;

// For every training instance, sampled negative instance indices per loss
// direction. Directions that were not sampled are empty.
struct ContrastivePlan {
  std::size_t dataset_size = 0;
  std::size_t negatives = 0;
  std::size_t epoch = 0;
  std::array<std::vector<std::uint32_t>, kDirectionCount> indices;

  bool has(Direction d) const {
    return !indices[static_cast<std::size_t>(d)].empty();
  }
  std::span<const std::uint32_t> negatives_for(Direction d,
                                               std::size_t instance) const;
};

// Uniform draws of `negatives` indices per instance, never the instance
// itself. Row-major dataset_size x negatives.
std::vector<std::uint32_t> sample_contrastive(std::size_t dataset_size,
                                              std::size_t negatives,
                                              std::size_t epoch, Rng& rng);

// Builds per-epoch plans with streams derived from (seed, epoch, direction)
// and counts how often each direction was sampled.
class ContrastiveSampler {
 public:
  explicit ContrastiveSampler(std::uint64_t seed) : seed_(seed) {}

  ContrastivePlan plan(std::size_t dataset_size, std::size_t negatives,
                       std::size_t epoch, bool multimodal, bool multilingual);
  std::size_t invocations(Direction d) const {
    return counters_[static_cast<std::size_t>(d)];
  }

 private:
  std::uint64_t seed_;
  std::array<std::size_t, kDirectionCount> counters_{};
};

// Embeddings of a set of instances, one row per slot.
template <typename T>
struct EmbeddingBatch {
  std::vector<std::size_t> positives;  // instances forming the minibatch
  std::unordered_map<std::size_t, std::size_t> slots;  // instance -> row
  std::vector<Matrix<T>> sentences;  // per language, slots x multimodal
  Matrix<T> images;                  // slots x multimodal

  std::size_t slot(std::size_t instance) const;
  // Same layout, zero values.
  EmbeddingBatch zeros_like() const;
};

template <typename T>
struct LossResult {
  double value = 0;
  EmbeddingBatch<T> grad;
};

// S_I summed over languages, both hinge directions per positive.
template <typename T>
LossResult<T> loss_multimodal(const EmbeddingBatch<T>& batch,
                              const ContrastivePlan& plan,
                              const LossConfig& config);

// S_S over unordered language pairs, both hinge directions.
template <typename T>
LossResult<T> loss_multilingual(const EmbeddingBatch<T>& batch,
                                const ContrastivePlan& plan,
                                const LossConfig& config);

// beta * S_I + (1 - beta) * S_S on precomputed embeddings. An endpoint
// beta skips the other term entirely.
double weighted_objective(double beta, double multimodal, double multilingual);

template <typename T>
LossResult<T> joint_loss(const EmbeddingBatch<T>& batch,
                         const ContrastivePlan& plan,
                         const LossConfig& config);

// Full pass over one minibatch: encodes positives and every referenced
// negative, evaluates joint_loss and backpropagates into `grads` (which is
// accumulated, not cleared). Dropout masks come from streams derived from
// `dropout_seed` and each instance, so masks do not depend on `threads`.
// Returns the loss value.
template <typename T>
double joint_objective(const MlmmeModel<T>& model, const Dataset& data,
                       std::span<const std::size_t> batch,
                       const ContrastivePlan& plan, bool training,
                       std::uint64_t dropout_seed, ModelParameters<T>& grads,
                       std::size_t threads = 1);

}  // namespace mlmme

#endif  // MLMME_MODEL_H_
