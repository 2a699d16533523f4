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

#include "mlmme/model.h"

#include <algorithm>
#include <fstream>
#include <thread>

#include "binary_io.h"

namespace mlmme {

namespace {

constexpr char kCheckpointMagic[8] = {'M', 'L', 'M', 'M', 'E', 'C', 'K', 'P'};
constexpr std::uint32_t kCheckpointVersion = 1;

template <typename T>
void write_matrix(std::ostream& out, const Matrix<T>& m) {
  binary::write<std::uint64_t>(out, m.rows());
  binary::write<std::uint64_t>(out, m.cols());
  for (T v : m.values()) binary::write<T>(out, v);
}

template <typename T, typename Stored>
Matrix<T> read_matrix(std::istream& in, std::size_t rows, std::size_t cols,
                      const std::string& name) {
  const auto r = binary::read<std::uint64_t>(in);
  const auto c = binary::read<std::uint64_t>(in);
  if (r != rows || c != cols)
    throw InputError("checkpoint: matrix '" + name + "' is " +
                     shape_string(r, c) + ", expected " +
                     shape_string(rows, cols));
  Matrix<T> m(rows, cols);
  for (T& v : m.values()) v = T(binary::read<Stored>(in));
  return m;
}

void check_span(std::span<const std::uint32_t> s, std::size_t size) {
  for (auto v : s)
    if (v >= size) throw InvalidArgument("contrastive plan index out of range");
}

}  // namespace

void LossConfig::validate() const {
  if (!(margin > 0)) throw ConfigError("margin must be positive");
  if (!(beta >= 0 && beta <= 1)) throw ConfigError("beta must lie in [0, 1]");
  if (negatives_per_instance < 1)
    throw ConfigError("negatives_per_instance must be at least 1");
}

template <typename T>
ModelParameters<T> ModelParameters<T>::zeros_like() const {
  ModelParameters out;
  out.encoders.reserve(encoders.size());
  for (const auto& e : encoders)
    out.encoders.push_back(TextEncoderParameters<T>::zeros(
        e.embedding.rows(), e.embedding.cols(), e.gru.hidden_dim(),
        e.projection.rows()));
  out.image_projection =
      Matrix<T>(image_projection.rows(), image_projection.cols());
  return out;
}

template <typename T>
std::vector<Matrix<T>*> ModelParameters<T>::matrices() {
  std::vector<Matrix<T>*> out;
  for (auto& e : encoders)
    e.for_each([&](const std::string&, Matrix<T>& m) { out.push_back(&m); });
  out.push_back(&image_projection);
  return out;
}

template <typename T>
std::vector<const Matrix<T>*> ModelParameters<T>::matrices() const {
  std::vector<const Matrix<T>*> out;
  for (const auto& e : encoders)
    e.for_each(
        [&](const std::string&, const Matrix<T>& m) { out.push_back(&m); });
  out.push_back(&image_projection);
  return out;
}

template <typename T>
void ModelParameters<T>::set_zero() {
  for (auto& e : encoders)
    e.for_each([](const std::string&, Matrix<T>& m) { m.fill(T(0)); });
  image_projection.fill(T(0));
}

template <typename T>
void ModelParameters<T>::add(const ModelParameters& other, T scale) {
  auto lhs = matrices();
  auto rhs = other.matrices();
  if (lhs.size() != rhs.size())
    throw InvalidArgument("parameter sets have different layouts");
  for (std::size_t i = 0; i < lhs.size(); ++i) {
    if (!lhs[i]->same_shape(*rhs[i]))
      throw InvalidArgument("parameter shape mismatch");
    axpy(lhs[i]->values(), rhs[i]->values(), scale);
  }
}

template <typename T>
double ModelParameters<T>::squared_norm() const {
  double sum = 0;
  auto visit = [&](const Matrix<T>& m) {
    for (T v : m.values()) sum += double(v) * double(v);
  };
  for (const auto& e : encoders)
    e.for_each([&](const std::string&, const Matrix<T>& m) { visit(m); });
  visit(image_projection);
  return sum;
}

template <typename T>
void ModelParameters<T>::scale(T factor) {
  auto visit = [&](Matrix<T>& m) {
    for (T& v : m.values()) v *= factor;
  };
  for (auto& e : encoders)
    e.for_each([&](const std::string&, Matrix<T>& m) { visit(m); });
  visit(image_projection);
}

template <typename T>
MlmmeModel<T> MlmmeModel<T>::create(std::vector<Vocabulary> vocabularies,
                                    const ModelDims& dims,
                                    const LossConfig& loss, double dropout,
                                    Rng& rng, double init_stddev) {
  if (vocabularies.empty())
    throw InvalidArgument("model needs at least one language");
  if (dims.embed == 0 || dims.hidden == 0 || dims.multimodal == 0 ||
      dims.image_features == 0)
    throw InvalidArgument("model dimensions must be positive");
  loss.validate();
  MlmmeModel m;
  m.dims_ = dims;
  m.loss_ = loss;
  m.set_dropout(dropout);
  for (const auto& v : vocabularies) {
    if (std::find(m.languages_.begin(), m.languages_.end(), v.language()) !=
        m.languages_.end())
      throw InvalidArgument("duplicate language '" + v.language() + "'");
    m.languages_.push_back(v.language());
  }
  m.vocabularies_ = std::move(vocabularies);
  for (const auto& v : m.vocabularies_)
    m.params_.encoders.push_back(TextEncoderParameters<T>::initialized(
        v.size(), dims.embed, dims.hidden, dims.multimodal, init_stddev, rng));
  m.params_.image_projection =
      gaussian_init<T>(dims.multimodal, dims.image_features, init_stddev, rng);
  return m;
}

template <typename T>
std::size_t MlmmeModel<T>::language_index(std::string_view language) const {
  for (std::size_t k = 0; k < languages_.size(); ++k)
    if (languages_[k] == language) return k;
  throw InvalidArgument("language '" + std::string(language) +
                        "' is not registered in the model");
}

template <typename T>
void MlmmeModel<T>::set_loss_config(const LossConfig& loss) {
  loss.validate();
  loss_ = loss;
}

template <typename T>
void MlmmeModel<T>::set_dropout(double p) {
  if (!(p >= 0 && p < 1))
    throw InvalidArgument("dropout probability must lie in [0, 1)");
  dropout_ = p;
}

template <typename T>
std::vector<T> MlmmeModel<T>::encode_sentence(std::size_t language,
                                              const TokenSequence& sentence,
                                              bool training, Rng& rng,
                                              SentenceTrace<T>* trace) const {
  if (language >= languages_.size())
    throw InvalidArgument("encode_sentence: language index out of range");
  return mlmme::encode_sentence(sentence, params_.encoders[language], dropout_,
                                training, rng, trace);
}

template <typename T>
void MlmmeModel<T>::encode_sentence_backward(std::size_t language,
                                             const SentenceTrace<T>& trace,
                                             std::span<const T> grad,
                                             ModelParameters<T>& grads) const {
  mlmme::encode_sentence_backward(trace, params_.encoders.at(language), grad,
                                  grads.encoders.at(language));
}

template <typename T>
std::vector<T> MlmmeModel<T>::embed_image(std::span<const float> features,
                                          bool training, Rng& rng,
                                          ImageTrace<T>* trace) const {
  if (features.size() != dims_.image_features)
    throw InvalidArgument("embed_image: expected " +
                          std::to_string(dims_.image_features) +
                          " features, got " + std::to_string(features.size()));
  if (std::all_of(features.begin(), features.end(),
                  [](float v) { return v == 0.0f; }))
    throw InvalidArgument("embed_image: all-zero feature vector");
  std::vector<T> q(features.begin(), features.end());
  std::vector<T> projected(dims_.multimodal);
  gemv(params_.image_projection, std::span<const T>(q),
       std::span<T>(projected));
  std::vector<T> mask;
  std::vector<T> out = dropout_apply(std::span<const T>(projected), dropout_,
                                     training, rng, trace ? &mask : nullptr);
  T norm = 0;
  if (!(training && l2_norm(std::span<const T>(out)) == T(0)))
    norm = normalize_in_place(std::span<T>(out));
  if (trace) {
    trace->input = std::move(q);
    trace->dropout_mask = std::move(mask);
    trace->output = out;
    trace->norm = norm;
  }
  return out;
}

template <typename T>
void MlmmeModel<T>::embed_image_backward(const ImageTrace<T>& trace,
                                         std::span<const T> grad,
                                         ModelParameters<T>& grads) const {
  if (grad.size() != trace.output.size())
    throw InvalidArgument("embed_image_backward: gradient length mismatch");
  if (trace.norm == T(0)) return;
  std::vector<T> grad_u =
      normalize_backward(std::span<const T>(trace.output), trace.norm, grad);
  for (std::size_t i = 0; i < grad_u.size(); ++i)
    grad_u[i] *= trace.dropout_mask[i];
  add_outer(grads.image_projection, std::span<const T>(grad_u),
            std::span<const T>(trace.input));
}

template <typename T>
void MlmmeModel<T>::write(std::ostream& out) const {
  out.write(kCheckpointMagic, sizeof(kCheckpointMagic));
  binary::write<std::uint32_t>(out, kCheckpointVersion);
  binary::write<std::uint32_t>(out, sizeof(T));
  binary::write<std::uint64_t>(out, dims_.embed);
  binary::write<std::uint64_t>(out, dims_.hidden);
  binary::write<std::uint64_t>(out, dims_.multimodal);
  binary::write<std::uint64_t>(out, dims_.image_features);
  binary::write<double>(out, loss_.margin);
  binary::write<double>(out, loss_.beta);
  binary::write<std::uint64_t>(out, loss_.negatives_per_instance);
  binary::write<double>(out, dropout_);
  binary::write<std::uint32_t>(out, std::uint32_t(languages_.size()));
  for (std::size_t k = 0; k < languages_.size(); ++k) {
    binary::write_string(out, languages_[k]);
    const auto& tokens = vocabularies_[k].tokens();
    binary::write<std::uint64_t>(out, tokens.size());
    for (const auto& t : tokens) binary::write_string(out, t);
    params_.encoders[k].for_each(
        [&](const std::string&, const Matrix<T>& m) { write_matrix(out, m); });
  }
  write_matrix(out, params_.image_projection);
}

template <typename T>
MlmmeModel<T> MlmmeModel<T>::read(std::istream& in) {
  char magic[sizeof(kCheckpointMagic)];
  if (!in.read(magic, sizeof(magic)) ||
      !std::equal(magic, magic + sizeof(magic), kCheckpointMagic))
    throw InputError("not a model checkpoint (bad magic)");
  const auto version = binary::read<std::uint32_t>(in);
  if (version != kCheckpointVersion)
    throw InputError("unsupported checkpoint version " +
                     std::to_string(version));
  const auto width = binary::read<std::uint32_t>(in);
  if (width != 4 && width != 8)
    throw InputError("checkpoint: unsupported scalar width");

  MlmmeModel m;
  m.dims_.embed = binary::read<std::uint64_t>(in);
  m.dims_.hidden = binary::read<std::uint64_t>(in);
  m.dims_.multimodal = binary::read<std::uint64_t>(in);
  m.dims_.image_features = binary::read<std::uint64_t>(in);
  m.loss_.margin = binary::read<double>(in);
  m.loss_.beta = binary::read<double>(in);
  m.loss_.negatives_per_instance = binary::read<std::uint64_t>(in);
  m.dropout_ = binary::read<double>(in);
  const auto languages = binary::read<std::uint32_t>(in);
  if (languages == 0) throw InputError("checkpoint has no languages");

  auto matrix = [&](std::size_t r, std::size_t c, const std::string& name) {
    return width == 4 ? read_matrix<T, float>(in, r, c, name)
                      : read_matrix<T, double>(in, r, c, name);
  };
  const ModelDims& d = m.dims_;
  for (std::uint32_t k = 0; k < languages; ++k) {
    std::string lang = binary::read_string(in);
    const auto count = binary::read<std::uint64_t>(in);
    std::vector<std::string> tokens;
    tokens.reserve(count);
    for (std::uint64_t i = 0; i < count; ++i)
      tokens.push_back(binary::read_string(in));
    Vocabulary vocab = Vocabulary::from_tokens(lang, std::move(tokens));
    const std::size_t vsize = vocab.size();
    auto p = TextEncoderParameters<T>::zeros(vsize, d.embed, d.hidden,
                                             d.multimodal);
    p.for_each([&](const std::string& name, Matrix<T>& slot) {
      slot = matrix(slot.rows(), slot.cols(), lang + "." + name);
    });
    m.languages_.push_back(lang);
    m.vocabularies_.push_back(std::move(vocab));
    m.params_.encoders.push_back(std::move(p));
  }
  m.params_.image_projection =
      matrix(d.multimodal, d.image_features, "image_projection");
  return m;
}

template <typename T>
void MlmmeModel<T>::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write checkpoint " + path.string());
  write(out);
  if (!out) throw InputError("failed writing checkpoint " + path.string());
}

template <typename T>
MlmmeModel<T> MlmmeModel<T>::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open checkpoint " + path.string());
  return read(in);
}

std::uint32_t checkpoint_scalar_width(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open checkpoint " + path.string());
  char magic[sizeof(kCheckpointMagic)];
  if (!in.read(magic, sizeof(magic)) ||
      !std::equal(magic, magic + sizeof(magic), kCheckpointMagic))
    throw InputError("not a model checkpoint (bad magic)");
  binary::read<std::uint32_t>(in);
  return binary::read<std::uint32_t>(in);
}

template <typename T>
template <typename U>
MlmmeModel<U> MlmmeModel<T>::cast() const {
  MlmmeModel<U> out;
  out.languages_ = languages_;
  out.vocabularies_ = vocabularies_;
  out.dims_ = dims_;
  out.loss_ = loss_;
  out.dropout_ = dropout_;
  for (const auto& e : params_.encoders) {
    TextEncoderParameters<U> c;
    c.embedding = e.embedding.template cast<U>();
    c.projection = e.projection.template cast<U>();
    c.gru.w_z = e.gru.w_z.template cast<U>();
    c.gru.w_r = e.gru.w_r.template cast<U>();
    c.gru.w_h = e.gru.w_h.template cast<U>();
    c.gru.u_z = e.gru.u_z.template cast<U>();
    c.gru.u_r = e.gru.u_r.template cast<U>();
    c.gru.u_h = e.gru.u_h.template cast<U>();
    c.gru.b_z = e.gru.b_z.template cast<U>();
    c.gru.b_r = e.gru.b_r.template cast<U>();
    c.gru.b_h = e.gru.b_h.template cast<U>();
    out.params_.encoders.push_back(std::move(c));
  }
  out.params_.image_projection = params_.image_projection.template cast<U>();
  return out;
}

template <typename T>
SentenceEmbedding<T> encode_sentence(const MlmmeModel<T>& model,
                                     std::string_view language,
                                     const TokenSequence& sentence,
                                     bool training, Rng& rng) {
  const std::size_t k = model.language_index(language);
  return {model.encode_sentence(k, sentence, training, rng),
          std::string(language)};
}

template <typename T>
T similarity(std::span<const T> a, std::span<const T> b) {
  if (a.size() != b.size())
    throw InvalidArgument("similarity: embedding lengths differ (" +
                          std::to_string(a.size()) + " vs " +
                          std::to_string(b.size()) + ")");
  return dot(a, b);
}

std::span<const std::uint32_t> ContrastivePlan::negatives_for(
    Direction d, std::size_t instance) const {
  const auto& v = indices[static_cast<std::size_t>(d)];
  if (v.empty())
    throw InvalidArgument("contrastive plan lacks the requested direction");
  if (instance >= dataset_size)
    throw InvalidArgument("contrastive plan does not cover instance " +
                          std::to_string(instance));
  return {v.data() + instance * negatives, negatives};
}

std::vector<std::uint32_t> sample_contrastive(std::size_t dataset_size,
                                              std::size_t negatives,
                                              std::size_t epoch, Rng& rng) {
  if (dataset_size < 2)
    throw InvalidArgument("sample_contrastive: need at least 2 instances");
  if (negatives < 1)
    throw InvalidArgument("sample_contrastive: need at least 1 negative");
  Rng stream(Rng::derive(rng.seed(), {0x636f6e74ULL, epoch}));
  std::vector<std::uint32_t> out(dataset_size * negatives);
  for (std::size_t i = 0; i < dataset_size; ++i) {
    for (std::size_t j = 0; j < negatives; ++j) {
      std::size_t r = stream.uniform_index(dataset_size - 1);
      if (r >= i) ++r;
      out[i * negatives + j] = static_cast<std::uint32_t>(r);
    }
  }
  return out;
}

ContrastivePlan ContrastiveSampler::plan(std::size_t dataset_size,
                                         std::size_t negatives,
                                         std::size_t epoch, bool multimodal,
                                         bool multilingual) {
  ContrastivePlan p;
  p.dataset_size = dataset_size;
  p.negatives = negatives;
  p.epoch = epoch;
  auto draw = [&](Direction d) {
    const auto di = static_cast<std::size_t>(d);
    Rng rng(Rng::derive(seed_, {di}));
    p.indices[di] = sample_contrastive(dataset_size, negatives, epoch, rng);
    ++counters_[di];
  };
  if (multimodal) {
    draw(Direction::kImageToSentence);
    draw(Direction::kSentenceToImage);
  }
  if (multilingual) draw(Direction::kSentenceToSentence);
  return p;
}

template <typename T>
std::size_t EmbeddingBatch<T>::slot(std::size_t instance) const {
  auto it = slots.find(instance);
  if (it == slots.end())
    throw InvalidArgument("embedding batch has no row for instance " +
                          std::to_string(instance));
  return it->second;
}

template <typename T>
EmbeddingBatch<T> EmbeddingBatch<T>::zeros_like() const {
  EmbeddingBatch out;
  out.positives = positives;
  out.slots = slots;
  for (const auto& s : sentences) out.sentences.emplace_back(s.rows(), s.cols());
  out.images = Matrix<T>(images.rows(), images.cols());
  return out;
}

template <typename T>
LossResult<T> loss_multimodal(const EmbeddingBatch<T>& batch,
                              const ContrastivePlan& plan,
                              const LossConfig& config) {
  if (batch.positives.empty())
    throw InvalidArgument("loss_multimodal: empty batch");
  if (batch.sentences.empty())
    throw InvalidArgument("loss_multimodal: no languages in batch");
  LossResult<T> result{0.0, batch.zeros_like()};
  const double alpha = config.margin;
  auto& g = result.grad;
  for (std::size_t k = 0; k < batch.sentences.size(); ++k) {
    const Matrix<T>& sent = batch.sentences[k];
    Matrix<T>& gsent = g.sentences[k];
    for (std::size_t inst : batch.positives) {
      const std::size_t s = batch.slot(inst);
      auto d = batch.images.row(s);
      auto v = sent.row(s);
      const double pos = double(similarity(d, v));

      auto negs = plan.negatives_for(Direction::kImageToSentence, inst);
      check_span(negs, plan.dataset_size);
      for (std::uint32_t r : negs) {
        const std::size_t rs = batch.slot(r);
        auto vr = sent.row(rs);
        const double h = alpha - pos + double(similarity(d, vr));
        if (h <= 0) continue;
        result.value += h;
        axpy(g.images.row(s), vr);
        axpy(g.images.row(s), v, T(-1));
        axpy(gsent.row(s), d, T(-1));
        axpy(gsent.row(rs), d);
      }

      negs = plan.negatives_for(Direction::kSentenceToImage, inst);
      check_span(negs, plan.dataset_size);
      for (std::uint32_t r : negs) {
        const std::size_t rs = batch.slot(r);
        auto dr = batch.images.row(rs);
        const double h = alpha - pos + double(similarity(v, dr));
        if (h <= 0) continue;
        result.value += h;
        axpy(gsent.row(s), dr);
        axpy(gsent.row(s), d, T(-1));
        axpy(g.images.row(s), v, T(-1));
        axpy(g.images.row(rs), v);
      }
    }
  }
  return result;
}

template <typename T>
LossResult<T> loss_multilingual(const EmbeddingBatch<T>& batch,
                                const ContrastivePlan& plan,
                                const LossConfig& config) {
  if (batch.sentences.size() < 2)
    throw ConfigError(
        "loss_multilingual: the sentence-sentence term needs at least two "
        "languages");
  if (batch.positives.empty())
    throw InvalidArgument("loss_multilingual: empty batch");
  LossResult<T> result{0.0, batch.zeros_like()};
  const double alpha = config.margin;
  auto& g = result.grad;
  const std::size_t langs = batch.sentences.size();
  for (std::size_t k = 0; k < langs; ++k) {
    for (std::size_t l = k + 1; l < langs; ++l) {
      const Matrix<T>& sk = batch.sentences[k];
      const Matrix<T>& sl = batch.sentences[l];
      Matrix<T>& gk = g.sentences[k];
      Matrix<T>& gl = g.sentences[l];
      for (std::size_t inst : batch.positives) {
        const std::size_t s = batch.slot(inst);
        auto vk = sk.row(s);
        auto vl = sl.row(s);
        const double pos = double(similarity(vk, vl));
        auto negs = plan.negatives_for(Direction::kSentenceToSentence, inst);
        check_span(negs, plan.dataset_size);
        for (std::uint32_t r : negs) {
          const std::size_t rs = batch.slot(r);
          auto vl_r = sl.row(rs);
          const double h1 = alpha - pos + double(similarity(vk, vl_r));
          if (h1 > 0) {
            result.value += h1;
            axpy(gk.row(s), vl_r);
            axpy(gk.row(s), vl, T(-1));
            axpy(gl.row(s), vk, T(-1));
            axpy(gl.row(rs), vk);
          }
          auto vk_r = sk.row(rs);
          const double h2 = alpha - pos + double(similarity(vl, vk_r));
          if (h2 > 0) {
            result.value += h2;
            axpy(gl.row(s), vk_r);
            axpy(gl.row(s), vk, T(-1));
            axpy(gk.row(s), vl, T(-1));
            axpy(gk.row(rs), vl);
          }
        }
      }
    }
  }
  return result;
}

double weighted_objective(double beta, double multimodal,
                          double multilingual) {
  return beta * multimodal + (1.0 - beta) * multilingual;
}

template <typename T>
LossResult<T> joint_loss(const EmbeddingBatch<T>& batch,
                         const ContrastivePlan& plan,
                         const LossConfig& config) {
  config.validate();
  if (batch.sentences.size() == 1 && config.beta < 1.0)
    throw ConfigError(
        "with a single language beta must be 1 (the model then reduces to "
        "the visual-semantic embedding; the sentence-sentence term is "
        "undefined)");
  if (config.beta == 1.0) return loss_multimodal(batch, plan, config);
  if (config.beta == 0.0) return loss_multilingual(batch, plan, config);
  LossResult<T> mm = loss_multimodal(batch, plan, config);
  LossResult<T> ml = loss_multilingual(batch, plan, config);
  const T b = T(config.beta);
  LossResult<T> out{weighted_objective(config.beta, mm.value, ml.value),
                    batch.zeros_like()};
  for (std::size_t k = 0; k < out.grad.sentences.size(); ++k) {
    axpy(out.grad.sentences[k].values(), mm.grad.sentences[k].values(), b);
    axpy(out.grad.sentences[k].values(), ml.grad.sentences[k].values(),
         T(1) - b);
  }
  axpy(out.grad.images.values(), mm.grad.images.values(), b);
  return out;
}

namespace {

struct SlotNeeds {
  std::size_t instance;
  bool sentences = false;
  bool image = false;
};

// Runs fn(begin, end, worker) over [0, n) split into contiguous chunks.
template <typename F>
void parallel_chunks(std::size_t n, std::size_t threads, F&& fn) {
  threads = std::max<std::size_t>(1, std::min(threads, n));
  if (threads == 1) {
    fn(std::size_t(0), n, std::size_t(0));
    return;
  }
  std::vector<std::thread> pool;
  const std::size_t chunk = (n + threads - 1) / threads;
  for (std::size_t w = 0; w < threads; ++w) {
    const std::size_t b = w * chunk, e = std::min(n, b + chunk);
    if (b >= e) break;
    pool.emplace_back([&fn, b, e, w] { fn(b, e, w); });
  }
  for (auto& t : pool) t.join();
}

}  // namespace

template <typename T>
double joint_objective(const MlmmeModel<T>& model, const Dataset& data,
                       std::span<const std::size_t> batch,
                       const ContrastivePlan& plan, bool training,
                       std::uint64_t dropout_seed, ModelParameters<T>& grads,
                       std::size_t threads) {
  const LossConfig& config = model.loss_config();
  const std::size_t langs = model.language_count();
  if (batch.empty()) throw InvalidArgument("joint_objective: empty batch");
  if (data.languages != model.languages())
    throw InvalidArgument("joint_objective: dataset languages do not match "
                          "the model");
  if (plan.dataset_size != data.size())
    throw InvalidArgument("joint_objective: plan was built for a dataset of "
                          "different size");
  if (langs == 1 && config.beta < 1.0)
    throw ConfigError("with a single language beta must be 1");
  const bool multimodal = config.beta > 0.0;
  const bool multilingual = config.beta < 1.0;

  // Slot layout: positives in batch order, then negatives by first use.
  EmbeddingBatch<T> emb;
  std::vector<SlotNeeds> needs;
  auto touch = [&](std::size_t inst, bool sent, bool img) {
    if (inst >= data.size())
      throw InvalidArgument("joint_objective: instance out of range");
    auto [it, inserted] = emb.slots.emplace(inst, needs.size());
    if (inserted) needs.push_back({inst});
    SlotNeeds& n = needs[it->second];
    n.sentences |= sent;
    n.image |= img;
  };
  for (std::size_t inst : batch) {
    if (emb.slots.count(inst))
      throw InvalidArgument("joint_objective: duplicate instance in batch");
    touch(inst, true, multimodal);
    emb.positives.push_back(inst);
  }
  for (std::size_t inst : batch) {
    if (multimodal) {
      for (auto r : plan.negatives_for(Direction::kImageToSentence, inst))
        touch(r, true, false);
      for (auto r : plan.negatives_for(Direction::kSentenceToImage, inst))
        touch(r, false, true);
    }
    if (multilingual)
      for (auto r : plan.negatives_for(Direction::kSentenceToSentence, inst))
        touch(r, true, false);
  }

  const std::size_t slots = needs.size();
  const std::size_t dim = model.dims().multimodal;
  emb.sentences.assign(langs, Matrix<T>(slots, dim));
  emb.images = Matrix<T>(slots, dim);
  std::vector<std::vector<SentenceTrace<T>>> sent_traces(
      slots, std::vector<SentenceTrace<T>>(langs));
  std::vector<ImageTrace<T>> image_traces(slots);

  parallel_chunks(slots, threads, [&](std::size_t b, std::size_t e,
                                      std::size_t) {
    for (std::size_t s = b; s < e; ++s) {
      const SlotNeeds& n = needs[s];
      const TrainingInstance& ti = data.instances[n.instance];
      if (n.sentences) {
        if (ti.sentences.size() != langs)
          throw InvalidArgument("instance lacks a sentence per language");
        for (std::size_t k = 0; k < langs; ++k) {
          Rng rng(Rng::derive(dropout_seed, {n.instance, k}));
          auto v = model.encode_sentence(k, ti.sentences[k], training, rng,
                                         &sent_traces[s][k]);
          std::copy(v.begin(), v.end(), emb.sentences[k].row(s).begin());
        }
      }
      if (n.image) {
        Rng rng(Rng::derive(dropout_seed, {n.instance, langs}));
        auto d = model.embed_image(data.image_of(n.instance), training, rng,
                                   &image_traces[s]);
        std::copy(d.begin(), d.end(), emb.images.row(s).begin());
      }
    }
  });

  LossResult<T> loss = joint_loss(emb, plan, config);

  std::vector<ModelParameters<T>> partial;
  const std::size_t workers = std::max<std::size_t>(1, std::min(threads, slots));
  if (workers > 1)
    for (std::size_t w = 0; w < workers; ++w)
      partial.push_back(grads.zeros_like());
  parallel_chunks(slots, workers, [&](std::size_t b, std::size_t e,
                                      std::size_t w) {
    ModelParameters<T>& acc = workers > 1 ? partial[w] : grads;
    for (std::size_t s = b; s < e; ++s) {
      const SlotNeeds& n = needs[s];
      if (n.sentences)
        for (std::size_t k = 0; k < langs; ++k)
          model.encode_sentence_backward(k, sent_traces[s][k],
                                         loss.grad.sentences[k].row(s), acc);
      if (n.image)
        model.embed_image_backward(image_traces[s], loss.grad.images.row(s),
                                   acc);
    }
  });
  for (auto& p : partial) grads.add(p);
  return loss.value;
}

#define MLMME_INSTANTIATE(T)                                                  \
  template struct ModelParameters<T>;                                         \
  template class MlmmeModel<T>;                                               \
  template SentenceEmbedding<T> encode_sentence<T>(                           \
      const MlmmeModel<T>&, std::string_view, const TokenSequence&, bool,     \
      Rng&);                                                                  \
  template T similarity<T>(std::span<const T>, std::span<const T>);           \
  template struct EmbeddingBatch<T>;                                          \
  template LossResult<T> loss_multimodal<T>(                                  \
      const EmbeddingBatch<T>&, const ContrastivePlan&, const LossConfig&);   \
  template LossResult<T> loss_multilingual<T>(                                \
      const EmbeddingBatch<T>&, const ContrastivePlan&, const LossConfig&);   \
  template LossResult<T> joint_loss<T>(                                       \
      const EmbeddingBatch<T>&, const ContrastivePlan&, const LossConfig&);   \
  template double joint_objective<T>(                                         \
      const MlmmeModel<T>&, const Dataset&, std::span<const std::size_t>,     \
      const ContrastivePlan&, bool, std::uint64_t, ModelParameters<T>&,       \
      std::size_t);

MLMME_INSTANTIATE(float)
MLMME_INSTANTIATE(double)

template MlmmeModel<double> MlmmeModel<float>::cast<double>() const;
template MlmmeModel<float> MlmmeModel<double>::cast<float>() const;
template MlmmeModel<float> MlmmeModel<float>::cast<float>() const;
template MlmmeModel<double> MlmmeModel<double>::cast<double>() const;

#undef MLMME_INSTANTIATE

}  // namespace mlmme
