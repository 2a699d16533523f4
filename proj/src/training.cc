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

#include "mlmme/training.h"

#include <algorithm>
#include <chrono>
#include <numeric>
#include <utility>
#include <ostream>

#include "json.hpp"
#include "mlmme/evaluation.h"

namespace mlmme {

namespace {

constexpr std::uint64_t kShuffleStream = 0x73687566;
constexpr std::uint64_t kDropoutStream = 0x64726f70;

}  // namespace

SelectionMetric parse_selection_metric(std::string_view name) {
  if (name == "sum_of_recalls") return SelectionMetric::kSumOfRecalls;
  if (name == "loss") return SelectionMetric::kLoss;
  throw ConfigError("unknown selection metric '" + std::string(name) + "'");
}

const char* selection_metric_name(SelectionMetric m) {
  return m == SelectionMetric::kLoss ? "loss" : "sum_of_recalls";
}

void TrainingHistory::write_log(std::ostream& out) const {
  for (const auto& e : epochs) {
    nlohmann::json j = {
        {"epoch", e.epoch}, {"loss", e.mean_loss}, {"score", e.score}};
    out << j.dump() << '\n';
  }
}

void TrainingHistory::write_timing(std::ostream& out) const {
  for (const auto& e : epochs) {
    nlohmann::json j = {{"epoch", e.epoch}, {"seconds", e.seconds}};
    out << j.dump() << '\n';
  }
}

void TrainingConfig::validate() const {
  if (batch_size < 1) throw InvalidArgument("batch_size must be at least 1");
  if (max_epochs < 1) throw InvalidArgument("max_epochs must be at least 1");
  if (!(clip_norm >= 0)) throw InvalidArgument("clip_norm must be >= 0");
  if (!(adam.learning_rate > 0)) throw InvalidArgument("learning rate must be positive");
  loss.validate();
}

std::vector<std::size_t> epoch_order(std::size_t size, std::uint64_t seed,
                                     std::size_t epoch) {
  std::vector<std::size_t> order(size);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(Rng::derive(seed, {kShuffleStream, epoch}));
  std::shuffle(order.begin(), order.end(), rng.engine());
  return order;
}

template <typename T>
double validation_score(const MlmmeModel<T>& model, const Dataset& validation,
                        SelectionMetric metric, std::uint64_t seed) {
  if (validation.instances.empty())
    throw InvalidArgument("validation_score: empty validation set");
  if (metric == SelectionMetric::kSumOfRecalls) {
    EmbeddedSplit<T> split = embed_split(model, validation);
    double sum = 0;
    for (std::size_t k = 0; k < model.language_count(); ++k) {
      for (auto d : {RankDirection::kSentenceToImage,
                     RankDirection::kImageToSentence}) {
        RetrievalReport r = retrieval_eval(cross_modal_scores(split, d, k));
        sum += r.r1 + r.r5 + r.r10;
      }
    }
    return sum;
  }
  if (validation.size() < 2)
    throw InvalidArgument("validation_score: loss metric needs two instances");
  const LossConfig& loss = model.loss_config();
  ContrastiveSampler sampler(seed);
  ContrastivePlan plan =
      sampler.plan(validation.size(), loss.negatives_per_instance, 0,
                   loss.beta > 0, loss.beta < 1);
  ModelParameters<T> scratch = model.params().zeros_like();
  std::vector<std::size_t> all(validation.size());
  std::iota(all.begin(), all.end(), 0);
  const double total =
      joint_objective(model, validation, all, plan, false, seed, scratch);
  const double mean = total / double(validation.size());
  return mean == 0 ? 0.0 : -mean;
}

template <typename T>
TrainingResult<T> train(MlmmeModel<T> model, const Dataset& train_set,
                        const Dataset& validation,
                        const TrainingConfig& config) {
  config.validate();
  if (train_set.instances.empty())
    throw InvalidArgument("train: empty training set");
  if (train_set.size() < 2)
    throw InvalidArgument("train: contrastive sampling needs two instances");
  if (config.selection == SelectionMetric::kSumOfRecalls &&
      validation.instances.empty())
    throw InvalidArgument("train: sum_of_recalls selection needs validation data");
  if (model.language_count() == 1 && config.loss.beta < 1)
    throw ConfigError(
        "with a single language beta must be 1 (visual-semantic embedding)");
  model.set_loss_config(config.loss);

  const LossConfig& loss = config.loss;
  const bool multimodal = loss.beta > 0;
  const bool multilingual = loss.beta < 1;

  std::vector<AdamState<T>> adam;
  for (std::size_t i = 0; i < model.params().matrices().size(); ++i)
    adam.emplace_back(config.adam);
  ModelParameters<T> grads = model.params().zeros_like();
  ContrastiveSampler sampler(config.seed);

  TrainingResult<T> result;
  double best_score = -std::numeric_limits<double>::infinity();
  ModelParameters<T> best_params = model.params();
  std::size_t since_best = 0;

  for (std::size_t epoch = 1; epoch <= config.max_epochs; ++epoch) {
    const auto start = std::chrono::steady_clock::now();
    ContrastivePlan plan =
        sampler.plan(train_set.size(), loss.negatives_per_instance, epoch,
                     multimodal, multilingual);
    std::vector<std::size_t> order =
        epoch_order(train_set.size(), config.seed, epoch);

    double epoch_loss = 0;
    std::size_t batch_index = 0;
    for (std::size_t b = 0; b < order.size(); b += config.batch_size, ++batch_index) {
      const std::size_t e = std::min(order.size(), b + config.batch_size);
      std::span<const std::size_t> batch(order.data() + b, e - b);
      grads.set_zero();
      const double value = joint_objective(
          model, train_set, batch, plan, true,
          Rng::derive(config.seed, {kDropoutStream, epoch, batch_index}), grads,
          config.threads);
      if (!std::isfinite(value))
        throw NumericalError("non-finite training loss at epoch " +
                             std::to_string(epoch) + ", batch " +
                             std::to_string(batch_index));
      epoch_loss += value;
      if (config.clip_norm > 0) {
        const double norm = std::sqrt(grads.squared_norm());
        if (norm > config.clip_norm) grads.scale(T(config.clip_norm / norm));
      }
      auto params = model.params().matrices();
      auto gs = grads.matrices();
      for (std::size_t i = 0; i < params.size(); ++i)
        adam_step(*params[i], *gs[i], adam[i]);
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.mean_loss = epoch_loss / double(train_set.size());
    if (config.selection == SelectionMetric::kLoss && validation.instances.empty())
      rec.score = -rec.mean_loss;
    else
      rec.score = validation_score(model, validation, config.selection,
                                   config.seed);
    rec.seconds = std::chrono::duration<double>(
                      std::chrono::steady_clock::now() - start)
                      .count();
    result.history.epochs.push_back(rec);
    if (config.on_epoch) config.on_epoch(rec);

    if (rec.score > best_score) {
      best_score = rec.score;
      best_params = model.params();
      result.history.best_epoch = epoch;
      since_best = 0;
    } else if (config.patience > 0 && ++since_best >= config.patience) {
      break;
    }
  }

  model.params() = std::move(best_params);
  result.model = std::move(model);
  for (std::size_t d = 0; d < kDirectionCount; ++d)
    result.sampler_invocations[d] = sampler.invocations(Direction(d));
  return result;
}

GradcheckReport check_model_gradients(const ModelGradcheckConfig& config) {
  if (config.languages < 1 || config.instances < 2 || config.vocabulary < 1)
    throw InvalidArgument("gradcheck: degenerate tiny-model configuration");
  Rng rng(config.seed);
  std::vector<Vocabulary> vocabs;
  std::vector<std::string> languages;
  for (std::size_t k = 0; k < config.languages; ++k) {
    languages.push_back("l" + std::to_string(k));
    std::vector<std::string> tokens;
    for (std::size_t t = 0; t < config.vocabulary; ++t)
      tokens.push_back("w" + std::to_string(t));
    vocabs.push_back(Vocabulary::from_tokens(languages.back(), tokens));
  }

  Dataset data;
  data.languages = languages;
  data.images.features =
      gaussian_init<float>(config.instances, config.dims.image_features, 1.0,
                           rng);
  for (std::size_t i = 0; i < config.instances; ++i) {
    TrainingInstance inst;
    inst.image = i;
    for (std::size_t k = 0; k < config.languages; ++k) {
      TokenSequence s(2 + rng.uniform_index(4));
      for (auto& t : s)
        t = TokenId(kReservedTokens + rng.uniform_index(config.vocabulary));
      inst.sentences.push_back(std::move(s));
    }
    data.instances.push_back(std::move(inst));
  }

  MlmmeModel<double> model = MlmmeModel<double>::create(
      vocabs, config.dims, config.loss, 0.0, rng, config.init_stddev);
  ContrastiveSampler sampler(config.seed);
  const ContrastivePlan plan =
      sampler.plan(config.instances, config.loss.negatives_per_instance, 1,
                   config.loss.beta > 0, config.loss.beta < 1);
  std::vector<std::size_t> batch(config.instances);
  std::iota(batch.begin(), batch.end(), 0);

  ModelParameters<double> analytic = model.params().zeros_like();
  joint_objective(model, data, batch, plan, true, config.seed, analytic);
  if (config.inject_bug)
    analytic.encoders[0].projection.values()[0] *= 1.5;

  auto loss = [&] {
    ModelParameters<double> scratch = model.params().zeros_like();
    return joint_objective(model, data, batch, plan, true, config.seed,
                           scratch);
  };
  std::vector<GradcheckParam> params;
  std::vector<Matrix<double>*> values = model.params().matrices();
  std::vector<const Matrix<double>*> grads =
      std::as_const(analytic).matrices();
  std::size_t index = 0;
  model.params().for_each(languages,
                          [&](const std::string& name, Matrix<double>&) {
                            params.push_back(
                                {name, values[index], grads[index]});
                            ++index;
                          });
  return gradcheck(loss, params);
}

template TrainingResult<float> train<float>(MlmmeModel<float>, const Dataset&,
                                            const Dataset&,
                                            const TrainingConfig&);
template TrainingResult<double> train<double>(MlmmeModel<double>,
                                              const Dataset&, const Dataset&,
                                              const TrainingConfig&);
template double validation_score<float>(const MlmmeModel<float>&,
                                        const Dataset&, SelectionMetric,
                                        std::uint64_t);
template double validation_score<double>(const MlmmeModel<double>&,
                                         const Dataset&, SelectionMetric,
                                         std::uint64_t);

}  // namespace mlmme
