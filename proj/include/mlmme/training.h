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

#ifndef MLMME_TRAINING_H_
#define MLMME_TRAINING_H_

#include <array>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "mlmme/dataio.h"
#include "mlmme/model.h"

namespace mlmme {

enum class SelectionMetric { kSumOfRecalls, kLoss };

SelectionMetric parse_selection_metric(std::string_view name);
const char* selection_metric_name(SelectionMetric m);

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  double mean_loss = 0;   // per training instance
  double score = 0;       // validation selection score, higher is better
  double seconds = 0;
};

struct TrainingHistory {
  std::vector<EpochRecord> epochs;
  std::size_t best_epoch = 0;

  // One JSON object per line: epoch, loss, score. Wall time is kept out so
  // that identical runs give identical logs.
  void write_log(std::ostream& out) const;
  // One JSON object per line: epoch, seconds.
  void write_timing(std::ostream& out) const;
};

struct TrainingConfig {
  std::size_t batch_size = 128;
  std::size_t max_epochs = 50;
  std::size_t patience = 10;  // 0 disables early stopping
  std::uint64_t seed = 1234;
  LossConfig loss;
  AdamConfig adam;
  SelectionMetric selection = SelectionMetric::kSumOfRecalls;
  double clip_norm = 0;  // global gradient norm clip; 0 disables
  std::size_t threads = 1;
  // Called after every epoch, e.g. for progress output.
  std::function<void(const EpochRecord&)> on_epoch;

  void validate() const;
};

template <typename T>
struct TrainingResult {
  MlmmeModel<T> model;  // best epoch, not last
  TrainingHistory history;
  std::array<std::size_t, kDirectionCount> sampler_invocations{};
};

// Minibatch Adam training with per-epoch contrastive resampling and
// deterministic shuffling; keeps the parameters of the best-scoring epoch
// and stops after `patience` epochs without improvement.
template <typename T>
TrainingResult<T> train(MlmmeModel<T> model, const Dataset& train_set,
                        const Dataset& validation,
                        const TrainingConfig& config);

// sum_of_recalls: r@1 + r@5 + r@10 summed over both retrieval directions
// and every language (at most 6 per language). loss: negative mean joint
// loss per instance under a contrastive plan drawn from `seed`.
template <typename T>
double validation_score(const MlmmeModel<T>& model, const Dataset& validation,
                        SelectionMetric metric, std::uint64_t seed = 0);

// Visitation order of one epoch; a pure function of (seed, epoch).
std::vector<std::size_t> epoch_order(std::size_t size, std::uint64_t seed,
                                     std::size_t epoch);

// Finite-difference check of the joint objective on a tiny random
// double-precision model with dropout off.
struct ModelGradcheckConfig {
  ModelDims dims{6, 8, 10, 12};
  std::size_t languages = 2;
  std::size_t instances = 4;
  std::size_t vocabulary = 10;  // tokens per language
  LossConfig loss{0.2, 0.5, 2};
  double init_stddev = 0.3;
  std::uint64_t seed = 7;
  // Scales one analytic gradient by 1.5 so the check has something to catch.
  bool inject_bug = false;
};

GradcheckReport check_model_gradients(const ModelGradcheckConfig& config);

}  // namespace mlmme

#endif  // MLMME_TRAINING_H_
