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

#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>
#include <sstream>

#include "mlmme/errors.h"
#include "toy_model.h"

namespace mlmme {
namespace {

struct TinySetup {
  Dataset data;
  std::vector<Vocabulary> vocabularies;
};

// 2 classes x 10 images x 1 caption = 20 instances in two languages.
TinySetup tiny_setup() {
  SyntheticSpec spec;
  spec.classes = 2;
  spec.images_per_class = 10;
  spec.train_images_per_class = 10;
  spec.captions_per_image = 1;
  spec.vocabulary_size = 60;
  spec.feature_dim = 16;
  spec.seed = 5;
  SyntheticData syn = generate_synthetic(spec);
  TinySetup s;
  for (const auto& c : syn.train.corpora)
    s.vocabularies.push_back(Vocabulary::build(c.language, c.sentences));
  s.data = make_dataset(syn.train.corpora, syn.train.images, s.vocabularies);
  return s;
}

MlmmeModel<float> tiny_model(const TinySetup& s, const LossConfig& loss) {
  Rng rng(3);
  return MlmmeModel<float>::create(s.vocabularies, ModelDims{8, 16, 16, 16},
                                   loss, 0.0, rng, 0.1);
}

TrainingConfig tiny_config(double beta) {
  TrainingConfig c;
  c.batch_size = 8;
  c.max_epochs = 30;
  c.patience = 0;
  c.seed = 99;
  c.loss = LossConfig{0.2, beta, 3};
  c.adam.learning_rate = 0.01;
  c.selection = SelectionMetric::kLoss;
  return c;
}

std::string serialize(const MlmmeModel<float>& m) {
  std::ostringstream out;
  m.write(out);
  return out.str();
}

TEST(TrainingConfig, RejectsZeroEpochs) {
  TrainingConfig c;
  c.max_epochs = 0;
  EXPECT_THROW(c.validate(), InvalidArgument);
  c.max_epochs = 1;
  c.batch_size = 0;
  EXPECT_THROW(c.validate(), InvalidArgument);
}

TEST(Train, TinyDatasetLossDropsTenfold) {
  TinySetup s = tiny_setup();
  ASSERT_EQ(s.data.size(), 20u);
  TrainingConfig c = tiny_config(0.5);
  auto r = train(tiny_model(s, c.loss), s.data, Dataset{}, c);
  ASSERT_EQ(r.history.epochs.size(), 30u);
  const double first = r.history.epochs.front().mean_loss;
  const double last = r.history.epochs.back().mean_loss;
  EXPECT_GT(first, 0.0);
  EXPECT_LT(last, 0.1 * first) << "first " << first << " last " << last;
}

TEST(Train, BitwiseDeterministic) {
  TinySetup s = tiny_setup();
  TrainingConfig c = tiny_config(0.75);
  c.max_epochs = 5;
  auto a = train(tiny_model(s, c.loss), s.data, Dataset{}, c);
  auto b = train(tiny_model(s, c.loss), s.data, Dataset{}, c);
  EXPECT_EQ(serialize(a.model), serialize(b.model));
  std::ostringstream la, lb;
  a.history.write_log(la);
  b.history.write_log(lb);
  EXPECT_EQ(la.str(), lb.str());
  EXPECT_EQ(a.history.best_epoch, b.history.best_epoch);
}

TEST(Train, SeedChangesResult) {
  TinySetup s = tiny_setup();
  TrainingConfig c = tiny_config(0.75);
  c.max_epochs = 2;
  auto a = train(tiny_model(s, c.loss), s.data, Dataset{}, c);
  c.seed = 100;
  auto b = train(tiny_model(s, c.loss), s.data, Dataset{}, c);
  EXPECT_NE(serialize(a.model), serialize(b.model));
}

TEST(Train, BetaOneNeverSamplesSentencePairs) {
  TinySetup s = tiny_setup();
  TrainingConfig c = tiny_config(1.0);
  c.max_epochs = 3;
  auto r = train(tiny_model(s, c.loss), s.data, Dataset{}, c);
  EXPECT_EQ(r.sampler_invocations[std::size_t(Direction::kSentenceToSentence)],
            0u);
  EXPECT_GT(r.sampler_invocations[std::size_t(Direction::kSentenceToImage)],
            0u);
}

TEST(Train, SingleLanguageNeedsBetaOne) {
  auto m = testing_support::direction_model({0, 90, 180});
  Dataset d = testing_support::direction_dataset(m, {0, 90, 180});
  TrainingConfig c;
  c.max_epochs = 1;
  c.selection = SelectionMetric::kLoss;
  c.loss = LossConfig{0.2, 0.5, 1};
  EXPECT_THROW(train(m, d, Dataset{}, c), ConfigError);
}

TEST(Train, SumOfRecallsNeedsValidation) {
  auto m = testing_support::direction_model({0, 90});
  Dataset d = testing_support::direction_dataset(m, {0, 90});
  TrainingConfig c;
  c.max_epochs = 1;
  EXPECT_THROW(train(m, d, Dataset{}, c), InvalidArgument);
}

TEST(ValidationScore, PerfectToyGivesSixPerLanguage) {
  const std::vector<double> angles = {0, 72, 144, 216, 288};
  auto m = testing_support::direction_model(angles);
  Dataset d = testing_support::direction_dataset(m, angles);
  EXPECT_DOUBLE_EQ(validation_score(m, d, SelectionMetric::kSumOfRecalls),
                   6.0);
}

TEST(ValidationScore, LossModeZeroWhenSeparated) {
  const std::vector<double> angles = {0, 180};
  auto m = testing_support::direction_model(angles);
  m.set_loss_config(LossConfig{0.2, 1.0, 1});
  Dataset d = testing_support::direction_dataset(m, angles);
  EXPECT_EQ(validation_score(m, d, SelectionMetric::kLoss), 0.0);
}

TEST(ValidationScore, LossModeNegativeWhenViolated) {
  const std::vector<double> angles = {0, 10};
  auto m = testing_support::direction_model(angles);
  m.set_loss_config(LossConfig{0.2, 1.0, 1});
  Dataset d = testing_support::direction_dataset(m, angles);
  EXPECT_LT(validation_score(m, d, SelectionMetric::kLoss), 0.0);
}

TEST(EpochOrder, PermutationAndDeterminism) {
  auto a = epoch_order(50, 7, 1);
  auto sorted = a;
  std::sort(sorted.begin(), sorted.end());
  std::vector<std::size_t> iota(50);
  std::iota(iota.begin(), iota.end(), 0);
  EXPECT_EQ(sorted, iota);
  EXPECT_EQ(a, epoch_order(50, 7, 1));
  EXPECT_NE(a, epoch_order(50, 7, 2));
  EXPECT_NE(a, epoch_order(50, 8, 1));
}

TEST(SelectionMetric, Names) {
  EXPECT_EQ(parse_selection_metric("loss"), SelectionMetric::kLoss);
  EXPECT_EQ(parse_selection_metric("sum_of_recalls"),
            SelectionMetric::kSumOfRecalls);
  EXPECT_THROW(parse_selection_metric("bleu"), ConfigError);
}

TEST(ModelGradients, PassAndCatchInjectedBug) {
  ModelGradcheckConfig c;
  for (double beta : {0.0, 0.5, 1.0}) {
    c.loss.beta = beta;
    auto r = check_model_gradients(c);
    EXPECT_LT(r.max_relative_error, 1e-4) << "beta " << beta;
  }
  c.inject_bug = true;
  c.loss.beta = 0.5;
  EXPECT_GT(check_model_gradients(c).max_relative_error, 1e-2);
}

}  // namespace
}  // namespace mlmme
