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

#include "mlmme/rerank.h"

#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "mlmme/errors.h"
#include "nbest_fixture.h"
#include "toy_model.h"

namespace mlmme {
namespace {

Tokens words(const std::string& s) {
  std::istringstream in(s);
  Tokens out;
  for (std::string w; in >> w;) out.push_back(w);
  return out;
}

std::vector<NBestList> parse(const std::string& text) {
  std::istringstream in(text);
  return parse_nbest(in);
}

TEST(ParseNBest, GroupsBySegmentInFirstAppearanceOrder) {
  auto lists = parse(
      "1 ||| a dog ||| -2.0\n"
      "0 ||| ein hund ||| -1.5\n"
      "1 ||| the dog ||| -2.5\n"
      "\n"
      "0 ||| ein  kleiner hund ||| -3\n");
  ASSERT_EQ(lists.size(), 2u);
  EXPECT_EQ(lists[0].segment_id, 1u);
  EXPECT_EQ(lists[1].segment_id, 0u);
  ASSERT_EQ(lists[1].entries.size(), 2u);
  EXPECT_EQ(lists[1].entries[0].hypothesis, words("ein hund"));
  EXPECT_DOUBLE_EQ(lists[1].entries[0].log_likelihood, -1.5);
  EXPECT_EQ(lists[1].entries[1].hypothesis, words("ein kleiner hund"));
}

TEST(ParseNBest, EmptyInputGivesNoLists) {
  EXPECT_TRUE(parse("").empty());
}

TEST(ParseNBest, MissingFieldNamesLine) {
  try {
    parse("0 ||| ein hund\n");
    FAIL() << "expected InputError";
  } catch (const InputError& e) {
    EXPECT_NE(std::string(e.what()).find("line 1"), std::string::npos)
        << e.what();
  }
}

TEST(ParseNBest, RejectsBadNumbers) {
  EXPECT_THROW(parse("x ||| a ||| -1\n"), InputError);
  EXPECT_THROW(parse("0 ||| a ||| nope\n"), InputError);
  EXPECT_THROW(parse("0 ||| a ||| inf\n"), InputError);
  EXPECT_THROW(parse("0 ||| a ||| -1 ||| extra\n"), InputError);
}

TEST(Bleu, ClippedUnigramCounts) {
  BleuStats s = bleu_stats(words("the the the cat"), words("the cat sat down"));
  EXPECT_EQ(s.matches[0], 2);
  EXPECT_EQ(s.totals[0], 4);
  EXPECT_EQ(s.matches[1], 1);
  EXPECT_EQ(s.totals[1], 3);
  EXPECT_EQ(s.matches[2], 0);
  EXPECT_EQ(s.totals[3], 1);
  EXPECT_NEAR(sentence_bleu(words("the the the cat"), words("the cat sat down")),
              0.45180100180492239, 1e-12);
}

TEST(Bleu, IdentityIsOne) {
  EXPECT_NEAR(sentence_bleu(words("a b c d e"), words("a b c d e")), 1.0,
              1e-15);
  EXPECT_NEAR(corpus_bleu({words("a b c d e")}, {words("a b c d e")}), 1.0,
              1e-15);
}

TEST(Bleu, DisjointIsZero) {
  EXPECT_EQ(sentence_bleu(words("x y z"), words("a b c")), 0.0);
  EXPECT_LT(sentence_bleu(words("the x y z w"), words("the a b c d")), 0.25);
  EXPECT_NEAR(sentence_bleu(words("the x y z w"), words("the a b c d")),
              0.24028114141347542, 1e-12);
}

TEST(Bleu, BrevityPenalty) {
  EXPECT_NEAR(sentence_bleu(words("the cat"), words("the cat sat on the mat")),
              0.1353352832366127, 1e-12);
  EXPECT_NEAR(sentence_bleu(words("cat"), words("the cat")),
              0.36787944117144233, 1e-12);
}

TEST(Bleu, EmptyCases) {
  EXPECT_EQ(sentence_bleu({}, words("a b")), 0.0);
  EXPECT_THROW(sentence_bleu(words("a b"), {}), InvalidArgument);
  EXPECT_THROW(corpus_bleu({words("a")}, {}), InvalidArgument);
}

TEST(Bleu, CorpusMicroAverage) {
  std::vector<Tokens> hyps = {words("the cat sat on the mat"),
                              words("a dog ran very fast today")};
  std::vector<Tokens> refs = {words("the cat sat on the mat"),
                              words("a dog ran quickly today")};
  EXPECT_NEAR(corpus_bleu(hyps, refs), 0.65341891762863991, 1e-12);
  // Micro-averaging differs from the mean of sentence scores.
  const double mean =
      0.5 * (sentence_bleu(hyps[0], refs[0]) + sentence_bleu(hyps[1], refs[1]));
  EXPECT_GT(std::abs(corpus_bleu(hyps, refs) - mean), 1e-3);
}

TEST(Bleu, StatsAccumulate) {
  BleuStats a = bleu_stats(words("a b"), words("a b c"));
  BleuStats b = a;
  b += a;
  EXPECT_EQ(b.matches[0], 4);
  EXPECT_EQ(b.reference_length, 6);
  BleuStats h = b.scaled(0.5);
  EXPECT_EQ(h.matches[0], 2);
  EXPECT_EQ(h.hypothesis_length, 2);
}

TEST(WeightVector, RoundTripAndBaseline) {
  WeightVector w{{"log_likelihood", "s_s", "s_i"}, {0.1, -2.5e-7, 3.0}};
  std::stringstream io;
  w.save(io);
  WeightVector r = WeightVector::load(io);
  EXPECT_EQ(r.names, w.names);
  EXPECT_EQ(r.values, w.values);

  WeightVector b = WeightVector::baseline(feature_names(false));
  EXPECT_EQ(b.values, (std::vector<double>{1.0, 0.0}));
  EXPECT_DOUBLE_EQ(b.score({-3.0, 7.0}), -3.0);
  EXPECT_THROW(b.score({1.0}), InvalidArgument);
}

TEST(WeightVector, MalformedFile) {
  std::istringstream in("s_s\n");
  EXPECT_THROW(WeightVector::load(in), InputError);
}

TEST(Mira, ConfigValidation) {
  MiraConfig c;
  c.epochs = 0;
  EXPECT_THROW(c.validate(), InvalidArgument);
  c = MiraConfig{};
  c.c = 0;
  EXPECT_THROW(c.validate(), InvalidArgument);
  c = MiraConfig{};
  c.bleu_decay = 1.5;
  EXPECT_THROW(c.validate(), InvalidArgument);
}

TEST(Mira, SeparableFeatureReachesOracle) {
  auto dev = testing_support::separable_nbest(100, 8, 2, 1);
  auto test = testing_support::separable_nbest(100, 8, 2, 2);
  MiraConfig c;
  c.epochs = 20;
  WeightVector w = mira_train(dev.lists, dev.references, c,
                              WeightVector::zeros(feature_names(false)));
  const auto baseline_pick =
      rerank_apply(test.lists, WeightVector::baseline(feature_names(false)));
  const auto pick = rerank_apply(test.lists, w);
  EXPECT_GE(testing_support::oracle_hit_rate(test, pick), 0.95);
  EXPECT_LT(testing_support::oracle_hit_rate(test, baseline_pick), 0.5);
  EXPECT_GT(testing_support::selected_corpus_bleu(test, pick),
            testing_support::selected_corpus_bleu(test, baseline_pick));
}

TEST(Mira, BackgroundMetricAlsoLearns) {
  auto dev = testing_support::separable_nbest(100, 8, 2, 3);
  MiraConfig c;
  c.epochs = 20;
  c.metric = MiraMetric::kBackgroundBleu;
  WeightVector w = mira_train(dev.lists, dev.references, c,
                              WeightVector::zeros(feature_names(false)));
  // The oracle here is sentence level, so agreement is not exact.
  const auto pick = rerank_apply(dev.lists, w);
  const auto base =
      rerank_apply(dev.lists, WeightVector::baseline(feature_names(false)));
  EXPECT_GE(testing_support::oracle_hit_rate(dev, pick), 0.9);
  EXPECT_GT(testing_support::selected_corpus_bleu(dev, pick),
            testing_support::selected_corpus_bleu(dev, base) + 0.05);
}

TEST(Mira, Deterministic) {
  auto dev = testing_support::separable_nbest(30, 5, 2, 4);
  MiraConfig c;
  c.epochs = 5;
  auto init = WeightVector::zeros(feature_names(false));
  EXPECT_EQ(mira_train(dev.lists, dev.references, c, init).values,
            mira_train(dev.lists, dev.references, c, init).values);
}

TEST(Mira, HopeEqualsFearLeavesWeights) {
  NBestList list;
  list.segment_id = 0;
  for (int i = 0; i < 2; ++i) {
    NBestEntry e;
    e.hypothesis = words("a b c");
    e.features = {-1.0, 0.5};
    list.entries.push_back(e);
  }
  std::vector<MiraStep> trace;
  auto init = WeightVector{{"log_likelihood", "s_s"}, {0.7, -0.2}};
  MiraConfig c;
  c.epochs = 3;
  WeightVector w = mira_train({list}, {words("a b c")}, c, init, &trace);
  EXPECT_EQ(w.values, init.values);
  ASSERT_EQ(trace.size(), 3u);
  EXPECT_EQ(trace[0].hope, trace[0].fear);
}

TEST(Mira, RejectsMissingFeaturesOrReferences) {
  NBestList list;
  list.segment_id = 2;
  NBestEntry e;
  e.hypothesis = words("a");
  e.features = {1.0, 2.0};
  list.entries = {e, e};
  auto init = WeightVector::baseline(feature_names(false));
  EXPECT_THROW(mira_train({list}, {words("a")}, MiraConfig{}, init),
               InvalidArgument);
  list.entries[1].features = {1.0};
  EXPECT_THROW(
      mira_train({list}, {words("a"), words("b"), words("c")}, MiraConfig{},
                 init),
      InvalidArgument);
}

TEST(RerankApply, TiesGoToEarlierEntry) {
  NBestList list;
  for (double v : {1.0, 3.0, 3.0}) {
    NBestEntry e;
    e.features = {v, 0.0};
    list.entries.push_back(e);
  }
  auto w = WeightVector::baseline(feature_names(false));
  EXPECT_EQ(rerank_apply({list}, w), (std::vector<std::size_t>{1}));
}

TEST(RerankApply, SingleEntryAndErrors) {
  NBestList list;
  NBestEntry e;
  e.features = {-4.0, 1.0};
  list.entries.push_back(e);
  auto w = WeightVector::baseline(feature_names(false));
  EXPECT_EQ(rerank_apply({list}, w), (std::vector<std::size_t>{0}));
  list.entries[0].features = {1.0, 2.0, 3.0};
  EXPECT_THROW(rerank_apply({list}, w), InvalidArgument);
  EXPECT_THROW(rerank_apply({NBestList{}}, w), InvalidArgument);
}

TEST(RerankApply, BaselineWeightsPickLogLikelihoodBest) {
  auto set = testing_support::separable_nbest(20, 6, 3, 9);
  auto pick =
      rerank_apply(set.lists, WeightVector::baseline(feature_names(true)));
  for (std::size_t s = 0; s < set.lists.size(); ++s) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < set.lists[s].entries.size(); ++i)
      if (set.lists[s].entries[i].log_likelihood >
          set.lists[s].entries[best].log_likelihood)
        best = i;
    EXPECT_EQ(pick[s], best);
  }
}

TEST(Features, ToyModelSentenceSimilarity) {
  auto m = testing_support::direction_model({0, 90, 180});
  NBestList list;
  list.source = words("t0");
  for (const char* h : {"t0", "t1", "t2"}) {
    NBestEntry e;
    e.hypothesis = words(h);
    e.log_likelihood = -1;
    list.entries.push_back(e);
  }
  extract_features(list, m, FeatureConfig{"en", "en", false});
  EXPECT_NEAR(list.entries[0].features[1], 1.0, 1e-12);
  EXPECT_NEAR(list.entries[1].features[1], 0.0, 1e-12);
  EXPECT_NEAR(list.entries[2].features[1], -1.0, 1e-12);
  EXPECT_EQ(list.entries[0].features[0], -1.0);
  EXPECT_EQ(list.entries[0].features.size(), 2u);
}

TEST(Features, ImageSimilarityAndErrors) {
  auto m = testing_support::direction_model({0, 90});
  NBestList list;
  list.source = words("t0");
  list.image = std::vector<float>{0.0f, 2.0f};
  NBestEntry e;
  e.hypothesis = words("t1");
  list.entries.push_back(e);
  extract_features(list, m, FeatureConfig{"en", "en", true});
  ASSERT_EQ(list.entries[0].features.size(), 3u);
  EXPECT_NEAR(list.entries[0].features[2], 1.0, 1e-6);

  list.entries[0].hypothesis.clear();
  EXPECT_THROW(extract_features(list, m, FeatureConfig{"en", "en", true}),
               InvalidArgument);
}

TEST(Context, AttachReportsMissingSource) {
  auto lists = parse("3 ||| a ||| -1\n");
  std::vector<Tokens> sources = {words("x")};
  EXPECT_THROW(attach_context(lists, sources, nullptr, nullptr), InputError);
  sources.resize(4, words("y"));
  attach_context(lists, sources, nullptr, nullptr);
  EXPECT_EQ(lists[0].source, words("y"));
}

}  // namespace
}  // namespace mlmme
