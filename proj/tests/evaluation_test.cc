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

#include "mlmme/evaluation.h"

#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "mlmme/errors.h"
#include "oracles.h"
#include "toy_model.h"

namespace mlmme {
namespace {

ScoreMatrix matrix(std::size_t q, std::size_t c, std::vector<double> v,
                   std::vector<std::vector<std::size_t>> gold) {
  ScoreMatrix m;
  m.scores = Matrix<double>(q, c);
  for (std::size_t i = 0; i < v.size(); ++i) m.scores[i] = v[i];
  m.gold = std::move(gold);
  return m;
}

TEST(RetrievalEval, PerfectRetrieval) {
  RetrievalReport r = retrieval_eval(
      matrix(3, 3, {0.9, 0.1, 0.2, 0.0, 0.8, 0.3, 0.1, 0.2, 0.7},
             {{0}, {1}, {2}}));
  EXPECT_EQ(r.r1, 1.0);
  EXPECT_EQ(r.r5, 1.0);
  EXPECT_EQ(r.r10, 1.0);
  EXPECT_EQ(r.median_rank, 1.0);
}

TEST(RetrievalEval, GoldRankedSixth) {
  RetrievalReport r = retrieval_eval(
      matrix(1, 10, {10, 9, 8, 7, 6, 5, 4, 3, 2, 1}, {{5}}));
  EXPECT_EQ(r.ranks, (std::vector<std::size_t>{6}));
  EXPECT_EQ(r.r1, 0.0);
  EXPECT_EQ(r.r5, 0.0);
  EXPECT_EQ(r.r10, 1.0);
  EXPECT_EQ(r.median_rank, 6.0);
}

TEST(RetrievalEval, TiesAreOptimisticAndBestGoldCounts) {
  RetrievalReport r =
      retrieval_eval(matrix(1, 5, {0.5, 0.5, 0.9, 0.1, 0.5}, {{4, 3}}));
  EXPECT_EQ(r.ranks, (std::vector<std::size_t>{2}));
}

TEST(RetrievalEval, EvenCountMedianAverages) {
  RetrievalReport r = retrieval_eval(matrix(
      2, 4, {1, 2, 3, 4, 4, 3, 2, 1}, {{3}, {2}}));
  EXPECT_EQ(r.ranks, (std::vector<std::size_t>{1, 3}));
  EXPECT_EQ(r.median_rank, 2.0);
}

TEST(RetrievalEval, EmptyGoldRejected) {
  EXPECT_THROW(retrieval_eval(matrix(1, 2, {1, 2}, {{}})), InvalidArgument);
}

TEST(RetrievalEval, MatchesSortOracle) {
  Rng rng(31);
  for (int trial = 0; trial < 20; ++trial) {
    ScoreMatrix m;
    m.scores = Matrix<double>(50, 200);
    for (auto& v : m.scores.values()) v = double(rng.uniform_index(40)) / 40;
    for (std::size_t q = 0; q < 50; ++q)
      m.gold.push_back({rng.uniform_index(200), rng.uniform_index(200)});
    EXPECT_EQ(retrieval_eval(m), oracle::sort_ranks(m));
  }
}

TEST(Pearson, Examples) {
  std::vector<double> x = {1, 2, 3, 4}, y = {2, 1, 4, 3}, neg = {-1, -2, -3, -4};
  EXPECT_DOUBLE_EQ(pearson(x, y), 0.6);
  EXPECT_DOUBLE_EQ(pearson(x, x), 1.0);
  EXPECT_DOUBLE_EQ(pearson(x, neg), -1.0);
}

TEST(Pearson, ConstantInputUndefined) {
  std::vector<double> x = {5, 5, 5}, y = {1, 2, 3};
  EXPECT_THROW(pearson(x, y), NumericalError);
}

TEST(Pearson, MatchesDirectFormula) {
  Rng rng(4);
  std::vector<double> x(300), y(300);
  for (std::size_t i = 0; i < x.size(); ++i) {
    x[i] = rng.normal(0, 1);
    y[i] = 0.3 * x[i] + rng.normal(0, 1);
  }
  EXPECT_NEAR(pearson(x, y), oracle::pearson_direct(x, y), 1e-12);
}

TEST(StsPairs, ParseAndErrors) {
  std::istringstream ok("a dog\ta cat\t3.5\n\nx\ty\t0\n");
  auto lines = parse_sts_pairs(ok);
  ASSERT_EQ(lines.size(), 2u);
  EXPECT_EQ(lines[0].sentence_b, (std::vector<std::string>{"a", "cat"}));
  EXPECT_EQ(lines[0].gold, 3.5);
  std::istringstream bad("a\tb\t1\nmissing tab 2\n");
  try {
    parse_sts_pairs(bad);
    FAIL() << "expected InputError";
  } catch (const InputError& e) {
    EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos);
  }
  std::istringstream range("a\tb\t7\n");
  EXPECT_THROW(parse_sts_pairs(range), InputError);
}

TEST(StsScore, HandBuiltEmbeddings) {
  auto m = testing_support::direction_model({0.0, 60.0, 180.0});
  // Tokens 2, 3, 4 point at 0, 60 and 180 degrees.
  EXPECT_NEAR(sts_score(m, StsPair{{2}, {2}, 0}, "en"), 5.0, 1e-12);
  EXPECT_NEAR(sts_score(m, StsPair{{2}, {3}, 0}, "en"), 2.5, 1e-12);
  EXPECT_EQ(sts_score(m, StsPair{{2}, {4}, 0}, "en"), 0.0);
  EXPECT_THROW(sts_score(m, StsPair{{}, {2}, 0}, "en"), InvalidArgument);
}

TEST(RankCrossModal, PerfectToyModel) {
  auto m = testing_support::direction_model({0.0, 120.0, 240.0});
  Dataset d = testing_support::direction_dataset(m, {0.0, 120.0, 240.0});
  for (auto dir : {RankDirection::kSentenceToImage,
                   RankDirection::kImageToSentence}) {
    RetrievalReport r = rank_cross_modal(m, d, dir, "en");
    EXPECT_EQ(r.r1, 1.0);
    EXPECT_EQ(r.median_rank, 1.0);
  }
  EXPECT_THROW(rank_cross_modal(m, d, RankDirection::kSentenceToImage, "fr"),
               InvalidArgument);
}

TEST(EmbedSplit, DeduplicatesImages) {
  auto m = testing_support::direction_model({0.0, 90.0});
  Dataset d = testing_support::direction_dataset(m, {0.0, 90.0});
  d.instances.push_back(d.instances[0]);
  EmbeddedSplit<double> s = embed_split(m, d);
  EXPECT_EQ(s.images.rows(), 2u);
  EXPECT_EQ(s.instance_image, (std::vector<std::size_t>{0, 1, 0}));
  ScoreMatrix i2s = cross_modal_scores(s, RankDirection::kImageToSentence, 0);
  EXPECT_EQ(i2s.gold[0], (std::vector<std::size_t>{0, 2}));
}

}  // namespace
}  // namespace mlmme
