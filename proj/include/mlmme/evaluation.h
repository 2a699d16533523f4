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

#ifndef MLMME_EVALUATION_H_
#define MLMME_EVALUATION_H_

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "mlmme/dataio.h"
#include "mlmme/model.h"

namespace mlmme {

// Rows are queries, columns candidates. gold[q] lists the correct
// candidates of query q.
struct ScoreMatrix {
  Matrix<double> scores;
  std::vector<std::vector<std::size_t>> gold;
};

struct RetrievalReport {
  double r1 = 0;
  double r5 = 0;
  double r10 = 0;
  double median_rank = 0;
  std::vector<std::size_t> ranks;  // per query, 1-based

  double recall_at(int k) const;
  bool operator==(const RetrievalReport&) const = default;
};

// rank(q) = 1 + number of candidates scoring strictly above the best gold
// candidate. Ties therefore never hurt. Even-sized rank lists take the mean
// of the two middle ranks as median.
RetrievalReport retrieval_eval(const ScoreMatrix& scores);

enum class RankDirection { kSentenceToImage, kImageToSentence };

const char* direction_name(RankDirection d);

// Inference-mode embeddings of one evaluation split. Images are embedded
// once per distinct feature row, in order of first appearance.
template <typename T>
struct EmbeddedSplit {
  std::vector<Matrix<T>> sentences;  // per language, one row per instance
  Matrix<T> images;                  // one row per distinct image
  std::vector<std::size_t> instance_image;  // instance -> row of `images`
};

template <typename T>
EmbeddedSplit<T> embed_split(const MlmmeModel<T>& model, const Dataset& data);

// Sentence->image: each sentence's gold is its own image. Image->sentence:
// candidates are all sentences and the gold set is the image's captions.
template <typename T>
ScoreMatrix cross_modal_scores(const EmbeddedSplit<T>& split,
                               RankDirection direction, std::size_t language);

// Captions of `query_language` ranked against captions of
// `candidate_language`; gold = captions of the same image.
template <typename T>
ScoreMatrix cross_lingual_scores(const EmbeddedSplit<T>& split,
                                 std::size_t query_language,
                                 std::size_t candidate_language);

template <typename T>
RetrievalReport rank_cross_modal(const MlmmeModel<T>& model,
                                 const Dataset& data, RankDirection direction,
                                 std::string_view language);

template <typename T>
RetrievalReport rank_cross_lingual(const MlmmeModel<T>& model,
                                   const Dataset& data,
                                   std::string_view query_language,
                                   std::string_view candidate_language);

struct StsPair {
  TokenSequence sentence_a;
  TokenSequence sentence_b;
  double gold = 0;
};

// Raw form of a pair file line: "sentence A<TAB>sentence B<TAB>gold".
struct StsLine {
  std::vector<std::string> sentence_a;
  std::vector<std::string> sentence_b;
  double gold = 0;
};

std::vector<StsLine> load_sts_pairs(const std::filesystem::path& path);
std::vector<StsLine> parse_sts_pairs(std::istream& in);

// 5 * max(0, <encode(a), encode(b)>) with the encoder of `language`.
template <typename T>
double sts_score(const MlmmeModel<T>& model, const StsPair& pair,
                 std::string_view language);

// Pearson product-moment correlation. Throws NumericalError when either
// input is constant.
double pearson(std::span<const double> predictions,
               std::span<const double> golds);

}  // namespace mlmme

#endif  // MLMME_EVALUATION_H_
