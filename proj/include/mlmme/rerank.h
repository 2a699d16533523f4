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

#ifndef MLMME_RERANK_H_
#define MLMME_RERANK_H_

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "mlmme/dataio.h"
#include "mlmme/model.h"

namespace mlmme {

using Tokens = std::vector<std::string>;

struct NBestEntry {
  std::size_t segment_id = 0;
  Tokens hypothesis;
  double log_likelihood = 0;
  std::vector<double> features;
};

struct NBestList {
  std::size_t segment_id = 0;
  Tokens source;
  std::optional<std::vector<float>> image;
  std::vector<NBestEntry> entries;
};

// "segment_id ||| hypothesis tokens ||| log_likelihood" per line. Entries
// are grouped by segment id in order of first appearance.
std::vector<NBestList> parse_nbest(std::istream& in);
std::vector<NBestList> load_nbest(const std::filesystem::path& path);

// One whitespace-tokenized sentence per line; empty lines stay empty.
std::vector<Tokens> load_sentences(const std::filesystem::path& path);
// Line i holds the feature-store row of segment i.
std::vector<std::size_t> load_image_alignment(const std::filesystem::path& path);

// Copies source sentences (and image rows, if given) into the lists by
// segment id.
void attach_context(std::vector<NBestList>& lists,
                    const std::vector<Tokens>& sources,
                    const ImageFeatureStore* images,
                    const std::vector<std::size_t>* alignment);

struct FeatureConfig {
  std::string source_language;
  std::string target_language;
  bool use_image = false;
};

// {"log_likelihood", "s_s"} plus "s_i" when images are used.
std::vector<std::string> feature_names(bool use_image);

// Fills every entry with [log-likelihood, s_s(source, hypothesis),
// s_i(image, hypothesis)] computed in inference mode.
template <typename T>
void extract_features(NBestList& list, const MlmmeModel<T>& model,
                      const FeatureConfig& config);
template <typename T>
void extract_features(std::vector<NBestList>& lists,
                      const MlmmeModel<T>& model, const FeatureConfig& config);

// Clipped n-gram statistics for n = 1..4.
struct BleuStats {
  std::array<double, 4> matches{};
  std::array<double, 4> totals{};
  double hypothesis_length = 0;
  double reference_length = 0;

  BleuStats& operator+=(const BleuStats& o);
  BleuStats scaled(double f) const;
};

BleuStats bleu_stats(const Tokens& hypothesis, const Tokens& reference);

// BLEU-4 with add-one smoothing on the 2..4-gram precisions and brevity
// penalty exp(min(0, 1 - |ref| / |hyp|)). Zero unigram matches or an empty
// hypothesis give 0.
double sentence_bleu(const Tokens& hypothesis, const Tokens& reference);

// Unsmoothed corpus BLEU-4 over summed statistics, in [0, 1].
double corpus_bleu(const std::vector<Tokens>& hypotheses,
                   const std::vector<Tokens>& references);

struct WeightVector {
  std::vector<std::string> names;
  std::vector<double> values;

  // Weight 1 on the first feature (the log-likelihood), 0 elsewhere.
  static WeightVector baseline(std::vector<std::string> names);
  static WeightVector zeros(std::vector<std::string> names);
  double score(const std::vector<double>& features) const;

  // "feature_name<TAB>value" lines.
  void save(std::ostream& out) const;
  static WeightVector load(std::istream& in);
};

enum class MiraMetric {
  kSentenceBleu,    // smoothed sentence BLEU
  kBackgroundBleu,  // BLEU against a decayed pseudo-document
};

struct MiraConfig {
  double c = 0.01;
  std::size_t epochs = 30;
  std::uint64_t seed = 1;
  double bleu_decay = 0.999;  // background pseudo-document decay
  MiraMetric metric = MiraMetric::kSentenceBleu;

  void validate() const;
};

struct MiraStep {
  std::size_t epoch = 0;
  std::size_t segment = 0;
  std::size_t hope = 0;
  std::size_t fear = 0;
  double hope_bleu = 0;
  double fear_bleu = 0;
};

// Online hope/fear k-best MIRA. Per segment: hope = argmax(score + bleu),
// fear = argmax(score - bleu), step min(C, loss / |df|^2) with
// loss = (bleu(hope) - bleu(fear)) - w.df clipped at 0. Segments are
// visited in a seeded shuffle each epoch; the result averages the
// end-of-epoch weights.
WeightVector mira_train(const std::vector<NBestList>& dev,
                        const std::vector<Tokens>& references,
                        const MiraConfig& config, const WeightVector& initial,
                        std::vector<MiraStep>* trace = nullptr);

// Per list, the index of argmax w.features; ties go to the earlier entry.
std::vector<std::size_t> rerank_apply(const std::vector<NBestList>& lists,
                                      const WeightVector& weights);

}  // namespace mlmme

#endif  // MLMME_RERANK_H_
