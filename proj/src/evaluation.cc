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

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <map>

namespace mlmme {

double RetrievalReport::recall_at(int k) const {
  switch (k) {
    case 1: return r1;
    case 5: return r5;
    case 10: return r10;
  }
  if (ranks.empty()) return 0;
  std::size_t hits = 0;
  for (auto r : ranks) hits += r <= std::size_t(k);
  return double(hits) / double(ranks.size());
}

RetrievalReport retrieval_eval(const ScoreMatrix& sm) {
  const Matrix<double>& s = sm.scores;
  if (s.rows() == 0 || s.cols() == 0)
    throw InvalidArgument("retrieval_eval: empty score matrix");
  if (sm.gold.size() != s.rows())
    throw InvalidArgument("retrieval_eval: one gold set per query required");
  RetrievalReport report;
  report.ranks.reserve(s.rows());
  for (std::size_t q = 0; q < s.rows(); ++q) {
    const auto& gold = sm.gold[q];
    if (gold.empty())
      throw InvalidArgument("retrieval_eval: query " + std::to_string(q) +
                            " has no gold candidate");
    auto row = s.row(q);
    double best = -std::numeric_limits<double>::infinity();
    for (auto g : gold) {
      if (g >= s.cols())
        throw InvalidArgument("retrieval_eval: gold index out of range");
      best = std::max(best, row[g]);
    }
    std::size_t above = 0;
    for (double v : row) above += v > best;
    report.ranks.push_back(above + 1);
  }
  const double n = double(report.ranks.size());
  std::size_t h1 = 0, h5 = 0, h10 = 0;
  for (auto r : report.ranks) {
    h1 += r <= 1;
    h5 += r <= 5;
    h10 += r <= 10;
  }
  report.r1 = double(h1) / n;
  report.r5 = double(h5) / n;
  report.r10 = double(h10) / n;
  std::vector<std::size_t> sorted = report.ranks;
  std::sort(sorted.begin(), sorted.end());
  const std::size_t m = sorted.size();
  report.median_rank = m % 2 ? double(sorted[m / 2])
                             : 0.5 * double(sorted[m / 2 - 1] + sorted[m / 2]);
  return report;
}

const char* direction_name(RankDirection d) {
  return d == RankDirection::kSentenceToImage ? "sentence_to_image"
                                              : "image_to_sentence";
}

template <typename T>
EmbeddedSplit<T> embed_split(const MlmmeModel<T>& model, const Dataset& data) {
  if (data.instances.empty())
    throw InvalidArgument("embed_split: no instances");
  if (data.languages != model.languages())
    throw InvalidArgument("embed_split: dataset languages do not match model");
  const std::size_t langs = model.language_count();
  const std::size_t dim = model.dims().multimodal;
  Rng unused(0);
  EmbeddedSplit<T> out;
  out.sentences.assign(langs, Matrix<T>(data.size(), dim));
  std::map<std::size_t, std::size_t> image_rows;
  std::vector<std::size_t> order;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto& inst = data.instances[i];
    for (std::size_t k = 0; k < langs; ++k) {
      auto v = model.encode_sentence(k, inst.sentences.at(k), false, unused);
      std::copy(v.begin(), v.end(), out.sentences[k].row(i).begin());
    }
    auto [it, inserted] = image_rows.emplace(inst.image, order.size());
    if (inserted) order.push_back(inst.image);
    out.instance_image.push_back(it->second);
  }
  out.images = Matrix<T>(order.size(), dim);
  for (std::size_t j = 0; j < order.size(); ++j) {
    auto d = model.embed_image(data.images.row(order[j]), false, unused);
    std::copy(d.begin(), d.end(), out.images.row(j).begin());
  }
  return out;
}

namespace {

template <typename T>
Matrix<double> inner_products(const Matrix<T>& queries,
                              const Matrix<T>& candidates) {
  Matrix<double> s(queries.rows(), candidates.rows());
  for (std::size_t q = 0; q < queries.rows(); ++q)
    for (std::size_t c = 0; c < candidates.rows(); ++c)
      s(q, c) = double(similarity(queries.row(q), candidates.row(c)));
  return s;
}

}  // namespace

template <typename T>
ScoreMatrix cross_modal_scores(const EmbeddedSplit<T>& split,
                               RankDirection direction, std::size_t language) {
  if (language >= split.sentences.size())
    throw InvalidArgument("cross_modal_scores: language out of range");
  const Matrix<T>& sent = split.sentences[language];
  ScoreMatrix sm;
  if (direction == RankDirection::kSentenceToImage) {
    sm.scores = inner_products(sent, split.images);
    for (std::size_t i = 0; i < sent.rows(); ++i)
      sm.gold.push_back({split.instance_image[i]});
  } else {
    sm.scores = inner_products(split.images, sent);
    sm.gold.resize(split.images.rows());
    for (std::size_t i = 0; i < sent.rows(); ++i)
      sm.gold[split.instance_image[i]].push_back(i);
  }
  return sm;
}

template <typename T>
ScoreMatrix cross_lingual_scores(const EmbeddedSplit<T>& split,
                                 std::size_t query_language,
                                 std::size_t candidate_language) {
  if (query_language >= split.sentences.size() ||
      candidate_language >= split.sentences.size())
    throw InvalidArgument("cross_lingual_scores: language out of range");
  ScoreMatrix sm;
  sm.scores = inner_products(split.sentences[query_language],
                             split.sentences[candidate_language]);
  std::vector<std::vector<std::size_t>> by_image(split.images.rows());
  for (std::size_t i = 0; i < split.instance_image.size(); ++i)
    by_image[split.instance_image[i]].push_back(i);
  for (std::size_t i = 0; i < split.instance_image.size(); ++i)
    sm.gold.push_back(by_image[split.instance_image[i]]);
  return sm;
}

template <typename T>
RetrievalReport rank_cross_modal(const MlmmeModel<T>& model,
                                 const Dataset& data, RankDirection direction,
                                 std::string_view language) {
  const std::size_t k = model.language_index(language);
  return retrieval_eval(cross_modal_scores(embed_split(model, data), direction, k));
}

template <typename T>
RetrievalReport rank_cross_lingual(const MlmmeModel<T>& model,
                                   const Dataset& data,
                                   std::string_view query_language,
                                   std::string_view candidate_language) {
  const std::size_t k = model.language_index(query_language);
  const std::size_t l = model.language_index(candidate_language);
  return retrieval_eval(cross_lingual_scores(embed_split(model, data), k, l));
}

std::vector<StsLine> parse_sts_pairs(std::istream& in) {
  std::vector<StsLine> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto t1 = line.find('\t');
    const auto t2 = t1 == std::string::npos ? t1 : line.find('\t', t1 + 1);
    auto fail = [&](const std::string& why) {
      return InputError("sts pairs: line " + std::to_string(lineno) + ": " +
                        why);
    };
    if (t2 == std::string::npos ||
        line.find('\t', t2 + 1) != std::string::npos)
      throw fail("expected three tab-separated fields");
    StsLine p;
    p.sentence_a = tokenize(std::string_view(line).substr(0, t1));
    p.sentence_b = tokenize(std::string_view(line).substr(t1 + 1, t2 - t1 - 1));
    const std::string gold = line.substr(t2 + 1);
    try {
      std::size_t used = 0;
      p.gold = std::stod(gold, &used);
      if (used != gold.size()) throw std::invalid_argument(gold);
    } catch (const std::exception&) {
      throw fail("gold score '" + gold + "' is not a number");
    }
    if (p.sentence_a.empty() || p.sentence_b.empty())
      throw fail("empty sentence");
    if (!(p.gold >= 0 && p.gold <= 5)) throw fail("gold score outside [0, 5]");
    out.push_back(std::move(p));
  }
  return out;
}

std::vector<StsLine> load_sts_pairs(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open pair file " + path.string());
  return parse_sts_pairs(in);
}

template <typename T>
double sts_score(const MlmmeModel<T>& model, const StsPair& pair,
                 std::string_view language) {
  if (pair.sentence_a.empty() || pair.sentence_b.empty())
    throw InvalidArgument("sts_score: empty sentence");
  const std::size_t k = model.language_index(language);
  Rng unused(0);
  auto a = model.encode_sentence(k, pair.sentence_a, false, unused);
  auto b = model.encode_sentence(k, pair.sentence_b, false, unused);
  const double sim =
      double(similarity(std::span<const T>(a), std::span<const T>(b)));
  return 5.0 * std::max(0.0, sim);
}

double pearson(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size())
    throw InvalidArgument("pearson: inputs have different lengths");
  if (x.size() < 2) throw InvalidArgument("pearson: need at least two points");
  const double n = double(x.size());
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = x[i] - mx, dy = y[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx == 0 || syy == 0)
    throw NumericalError("pearson: correlation undefined for constant input");
  const double r = sxy / std::sqrt(sxx * syy);
  return std::clamp(r, -1.0, 1.0);
}

#define MLMME_INSTANTIATE(T)                                                   \
  template EmbeddedSplit<T> embed_split<T>(const MlmmeModel<T>&,               \
                                           const Dataset&);                    \
  template ScoreMatrix cross_modal_scores<T>(const EmbeddedSplit<T>&,          \
                                             RankDirection, std::size_t);      \
  template ScoreMatrix cross_lingual_scores<T>(const EmbeddedSplit<T>&,        \
                                               std::size_t, std::size_t);      \
  template RetrievalReport rank_cross_modal<T>(                                \
      const MlmmeModel<T>&, const Dataset&, RankDirection, std::string_view);  \
  template RetrievalReport rank_cross_lingual<T>(                              \
      const MlmmeModel<T>&, const Dataset&, std::string_view,                  \
      std::string_view);                                                       \
  template double sts_score<T>(const MlmmeModel<T>&, const StsPair&,           \
                               std::string_view);

MLMME_INSTANTIATE(float)
MLMME_INSTANTIATE(double)

#undef MLMME_INSTANTIATE

}  // namespace mlmme
