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

// Independent reference computations used by unit and acceptance tests.
// They enumerate terms directly from the definitions with plain loops.

#ifndef MLMME_TESTS_ORACLES_H_
#define MLMME_TESTS_ORACLES_H_

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <vector>

#include "mlmme/evaluation.h"
#include "mlmme/model.h"
#include "mlmme/numerics.h"

namespace mlmme::oracle {

using Vec = std::vector<double>;

inline double dot(const Vec& a, const Vec& b) {
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double hinge(double x) { return x > 0 ? x : 0; }

// A random batch where every instance is a positive and slot == instance.
struct RandomBatch {
  std::size_t n = 0;
  std::size_t languages = 0;
  std::size_t negatives = 0;
  std::vector<std::vector<Vec>> sentences;  // [language][instance]
  std::vector<Vec> images;                  // [instance]
  // [direction][instance * negatives + j]
  std::vector<std::vector<std::uint32_t>> negs;
  double margin = 0.2;

  EmbeddingBatch<double> batch() const {
    EmbeddingBatch<double> b;
    const std::size_t dim = images.front().size();
    b.images = Matrix<double>(n, dim);
    b.sentences.assign(languages, Matrix<double>(n, dim));
    for (std::size_t i = 0; i < n; ++i) {
      b.positives.push_back(i);
      b.slots[i] = i;
      std::copy(images[i].begin(), images[i].end(), b.images.row(i).begin());
      for (std::size_t k = 0; k < languages; ++k)
        std::copy(sentences[k][i].begin(), sentences[k][i].end(),
                  b.sentences[k].row(i).begin());
    }
    return b;
  }

  ContrastivePlan plan() const {
    ContrastivePlan p;
    p.dataset_size = n;
    p.negatives = negatives;
    for (std::size_t d = 0; d < kDirectionCount; ++d)
      p.indices[d] = negs[d];
    return p;
  }

  std::uint32_t neg(Direction d, std::size_t i, std::size_t j) const {
    return negs[std::size_t(d)][i * negatives + j];
  }
};

inline Vec random_unit(std::size_t dim, Rng& rng) {
  Vec v(dim);
  double n2 = 0;
  for (auto& x : v) {
    x = rng.normal(0, 1);
    n2 += x * x;
  }
  for (auto& x : v) x /= std::sqrt(n2);
  return v;
}

inline RandomBatch random_batch(Rng& rng, std::size_t n, std::size_t languages,
                                std::size_t negatives, std::size_t dim,
                                double margin) {
  RandomBatch b;
  b.n = n;
  b.languages = languages;
  b.negatives = negatives;
  b.margin = margin;
  b.sentences.assign(languages, {});
  for (std::size_t i = 0; i < n; ++i) {
    b.images.push_back(random_unit(dim, rng));
    for (std::size_t k = 0; k < languages; ++k)
      b.sentences[k].push_back(random_unit(dim, rng));
  }
  b.negs.resize(kDirectionCount);
  for (auto& d : b.negs)
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < negatives; ++j) {
        std::uint32_t r;
        do r = std::uint32_t(rng.uniform_index(n));
        while (r == i);
        d.push_back(r);
      }
  return b;
}

// Image-sentence hinge terms in both directions, every language.
inline double multimodal(const RandomBatch& b) {
  double total = 0;
  for (std::size_t k = 0; k < b.languages; ++k)
    for (std::size_t i = 0; i < b.n; ++i) {
      const Vec& d = b.images[i];
      const Vec& v = b.sentences[k][i];
      for (std::size_t j = 0; j < b.negatives; ++j) {
        const Vec& vr = b.sentences[k][b.neg(Direction::kImageToSentence, i, j)];
        total += hinge(b.margin - dot(d, v) + dot(d, vr));
      }
      for (std::size_t j = 0; j < b.negatives; ++j) {
        const Vec& dr = b.images[b.neg(Direction::kSentenceToImage, i, j)];
        total += hinge(b.margin - dot(v, d) + dot(v, dr));
      }
    }
  return total;
}

// Sentence-sentence hinge terms over unordered language pairs, both
// directions per pair.
inline double multilingual(const RandomBatch& b) {
  double total = 0;
  for (std::size_t k = 0; k < b.languages; ++k)
    for (std::size_t l = 0; l < b.languages; ++l) {
      if (l <= k) continue;
      for (std::size_t i = 0; i < b.n; ++i) {
        const Vec& vk = b.sentences[k][i];
        const Vec& vl = b.sentences[l][i];
        for (std::size_t j = 0; j < b.negatives; ++j) {
          const std::size_t r = b.neg(Direction::kSentenceToSentence, i, j);
          total += hinge(b.margin - dot(vk, vl) + dot(vk, b.sentences[l][r]));
          total += hinge(b.margin - dot(vl, vk) + dot(vl, b.sentences[k][r]));
        }
      }
    }
  return total;
}

// Ranks by fully sorting each row; ties resolve in the query's favour.
inline RetrievalReport sort_ranks(const ScoreMatrix& m) {
  RetrievalReport out;
  const std::size_t q = m.scores.rows();
  for (std::size_t i = 0; i < q; ++i) {
    std::vector<double> row(m.scores.row(i).begin(), m.scores.row(i).end());
    double best = -INFINITY;
    for (std::size_t g : m.gold[i]) best = std::max(best, row[g]);
    std::sort(row.begin(), row.end(), std::greater<double>());
    const auto pos = std::find(row.begin(), row.end(), best) - row.begin();
    out.ranks.push_back(std::size_t(pos) + 1);
  }
  auto recall = [&](std::size_t k) {
    std::size_t hit = 0;
    for (auto r : out.ranks) hit += r <= k;
    return double(hit) / double(q);
  };
  out.r1 = recall(1);
  out.r5 = recall(5);
  out.r10 = recall(10);
  std::vector<std::size_t> sorted = out.ranks;
  std::sort(sorted.begin(), sorted.end());
  out.median_rank = q % 2 ? double(sorted[q / 2])
                          : (double(sorted[q / 2 - 1]) + double(sorted[q / 2])) / 2;
  return out;
}

inline double pearson_direct(const std::vector<double>& x,
                             const std::vector<double>& y) {
  long double mx = 0, my = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= x.size();
  my /= y.size();
  long double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  return double(sxy / std::sqrt(sxx * syy));
}

}  // namespace mlmme::oracle

#endif  // MLMME_TESTS_ORACLES_H_
