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

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>
#include <map>
#include <numeric>
#include <sstream>

namespace mlmme {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> read_lines(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open " + path.string());
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(std::move(line));
  }
  return lines;
}

double bleu_from_stats(const BleuStats& s, bool smooth) {
  if (s.hypothesis_length == 0 || s.matches[0] == 0) return 0;
  double log_sum = 0;
  for (std::size_t n = 0; n < 4; ++n) {
    double m = s.matches[n], t = s.totals[n];
    if (smooth && n > 0) {
      m += 1;
      t += 1;
    }
    if (m == 0 || t == 0) return 0;
    log_sum += std::log(m / t);
  }
  const double bp =
      std::exp(std::min(0.0, 1.0 - s.reference_length / s.hypothesis_length));
  return bp * std::exp(log_sum / 4.0);
}

}  // namespace

std::vector<NBestList> parse_nbest(std::istream& in) {
  std::vector<NBestList> lists;
  std::map<std::size_t, std::size_t> position;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    auto fail = [&](const std::string& why) {
      return InputError("n-best line " + std::to_string(lineno) + ": " + why);
    };
    if (trim(line).empty()) continue;
    std::vector<std::string> fields;
    std::size_t start = 0;
    while (true) {
      const auto sep = line.find("|||", start);
      fields.push_back(trim(std::string_view(line).substr(
          start, sep == std::string::npos ? std::string::npos : sep - start)));
      if (sep == std::string::npos) break;
      start = sep + 3;
    }
    if (fields.size() != 3)
      throw fail("expected 'id ||| hypothesis ||| log_likelihood'");
    NBestEntry e;
    const std::string& id = fields[0];
    if (id.empty() || !std::all_of(id.begin(), id.end(), ::isdigit))
      throw fail("segment id '" + id + "' is not a non-negative integer");
    try {
      e.segment_id = std::stoull(id);
      std::size_t used = 0;
      e.log_likelihood = std::stod(fields[2], &used);
      if (used != fields[2].size()) throw std::invalid_argument(fields[2]);
    } catch (const std::exception&) {
      throw fail("cannot parse numbers in '" + line + "'");
    }
    if (!std::isfinite(e.log_likelihood))
      throw fail("log-likelihood is not finite");
    e.hypothesis = tokenize(fields[1]);
    auto [it, inserted] = position.emplace(e.segment_id, lists.size());
    if (inserted) {
      lists.emplace_back();
      lists.back().segment_id = e.segment_id;
    }
    lists[it->second].entries.push_back(std::move(e));
  }
  return lists;
}

std::vector<NBestList> load_nbest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open n-best file " + path.string());
  return parse_nbest(in);
}

std::vector<Tokens> load_sentences(const std::filesystem::path& path) {
  std::vector<Tokens> out;
  for (const auto& l : read_lines(path)) out.push_back(tokenize(l));
  return out;
}

std::vector<std::size_t> load_image_alignment(
    const std::filesystem::path& path) {
  std::vector<std::size_t> out;
  std::size_t lineno = 0;
  for (const auto& l : read_lines(path)) {
    ++lineno;
    const std::string t = trim(l);
    if (t.empty() || !std::all_of(t.begin(), t.end(), ::isdigit))
      throw InputError("image alignment line " + std::to_string(lineno) +
                       ": expected a row index");
    out.push_back(std::stoull(t));
  }
  return out;
}

void attach_context(std::vector<NBestList>& lists,
                    const std::vector<Tokens>& sources,
                    const ImageFeatureStore* images,
                    const std::vector<std::size_t>* alignment) {
  for (auto& list : lists) {
    const std::size_t id = list.segment_id;
    if (id >= sources.size())
      throw InputError("no source sentence for segment " + std::to_string(id));
    list.source = sources[id];
    if (images) {
      if (!alignment || id >= alignment->size())
        throw InputError("no image alignment for segment " +
                         std::to_string(id));
      const std::size_t row = (*alignment)[id];
      if (row >= images->image_count())
        throw InputError("segment " + std::to_string(id) +
                         " aligned to missing image row " +
                         std::to_string(row));
      auto r = images->row(row);
      list.image = std::vector<float>(r.begin(), r.end());
    }
  }
}

std::vector<std::string> feature_names(bool use_image) {
  std::vector<std::string> names = {"log_likelihood", "s_s"};
  if (use_image) names.push_back("s_i");
  return names;
}

template <typename T>
void extract_features(NBestList& list, const MlmmeModel<T>& model,
                      const FeatureConfig& config) {
  const std::size_t src = model.language_index(config.source_language);
  const std::size_t tgt = model.language_index(config.target_language);
  if (list.source.empty())
    throw InvalidArgument("segment " + std::to_string(list.segment_id) +
                          ": empty source sentence");
  if (config.use_image && !list.image)
    throw InvalidArgument("segment " + std::to_string(list.segment_id) +
                          ": image feature required but missing");
  Rng unused(0);
  auto source = model.encode_sentence(
      src, model.vocabulary(src).encode(list.source), false, unused);
  std::vector<T> image;
  if (config.use_image) image = model.embed_image(*list.image, false, unused);
  for (std::size_t i = 0; i < list.entries.size(); ++i) {
    NBestEntry& e = list.entries[i];
    if (e.hypothesis.empty())
      throw InvalidArgument("feature extraction: segment " +
                            std::to_string(list.segment_id) + " entry " +
                            std::to_string(i) + " has an empty hypothesis");
    auto hyp = model.encode_sentence(
        tgt, model.vocabulary(tgt).encode(e.hypothesis), false, unused);
    e.features = {e.log_likelihood,
                  double(similarity(std::span<const T>(source),
                                    std::span<const T>(hyp)))};
    if (config.use_image)
      e.features.push_back(double(
          similarity(std::span<const T>(image), std::span<const T>(hyp))));
  }
}

template <typename T>
void extract_features(std::vector<NBestList>& lists,
                      const MlmmeModel<T>& model, const FeatureConfig& config) {
  for (auto& l : lists) extract_features(l, model, config);
}

BleuStats& BleuStats::operator+=(const BleuStats& o) {
  for (std::size_t n = 0; n < 4; ++n) {
    matches[n] += o.matches[n];
    totals[n] += o.totals[n];
  }
  hypothesis_length += o.hypothesis_length;
  reference_length += o.reference_length;
  return *this;
}

BleuStats BleuStats::scaled(double f) const {
  BleuStats s = *this;
  for (std::size_t n = 0; n < 4; ++n) {
    s.matches[n] *= f;
    s.totals[n] *= f;
  }
  s.hypothesis_length *= f;
  s.reference_length *= f;
  return s;
}

BleuStats bleu_stats(const Tokens& hyp, const Tokens& ref) {
  BleuStats s;
  s.hypothesis_length = double(hyp.size());
  s.reference_length = double(ref.size());
  for (std::size_t n = 1; n <= 4; ++n) {
    std::map<std::vector<std::string>, std::size_t> ref_counts, hyp_counts;
    for (std::size_t i = 0; i + n <= ref.size(); ++i)
      ++ref_counts[Tokens(ref.begin() + i, ref.begin() + i + n)];
    for (std::size_t i = 0; i + n <= hyp.size(); ++i)
      ++hyp_counts[Tokens(hyp.begin() + i, hyp.begin() + i + n)];
    double matched = 0;
    for (const auto& [gram, count] : hyp_counts) {
      auto it = ref_counts.find(gram);
      if (it != ref_counts.end()) matched += double(std::min(count, it->second));
    }
    s.matches[n - 1] = matched;
    s.totals[n - 1] = hyp.size() >= n ? double(hyp.size() - n + 1) : 0.0;
  }
  return s;
}

double sentence_bleu(const Tokens& hypothesis, const Tokens& reference) {
  if (reference.empty())
    throw InvalidArgument("sentence_bleu: empty reference");
  if (hypothesis.empty()) return 0;
  return bleu_from_stats(bleu_stats(hypothesis, reference), true);
}

double corpus_bleu(const std::vector<Tokens>& hypotheses,
                   const std::vector<Tokens>& references) {
  if (hypotheses.size() != references.size())
    throw InvalidArgument("corpus_bleu: " + std::to_string(hypotheses.size()) +
                          " hypotheses vs " +
                          std::to_string(references.size()) + " references");
  BleuStats total;
  for (std::size_t i = 0; i < hypotheses.size(); ++i) {
    if (references[i].empty())
      throw InvalidArgument("corpus_bleu: empty reference for segment " +
                            std::to_string(i));
    total += bleu_stats(hypotheses[i], references[i]);
  }
  return bleu_from_stats(total, false);
}

WeightVector WeightVector::baseline(std::vector<std::string> names) {
  WeightVector w;
  w.values.assign(names.size(), 0.0);
  if (!w.values.empty()) w.values[0] = 1.0;
  w.names = std::move(names);
  return w;
}

WeightVector WeightVector::zeros(std::vector<std::string> names) {
  WeightVector w;
  w.values.assign(names.size(), 0.0);
  w.names = std::move(names);
  return w;
}

double WeightVector::score(const std::vector<double>& features) const {
  if (features.size() != values.size())
    throw InvalidArgument("weights have " + std::to_string(values.size()) +
                          " entries but features have " +
                          std::to_string(features.size()));
  double s = 0;
  for (std::size_t i = 0; i < values.size(); ++i) s += values[i] * features[i];
  return s;
}

void WeightVector::save(std::ostream& out) const {
  std::ostringstream buf;
  buf.precision(17);
  for (std::size_t i = 0; i < values.size(); ++i)
    buf << names[i] << '\t' << values[i] << '\n';
  out << buf.str();
}

WeightVector WeightVector::load(std::istream& in) {
  WeightVector w;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos)
      throw InputError("weights line " + std::to_string(lineno) +
                       ": expected 'name<TAB>value'");
    w.names.push_back(line.substr(0, tab));
    try {
      w.values.push_back(std::stod(line.substr(tab + 1)));
    } catch (const std::exception&) {
      throw InputError("weights line " + std::to_string(lineno) +
                       ": bad value");
    }
  }
  return w;
}

void MiraConfig::validate() const {
  if (!(c > 0)) throw InvalidArgument("MIRA: C must be positive");
  if (epochs < 1) throw InvalidArgument("MIRA: epochs must be at least 1");
  if (!(bleu_decay > 0 && bleu_decay <= 1))
    throw InvalidArgument("MIRA: bleu_decay must lie in (0, 1]");
}

WeightVector mira_train(const std::vector<NBestList>& dev,
                        const std::vector<Tokens>& references,
                        const MiraConfig& config, const WeightVector& initial,
                        std::vector<MiraStep>* trace) {
  config.validate();
  const std::size_t dim = initial.values.size();
  if (dim == 0) throw InvalidArgument("MIRA: empty weight vector");
  for (const auto& list : dev) {
    if (list.segment_id >= references.size() ||
        references[list.segment_id].empty())
      throw InvalidArgument("MIRA: no reference for segment " +
                            std::to_string(list.segment_id));
    for (const auto& e : list.entries)
      if (e.features.size() != dim)
        throw InvalidArgument("MIRA: segment " +
                              std::to_string(list.segment_id) +
                              " has unpopulated or mismatched features");
  }

  bool varied = false;
  const std::vector<double>* first = nullptr;
  for (const auto& list : dev)
    for (const auto& e : list.entries) {
      if (!first) first = &e.features;
      else if (e.features != *first) varied = true;
    }
  if (first && !varied)
    std::cerr << "warning: MIRA: all hypotheses share identical features; "
                 "training is degenerate\n";

  // Per-entry sentence statistics are fixed; cache them.
  std::vector<std::vector<BleuStats>> stats(dev.size());
  std::vector<std::vector<double>> sentence_scores(dev.size());
  for (std::size_t s = 0; s < dev.size(); ++s)
    for (const auto& e : dev[s].entries) {
      const Tokens& ref = references[dev[s].segment_id];
      stats[s].push_back(bleu_stats(e.hypothesis, ref));
      sentence_scores[s].push_back(
          e.hypothesis.empty() ? 0.0 : bleu_from_stats(stats[s].back(), true));
    }

  WeightVector w = initial;
  std::vector<double> mean(dim, 0.0);
  BleuStats background;
  std::vector<double> delta(dim);
  std::vector<double> metric;

  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    std::vector<std::size_t> order(dev.size());
    std::iota(order.begin(), order.end(), 0);
    Rng rng(Rng::derive(config.seed, {epoch}));
    std::shuffle(order.begin(), order.end(), rng.engine());

    for (std::size_t s : order) {
      const auto& entries = dev[s].entries;
      if (entries.size() < 2) continue;
      if (config.metric == MiraMetric::kSentenceBleu) {
        metric = sentence_scores[s];
      } else {
        metric.clear();
        for (const auto& st : stats[s]) {
          BleuStats b = background;
          b += st;
          metric.push_back(bleu_from_stats(b, false));
        }
      }
      std::size_t hope = 0, fear = 0, best = 0;
      double hope_v = -INFINITY, fear_v = -INFINITY, best_v = -INFINITY;
      for (std::size_t i = 0; i < entries.size(); ++i) {
        const double sc = w.score(entries[i].features);
        if (sc + metric[i] > hope_v) hope_v = sc + metric[i], hope = i;
        if (sc - metric[i] > fear_v) fear_v = sc - metric[i], fear = i;
        if (sc > best_v) best_v = sc, best = i;
      }
      if (trace)
        trace->push_back({epoch, dev[s].segment_id, hope, fear, metric[hope],
                          metric[fear]});
      double norm2 = 0, margin = 0;
      for (std::size_t d = 0; d < dim; ++d) {
        delta[d] = entries[hope].features[d] - entries[fear].features[d];
        norm2 += delta[d] * delta[d];
        margin += w.values[d] * delta[d];
      }
      const double loss = (metric[hope] - metric[fear]) - margin;
      if (loss > 0 && norm2 > 0) {
        const double eta = std::min(config.c, loss / norm2);
        for (std::size_t d = 0; d < dim; ++d) w.values[d] += eta * delta[d];
      }
      if (config.metric == MiraMetric::kBackgroundBleu) {
        background += stats[s][best];
        background = background.scaled(config.bleu_decay);
      }
    }
    // Running mean, exact when the weights stop changing.
    for (std::size_t d = 0; d < dim; ++d)
      mean[d] += (w.values[d] - mean[d]) / double(epoch);
  }
  w.values = mean;
  return w;
}

std::vector<std::size_t> rerank_apply(const std::vector<NBestList>& lists,
                                      const WeightVector& weights) {
  std::vector<std::size_t> out;
  out.reserve(lists.size());
  for (const auto& list : lists) {
    if (list.entries.empty())
      throw InvalidArgument("rerank_apply: empty n-best list");
    std::size_t best = 0;
    double best_score = weights.score(list.entries[0].features);
    for (std::size_t i = 1; i < list.entries.size(); ++i) {
      const double s = weights.score(list.entries[i].features);
      if (s > best_score) best_score = s, best = i;
    }
    out.push_back(best);
  }
  return out;
}

template void extract_features<float>(NBestList&, const MlmmeModel<float>&,
                                      const FeatureConfig&);
template void extract_features<double>(NBestList&, const MlmmeModel<double>&,
                                       const FeatureConfig&);
template void extract_features<float>(std::vector<NBestList>&,
                                      const MlmmeModel<float>&,
                                      const FeatureConfig&);
template void extract_features<double>(std::vector<NBestList>&,
                                       const MlmmeModel<double>&,
                                       const FeatureConfig&);

}  // namespace mlmme
