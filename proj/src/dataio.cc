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

#include "mlmme/dataio.h"

#include <algorithm>
#include <cstring>
#include <fstream>
#include <iostream>
#include <numeric>
#include <set>
#include <sstream>

#include "binary_io.h"

namespace mlmme {

namespace {

constexpr char kFeatureMagic[4] = {'M', 'M', 'F', 'T'};
constexpr std::uint32_t kFeatureVersion = 1;

// Synthetic caption structure: each language describes its own visual
// attribute slots plus slots shared by all languages that are absent from
// the image features.
constexpr std::size_t kVisualSlotsPerLanguage = 3;
constexpr std::size_t kVisualValues = 4;
constexpr std::size_t kSharedSlots = 2;
constexpr std::size_t kSharedValues = 5;
constexpr double kAttributeScale = 0.5;

std::size_t concepts_per_class() {
  return 1 + kVisualSlotsPerLanguage * kVisualValues +
         kSharedSlots * kSharedValues;
}

}  // namespace

void ImageFeatureStore::validate() const {
  for (std::size_t r = 0; r < features.rows(); ++r) {
    auto row = features.row(r);
    bool nonzero = false;
    for (std::size_t c = 0; c < row.size(); ++c) {
      if (!std::isfinite(row[c]))
        throw InputError("image features: non-finite value in row " +
                         std::to_string(r) + ", column " + std::to_string(c));
      nonzero |= row[c] != 0.0f;
    }
    if (!nonzero)
      throw InputError("image features: row " + std::to_string(r) +
                       " is all zeros");
  }
  if (!ids.empty() && ids.size() != features.rows())
    throw InputError("image features: identifier count does not match rows");
}

std::size_t Corpus::image_count() const {
  return image_of.empty() ? 0 : image_of.back() + 1;
}

Corpus corpus_from_lines(const std::vector<std::string>& lines,
                         std::size_t captions_per_image, std::string language) {
  if (captions_per_image == 0)
    throw InvalidArgument("captions_per_image must be positive");
  if (lines.size() % captions_per_image != 0)
    throw InputError("corpus '" + language + "': " +
                     std::to_string(lines.size()) +
                     " lines is not a multiple of captions_per_image=" +
                     std::to_string(captions_per_image));
  Corpus c;
  c.language = std::move(language);
  c.captions_per_image = captions_per_image;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    auto tokens = tokenize(lines[i]);
    if (tokens.empty()) {
      std::cerr << "warning: corpus '" << c.language << "' line " << (i + 1)
                << " is empty; skipped\n";
      continue;
    }
    c.sentences.push_back(std::move(tokens));
    c.image_of.push_back(i / captions_per_image);
  }
  return c;
}

Corpus load_corpus(const std::filesystem::path& path,
                   std::size_t captions_per_image, std::string language) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open corpus " + path.string());
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(std::move(line));
  }
  return corpus_from_lines(lines, captions_per_image, std::move(language));
}

void save_corpus(const std::filesystem::path& path, const Corpus& corpus) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write corpus " + path.string());
  for (const auto& s : corpus.sentences) {
    for (std::size_t i = 0; i < s.size(); ++i) out << (i ? " " : "") << s[i];
    out << '\n';
  }
}

ImageFeatureStore load_features(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open features " + path.string());
  char magic[4] = {};
  in.read(magic, 4);
  ImageFeatureStore store;
  if (in.gcount() == 4 && std::memcmp(magic, kFeatureMagic, 4) == 0) {
    const auto version = binary::read<std::uint32_t>(in);
    if (version != kFeatureVersion)
      throw InputError("features: unsupported version " +
                       std::to_string(version));
    const auto rows = binary::read<std::uint32_t>(in);
    const auto cols = binary::read<std::uint32_t>(in);
    store.features = Matrix<float>(rows, cols);
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t c = 0; c < cols; ++c) {
        try {
          store.features(r, c) = binary::read<float>(in);
        } catch (const InputError&) {
          throw InputError("features: header declares " +
                           shape_string(rows, cols) + " but the body ends in row " +
                           std::to_string(r));
        }
      }
    }
    if (in.peek() != std::char_traits<char>::eof())
      throw InputError("features: body is longer than the declared " +
                       shape_string(rows, cols));
  } else {
    in.clear();
    in.seekg(0);
    std::vector<std::vector<float>> rows;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      std::istringstream ls(line);
      std::vector<float> row;
      std::string tok;
      while (ls >> tok) {
        try {
          std::size_t used = 0;
          row.push_back(std::stof(tok, &used));
          if (used != tok.size()) throw std::invalid_argument(tok);
        } catch (const std::out_of_range&) {
          row.push_back(std::numeric_limits<float>::infinity());
        } catch (const std::exception&) {
          throw InputError("features: line " + std::to_string(lineno) +
                           ": not a number '" + tok + "'");
        }
      }
      if (row.empty()) continue;
      if (!rows.empty() && row.size() != rows.front().size())
        throw InputError("features: line " + std::to_string(lineno) + " has " +
                         std::to_string(row.size()) + " values, expected " +
                         std::to_string(rows.front().size()));
      rows.push_back(std::move(row));
    }
    if (!rows.empty()) {
      store.features = Matrix<float>(rows.size(), rows.front().size());
      for (std::size_t r = 0; r < rows.size(); ++r)
        std::copy(rows[r].begin(), rows[r].end(), store.features.row(r).begin());
    }
  }
  for (std::size_t r = 0; r < store.features.rows(); ++r)
    store.ids.push_back(std::to_string(r));
  store.validate();
  return store;
}

void save_features(const std::filesystem::path& path,
                   const ImageFeatureStore& store) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write features " + path.string());
  out.write(kFeatureMagic, 4);
  binary::write<std::uint32_t>(out, kFeatureVersion);
  binary::write<std::uint32_t>(out, std::uint32_t(store.features.rows()));
  binary::write<std::uint32_t>(out, std::uint32_t(store.features.cols()));
  for (float v : store.features.values()) binary::write<float>(out, v);
  if (!out) throw InputError("failed writing features " + path.string());
}

Dataset make_dataset(const std::vector<Corpus>& corpora,
                     ImageFeatureStore images,
                     const std::vector<Vocabulary>& vocabularies) {
  if (corpora.empty()) throw InvalidArgument("make_dataset: no corpora");
  if (corpora.size() != vocabularies.size())
    throw InvalidArgument("make_dataset: one vocabulary per corpus required");
  const Corpus& first = corpora.front();
  Dataset d;
  for (std::size_t k = 0; k < corpora.size(); ++k) {
    const Corpus& c = corpora[k];
    if (c.language != vocabularies[k].language())
      throw InvalidArgument("make_dataset: corpus '" + c.language +
                            "' paired with vocabulary '" +
                            vocabularies[k].language() + "'");
    if (c.sentences.size() != first.sentences.size() ||
        c.image_of != first.image_of)
      throw InputError("make_dataset: corpora '" + first.language + "' and '" +
                       c.language + "' are not aligned");
    d.languages.push_back(c.language);
  }
  for (std::size_t img : first.image_of)
    if (img >= images.image_count())
      throw InputError("make_dataset: sentence aligned to image " +
                       std::to_string(img) + " but only " +
                       std::to_string(images.image_count()) +
                       " feature rows exist");
  d.instances.resize(first.sentences.size());
  for (std::size_t i = 0; i < d.instances.size(); ++i) {
    d.instances[i].image = first.image_of[i];
    for (std::size_t k = 0; k < corpora.size(); ++k)
      d.instances[i].sentences.push_back(
          vocabularies[k].encode(corpora[k].sentences[i]));
  }
  d.images = std::move(images);
  return d;
}

void SyntheticSpec::validate() const {
  if (classes < 2) throw InvalidArgument("synthetic: need at least 2 classes");
  if (images_per_class < 1 || train_images_per_class < 1 ||
      captions_per_image < 1 || feature_dim < 1)
    throw InvalidArgument("synthetic: counts must be positive");
  if (!(noise >= 0)) throw InvalidArgument("synthetic: noise must be >= 0");
  if (languages.empty())
    throw InvalidArgument("synthetic: at least one language required");
  if (vocabulary_size < classes * concepts_per_class())
    throw InvalidArgument("synthetic: vocabulary_size must be at least " +
                          std::to_string(classes * concepts_per_class()));
  std::size_t combos = 1;
  for (std::size_t i = 0; i < kSharedSlots; ++i) combos *= kSharedValues;
  if (images_per_class > combos)
    throw InvalidArgument("synthetic: at most " + std::to_string(combos) +
                          " images per class are distinguishable");
}

namespace {

struct SyntheticWorld {
  std::size_t languages;
  // [class][language] -> token pools per concept (synonyms).
  std::vector<std::vector<std::vector<std::vector<std::string>>>> pools;
  // [visual slot][value] -> feature-space direction, shared by all classes.
  std::vector<std::vector<std::vector<float>>> attributes;
};

// Concept ids within a class: 0 = noun, then visual slots of language k,
// then shared slots.
std::size_t visual_concept(std::size_t slot, std::size_t value) {
  return 1 + slot * kVisualValues + value;
}
std::size_t shared_concept(std::size_t slot, std::size_t value) {
  return 1 + kVisualSlotsPerLanguage * kVisualValues + slot * kSharedValues +
         value;
}

SyntheticSplit generate_split(const SyntheticSpec& spec,
                              const SyntheticWorld& world,
                              const Matrix<float>& prototypes,
                              std::size_t split, std::size_t per_class,
                              bool unique_attributes, Rng& rng) {
  const std::size_t langs = spec.languages.size();
  const std::size_t visual_slots = kVisualSlotsPerLanguage * langs;
  const std::size_t images = spec.classes * per_class;
  SyntheticSplit out;
  out.images.features = Matrix<float>(images, spec.feature_dim);
  out.corpora.resize(langs);
  for (std::size_t k = 0; k < langs; ++k) {
    out.corpora[k].language = spec.languages[k];
    out.corpora[k].captions_per_image = spec.captions_per_image;
  }

  std::size_t image = 0;
  for (std::size_t c = 0; c < spec.classes; ++c) {
    // In held-out splits every language's visual combination and the
    // shared combination are unique per class, so each image is
    // identifiable from text.
    std::vector<std::set<std::vector<std::size_t>>> seen(langs + 1);
    for (std::size_t j = 0; j < per_class; ++j, ++image) {
      std::vector<std::size_t> visual(visual_slots), shared(kSharedSlots);
      for (int attempt = 0;; ++attempt) {
        if (attempt > 100000)
          throw InvalidArgument("synthetic: cannot draw unique attributes");
        for (auto& v : visual) v = rng.uniform_index(kVisualValues);
        for (auto& v : shared) v = rng.uniform_index(kSharedValues);
        if (!unique_attributes) break;
        bool unique = !seen[langs].count(shared);
        for (std::size_t k = 0; k < langs && unique; ++k) {
          std::vector<std::size_t> own(
              visual.begin() + k * kVisualSlotsPerLanguage,
              visual.begin() + (k + 1) * kVisualSlotsPerLanguage);
          unique = !seen[k].count(own);
        }
        if (unique) break;
      }
      seen[langs].insert(shared);
      for (std::size_t k = 0; k < langs; ++k)
        seen[k].insert(std::vector<std::size_t>(
            visual.begin() + k * kVisualSlotsPerLanguage,
            visual.begin() + (k + 1) * kVisualSlotsPerLanguage));

      auto row = out.images.features.row(image);
      auto proto = prototypes.row(c);
      for (std::size_t f = 0; f < spec.feature_dim; ++f) {
        double deviation = 0;
        for (std::size_t s = 0; s < visual_slots; ++s)
          deviation += world.attributes[s][visual[s]][f];
        row[f] = float(proto[f] + spec.noise * deviation);
      }
      out.images.ids.push_back("s" + std::to_string(split) + "_" +
                               std::to_string(image));
      out.image_class.push_back(c);

      for (std::size_t k = 0; k < langs; ++k) {
        const auto& pool = world.pools[c][k];
        auto pick = [&](std::size_t concept_id) {
          const auto& syn = pool[concept_id];
          return syn[rng.uniform_index(syn.size())];
        };
        for (std::size_t cap = 0; cap < spec.captions_per_image; ++cap) {
          std::vector<std::string> words;
          std::vector<std::size_t> concepts;
          for (std::size_t s = 0; s < kVisualSlotsPerLanguage; ++s)
            concepts.push_back(
                visual_concept(s, visual[k * kVisualSlotsPerLanguage + s]));
          for (std::size_t s = 0; s < kSharedSlots; ++s)
            concepts.push_back(shared_concept(s, shared[s]));
          concepts.push_back(0);
          // Word order differs between neighbouring languages.
          if (k % 2 == 1) std::reverse(concepts.begin(), concepts.end());
          for (std::size_t cid : concepts) words.push_back(pick(cid));
          out.corpora[k].sentences.push_back(std::move(words));
          out.corpora[k].image_of.push_back(image);
        }
      }
    }
  }
  return out;
}

}  // namespace

SyntheticData generate_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  Rng rng(spec.seed);
  const std::size_t langs = spec.languages.size();
  const std::size_t concepts = concepts_per_class();
  const std::size_t per_class = spec.vocabulary_size / spec.classes;

  SyntheticData data;
  data.spec = spec;
  data.prototypes = gaussian_init<float>(spec.classes, spec.feature_dim, 1.0, rng);

  SyntheticWorld world;
  world.languages = langs;
  world.pools.resize(spec.classes);
  for (std::size_t k = 0; k < langs; ++k) {
    // Token names are a random permutation so ids carry no class signal.
    std::vector<std::size_t> names(spec.classes * per_class);
    std::iota(names.begin(), names.end(), 0);
    std::shuffle(names.begin(), names.end(), rng.engine());
    for (std::size_t c = 0; c < spec.classes; ++c) {
      std::vector<std::vector<std::string>> pool(concepts);
      for (std::size_t t = 0; t < per_class; ++t)
        pool[t % concepts].push_back(spec.languages[k] + "_" +
                                     std::to_string(names[c * per_class + t]));
      world.pools[c].push_back(std::move(pool));
    }
  }
  const std::size_t visual_slots = kVisualSlotsPerLanguage * langs;
  world.attributes.resize(visual_slots);
  for (std::size_t s = 0; s < visual_slots; ++s)
    for (std::size_t v = 0; v < kVisualValues; ++v) {
      Matrix<float> dir =
          gaussian_init<float>(1, spec.feature_dim, kAttributeScale, rng);
      world.attributes[s].emplace_back(dir.values().begin(),
                                       dir.values().end());
    }

  data.train = generate_split(spec, world, data.prototypes, 0,
                              spec.train_images_per_class, false, rng);
  data.validation = generate_split(spec, world, data.prototypes, 1,
                                   spec.images_per_class, true, rng);
  data.test = generate_split(spec, world, data.prototypes, 2,
                             spec.images_per_class, true, rng);
  return data;
}

std::size_t nearest_prototype(const Matrix<float>& prototypes,
                              std::span<const float> feature) {
  if (feature.size() != prototypes.cols())
    throw InvalidArgument("nearest_prototype: dimension mismatch");
  std::size_t best = 0;
  double best_dist = std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < prototypes.rows(); ++c) {
    double dist = 0;
    auto p = prototypes.row(c);
    for (std::size_t f = 0; f < feature.size(); ++f) {
      const double d = double(p[f]) - feature[f];
      dist += d * d;
    }
    if (dist < best_dist) {
      best_dist = dist;
      best = c;
    }
  }
  return best;
}

}  // namespace mlmme
