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

#ifndef MLMME_DATAIO_H_
#define MLMME_DATAIO_H_

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "mlmme/encoder.h"
#include "mlmme/numerics.h"

namespace mlmme {

// Precomputed image features, one row per image.
struct ImageFeatureStore {
  Matrix<float> features;
  std::vector<std::string> ids;

  std::size_t image_count() const { return features.rows(); }
  std::size_t feature_dim() const { return features.cols(); }
  std::span<const float> row(std::size_t i) const { return features.row(i); }

  // Rejects non-finite values and all-zero rows; the message names the row.
  void validate() const;
};

// Sentences of one language, aligned to images. Line i belongs to image
// i / captions_per_image.
struct Corpus {
  std::string language;
  std::vector<std::vector<std::string>> sentences;
  std::vector<std::size_t> image_of;
  std::size_t captions_per_image = 1;

  std::size_t image_count() const;
};

// One tuple: a sentence per language (model language order) plus the row
// of its image in the feature store.
struct TrainingInstance {
  std::vector<TokenSequence> sentences;
  std::size_t image = 0;
};

struct Dataset {
  std::vector<std::string> languages;
  ImageFeatureStore images;
  std::vector<TrainingInstance> instances;

  std::size_t size() const { return instances.size(); }
  std::span<const float> image_of(std::size_t instance) const {
    return images.row(instances.at(instance).image);
  }
};

// Empty lines are skipped with a warning on stderr but keep their slot in
// the image alignment.
Corpus load_corpus(const std::filesystem::path& path,
                   std::size_t captions_per_image, std::string language);
Corpus corpus_from_lines(const std::vector<std::string>& lines,
                         std::size_t captions_per_image, std::string language);
void save_corpus(const std::filesystem::path& path, const Corpus& corpus);

// Binary layout (little-endian): "MMFT", u32 version, u32 rows, u32 cols,
// then rows*cols float32 row-major. Files without the magic are parsed as
// text, one row per line of whitespace-separated reals.
ImageFeatureStore load_features(const std::filesystem::path& path);
void save_features(const std::filesystem::path& path,
                   const ImageFeatureStore& store);

// Pairs the i-th sentence of every corpus into instance i. All corpora must
// have equal length and identical image alignment.
Dataset make_dataset(const std::vector<Corpus>& corpora,
                     ImageFeatureStore images,
                     const std::vector<Vocabulary>& vocabularies);

struct SyntheticSpec {
  std::size_t classes = 10;
  std::size_t images_per_class = 20;         // validation and test
  std::size_t train_images_per_class = 200;  // attributes may repeat
  std::size_t captions_per_image = 5;
  std::size_t vocabulary_size = 400;  // per language
  std::size_t feature_dim = 256;
  double noise = 1.0;
  std::uint64_t seed = 11;
  std::vector<std::string> languages = {"en", "de"};

  void validate() const;
};

struct SyntheticSplit {
  std::vector<Corpus> corpora;  // one per language
  ImageFeatureStore images;
  std::vector<std::size_t> image_class;
};

struct SyntheticData {
  SyntheticSpec spec;
  Matrix<float> prototypes;  // classes x feature_dim
  SyntheticSplit train, validation, test;
};

// Clustered image/caption data. Each class has a Gaussian prototype and
// its own token pool per language. An image adds shared attribute
// directions, scaled by `noise`, to its prototype; each language captions
// a different subset of the visual attributes plus two non-visual ones,
// and odd-indexed languages reverse the word order.
SyntheticData generate_synthetic(const SyntheticSpec& spec);

// Index of the nearest prototype row to `feature`.
std::size_t nearest_prototype(const Matrix<float>& prototypes,
                              std::span<const float> feature);

}  // namespace mlmme

#endif  // MLMME_DATAIO_H_
