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

#include "mlmme/cli.h"

#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <memory>
#include <ostream>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "mlmme/dataio.h"
#include "mlmme/errors.h"
#include "mlmme/evaluation.h"
#include "mlmme/model.h"
#include "mlmme/rerank.h"
#include "mlmme/training.h"

namespace mlmme::cli {

namespace fs = std::filesystem;

namespace {

constexpr std::uint64_t kInitStream = 0x696e6974;  // "init"

// Shortest decimal text that reads back to the same double.
std::string fmt(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, end);
}

std::uint64_t fnv1a(std::string_view text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

void require_file(const fs::path& path, std::string_view what) {
  if (!fs::exists(path))
    throw InputError(std::string(what) + " not found: " + path.string());
}

fs::path corpus_path(const std::string& prefix, const std::string& lang) {
  return prefix + "." + lang;
}

fs::path features_path(const std::string& prefix) { return prefix + ".feat"; }

void require_split(const std::string& prefix,
                   const std::vector<std::string>& languages) {
  for (const auto& l : languages) require_file(corpus_path(prefix, l), "corpus");
  require_file(features_path(prefix), "image features");
}

std::vector<Corpus> load_corpora(const std::string& prefix,
                                 const std::vector<std::string>& languages,
                                 std::size_t captions_per_image) {
  std::vector<Corpus> out;
  for (const auto& l : languages)
    out.push_back(load_corpus(corpus_path(prefix, l), captions_per_image, l));
  return out;
}

ImageFeatureStore load_images(const std::string& prefix) {
  ImageFeatureStore images = load_features(features_path(prefix));
  images.validate();
  return images;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write " + path.string());
  out << text;
  if (!out) throw InputError("failed writing " + path.string());
}

// Runs `f` with the checkpoint loaded at its stored precision.
template <typename F>
void with_model(const fs::path& path, F&& f) {
  require_file(path, "checkpoint");
  if (checkpoint_scalar_width(path) == 8)
    f(MlmmeModel<double>::load(path));
  else
    f(MlmmeModel<float>::load(path));
}

struct TrainOptions {
  std::string train_prefix;
  std::string valid_prefix;
  std::string out_dir;
  std::vector<std::string> languages;
  std::size_t captions_per_image = 5;
  std::size_t min_count = 1;
  ModelDims dims;
  double dropout = 0.5;
  double init_stddev = 0.01;
  std::string precision = "float";
  std::string selection = "sum_of_recalls";
  TrainingConfig training;
};

struct EvalRankOptions {
  std::string model;
  std::string data;
  std::vector<std::string> languages;
  std::size_t captions_per_image = 5;
  bool cross_lingual = false;
};

struct EvalStsOptions {
  std::string model;
  std::string pairs;
  std::string language;
  std::string predictions;
};

struct RerankOptions {
  std::string model;
  std::string nbest;
  std::string source;
  std::string references;
  std::string images;
  std::string image_alignment;
  std::string source_language;
  std::string target_language;
  std::string weights;
  std::string out;
  std::string metric = "sentence";
  MiraConfig mira;
};

struct GradcheckOptions {
  std::vector<double> betas;
  bool inject_bug = false;
};

struct SyntheticOptions {
  std::string out_dir;
  SyntheticSpec spec;
};

struct Runtime {
  std::uint64_t seed = 1234;
  std::size_t threads = 1;
  std::ostream* out = nullptr;
  std::ostream* err = nullptr;
};

template <typename T>
void train_with(const TrainOptions& o, const Runtime& rt,
                const std::string& config_text) {
  const std::size_t k = o.languages.size();
  require_split(o.train_prefix, o.languages);
  if (!o.valid_prefix.empty()) require_split(o.valid_prefix, o.languages);

  std::vector<Corpus> train_corpora =
      load_corpora(o.train_prefix, o.languages, o.captions_per_image);
  std::vector<Vocabulary> vocabs;
  for (std::size_t i = 0; i < k; ++i)
    vocabs.push_back(Vocabulary::build(o.languages[i],
                                       train_corpora[i].sentences,
                                       o.min_count));
  Dataset train_set =
      make_dataset(train_corpora, load_images(o.train_prefix), vocabs);
  Dataset valid_set;
  if (!o.valid_prefix.empty())
    valid_set = make_dataset(
        load_corpora(o.valid_prefix, o.languages, o.captions_per_image),
        load_images(o.valid_prefix), vocabs);

  ModelDims dims = o.dims;
  dims.image_features = train_set.images.feature_dim();
  Rng rng(Rng::derive(rt.seed, {kInitStream}));
  MlmmeModel<T> model = MlmmeModel<T>::create(
      vocabs, dims, o.training.loss, o.dropout, rng, o.init_stddev);

  TrainingConfig config = o.training;
  config.seed = rt.seed;
  config.threads = rt.threads;
  config.selection = parse_selection_metric(o.selection);
  std::ostream& err = *rt.err;
  config.on_epoch = [&err](const EpochRecord& r) {
    err << "epoch " << r.epoch << " loss " << fmt(r.mean_loss) << " score "
        << fmt(r.score) << '\n';
  };
  TrainingResult<T> result = train(std::move(model), train_set, valid_set,
                                   config);

  const fs::path dir(o.out_dir);
  fs::create_directories(dir);
  result.model.save(dir / "model.ckpt");
  std::ostringstream log, timing;
  result.history.write_log(log);
  result.history.write_timing(timing);
  write_text(dir / "history.jsonl", log.str());
  write_text(dir / "timing.jsonl", timing.str());
  for (std::size_t i = 0; i < k; ++i) {
    std::ostringstream v;
    vocabs[i].save(v);
    write_text(dir / ("vocab." + o.languages[i]), v.str());
  }
  write_text(dir / "config.toml", config_text);

  nlohmann::ordered_json manifest;
  std::ostringstream hash;
  hash << std::hex << std::setw(16) << std::setfill('0') << fnv1a(config_text);
  manifest["subcommand"] = "train";
  manifest["config_hash"] = "fnv1a64:" + hash.str();
  manifest["seed"] = rt.seed;
  manifest["precision"] = o.precision;
  manifest["best_epoch"] = result.history.best_epoch;
  manifest["epochs_run"] = result.history.epochs.size();
  manifest["files"] = {"model.ckpt", "history.jsonl", "timing.jsonl",
                       "config.toml"};
  write_text(dir / "manifest.json", manifest.dump(2) + "\n");

  *rt.out << "best_epoch\t" << result.history.best_epoch << '\n';
  *rt.out << "checkpoint\t" << (dir / "model.ckpt").string() << '\n';
}

void cmd_train(const TrainOptions& o, const Runtime& rt,
               const std::string& config_text) {
  if (o.languages.empty()) throw ConfigError("train: --languages is empty");
  if (o.languages.size() == 1 && o.training.loss.beta < 1)
    throw ConfigError(
        "train: a single language requires --beta 1; with K = 1 the model "
        "reduces to the visual-semantic embedding and has no "
        "sentence-sentence term");
  o.training.loss.validate();
  o.training.validate();
  parse_selection_metric(o.selection);
  if (o.valid_prefix.empty() && o.selection == "sum_of_recalls")
    throw ConfigError(
        "train: --selection sum_of_recalls needs --valid; use "
        "--selection loss to select on training loss");
  if (o.precision == "double")
    train_with<double>(o, rt, config_text);
  else
    train_with<float>(o, rt, config_text);
}

template <typename T>
std::vector<std::string> checked_languages(const MlmmeModel<T>& model,
                                           std::vector<std::string> langs) {
  if (langs.empty()) return model.languages();
  for (const auto& l : langs) {
    const auto& known = model.languages();
    if (std::find(known.begin(), known.end(), l) == known.end())
      throw ConfigError("checkpoint has no language '" + l + "'");
  }
  return langs;
}

void cmd_eval_rank(const EvalRankOptions& o, const Runtime& rt) {
  with_model(o.model, [&](const auto& model) {
    const std::vector<std::string> langs =
        checked_languages(model, o.languages);
    const std::vector<std::string>& all = model.languages();
    require_split(o.data, all);
    std::vector<Vocabulary> vocabs;
    for (std::size_t k = 0; k < all.size(); ++k)
      vocabs.push_back(model.vocabulary(k));
    Dataset data = make_dataset(
        load_corpora(o.data, all, o.captions_per_image), load_images(o.data),
        vocabs);
    if (data.images.feature_dim() != model.dims().image_features)
      throw ConfigError("image features have dimension " +
                        std::to_string(data.images.feature_dim()) +
                        " but the checkpoint expects " +
                        std::to_string(model.dims().image_features));
    std::ostream& out = *rt.out;
    auto print = [&](const std::string& dir, const std::string& lang,
                     const RetrievalReport& r) {
      out << dir << '\t' << lang << "\tr@1\t" << fmt(r.r1) << '\n'
          << dir << '\t' << lang << "\tr@5\t" << fmt(r.r5) << '\n'
          << dir << '\t' << lang << "\tr@10\t" << fmt(r.r10) << '\n'
          << dir << '\t' << lang << "\tmrank\t" << fmt(r.median_rank) << '\n';
    };
    for (auto d : {RankDirection::kSentenceToImage,
                   RankDirection::kImageToSentence})
      for (const auto& l : langs)
        print(direction_name(d), l, rank_cross_modal(model, data, d, l));
    if (o.cross_lingual)
      for (const auto& q : langs)
        for (const auto& c : langs)
          if (q != c)
            print("sentence_to_sentence", q + "->" + c,
                  rank_cross_lingual(model, data, q, c));
  });
}

void cmd_eval_sts(const EvalStsOptions& o, const Runtime& rt) {
  require_file(o.pairs, "pair file");
  std::vector<StsLine> lines = load_sts_pairs(o.pairs);
  if (lines.empty()) throw InputError("pair file is empty: " + o.pairs);
  with_model(o.model, [&](const auto& model) {
    const std::string lang =
        o.language.empty() ? model.languages().front() : o.language;
    checked_languages(model, {lang});
    const Vocabulary& vocab = model.vocabulary(model.language_index(lang));
    std::vector<double> predictions, golds;
    for (const auto& line : lines) {
      StsPair pair{vocab.encode(line.sentence_a), vocab.encode(line.sentence_b),
                   line.gold};
      predictions.push_back(sts_score(model, pair, lang));
      golds.push_back(line.gold);
    }
    if (!o.predictions.empty()) {
      std::ostringstream buf;
      for (std::size_t i = 0; i < predictions.size(); ++i)
        buf << i << '\t' << fmt(predictions[i]) << '\n';
      write_text(o.predictions, buf.str());
    }
    std::string value;
    try {
      value = fmt(pearson(predictions, golds));
    } catch (const NumericalError&) {
      value = "degenerate";
    }
    *rt.out << "pearson\t" << value << '\n';
  });
}

struct RerankInputs {
  std::vector<NBestList> lists;
  std::vector<Tokens> references;
  bool use_image = false;
};

RerankInputs load_rerank_inputs(const RerankOptions& o, bool need_refs) {
  RerankInputs in;
  if (need_refs && o.references.empty())
    throw ConfigError("rerank-train: --references is required");
  if (o.images.empty() != o.image_alignment.empty())
    throw ConfigError("--images and --image-alignment go together");
  require_file(o.nbest, "n-best file");
  require_file(o.source, "source sentences");
  if (!o.references.empty()) require_file(o.references, "references");
  if (!o.images.empty()) {
    require_file(o.images, "image features");
    require_file(o.image_alignment, "image alignment");
  }
  in.lists = load_nbest(o.nbest);
  if (!o.references.empty()) in.references = load_sentences(o.references);
  std::unique_ptr<ImageFeatureStore> images;
  std::vector<std::size_t> alignment;
  if (!o.images.empty()) {
    images = std::make_unique<ImageFeatureStore>(load_features(o.images));
    images->validate();
    alignment = load_image_alignment(o.image_alignment);
    in.use_image = true;
  }
  attach_context(in.lists, load_sentences(o.source), images.get(),
                 images ? &alignment : nullptr);
  return in;
}

FeatureConfig feature_config(const RerankOptions& o, bool use_image) {
  if (o.source_language.empty() || o.target_language.empty())
    throw ConfigError("--source-language and --target-language are required");
  return {o.source_language, o.target_language, use_image};
}

void cmd_rerank_train(RerankOptions o, const Runtime& rt) {
  o.mira.seed = rt.seed;
  o.mira.metric = o.metric == "background" ? MiraMetric::kBackgroundBleu
                                           : MiraMetric::kSentenceBleu;
  o.mira.validate();
  if (o.weights.empty()) throw ConfigError("rerank-train: --weights is required");
  RerankInputs in = load_rerank_inputs(o, true);
  with_model(o.model, [&](const auto& model) {
    extract_features(in.lists, model, feature_config(o, in.use_image));
  });
  WeightVector w = mira_train(in.lists, in.references, o.mira,
                              WeightVector::zeros(feature_names(in.use_image)));
  std::ostringstream buf;
  w.save(buf);
  write_text(o.weights, buf.str());
  for (std::size_t i = 0; i < w.values.size(); ++i)
    *rt.out << "weight\t" << w.names[i] << '\t' << fmt(w.values[i]) << '\n';
}

void cmd_rerank_apply(const RerankOptions& o, const Runtime& rt) {
  if (o.weights.empty()) throw ConfigError("rerank-apply: --weights is required");
  require_file(o.weights, "weights");
  RerankInputs in = load_rerank_inputs(o, false);
  std::ifstream wf(o.weights);
  WeightVector w = WeightVector::load(wf);
  if (w.names != feature_names(in.use_image))
    throw ConfigError("weights file features do not match the feature set");
  with_model(o.model, [&](const auto& model) {
    extract_features(in.lists, model, feature_config(o, in.use_image));
  });
  std::vector<std::size_t> chosen = rerank_apply(in.lists, w);
  std::vector<Tokens> hyps;
  std::ostringstream buf;
  for (std::size_t s = 0; s < in.lists.size(); ++s) {
    const Tokens& h = in.lists[s].entries[chosen[s]].hypothesis;
    for (std::size_t t = 0; t < h.size(); ++t) buf << (t ? " " : "") << h[t];
    buf << '\n';
    hyps.push_back(h);
  }
  if (!o.out.empty())
    write_text(o.out, buf.str());
  else
    *rt.out << buf.str();
  if (!in.references.empty()) {
    std::vector<Tokens> refs;
    for (const auto& l : in.lists) {
      if (l.segment_id >= in.references.size())
        throw InputError("no reference for segment " +
                         std::to_string(l.segment_id));
      refs.push_back(in.references[l.segment_id]);
    }
    *rt.out << "bleu\t" << fmt(corpus_bleu(hyps, refs)) << '\n';
  }
}

bool cmd_gradcheck(const GradcheckOptions& o, const Runtime& rt) {
  const std::vector<double> betas =
      o.betas.empty() ? std::vector<double>{0.0, 0.5, 1.0} : o.betas;
  double worst = 0;
  for (double beta : betas) {
    ModelGradcheckConfig c;
    c.loss.beta = beta;
    c.seed = rt.seed;
    c.inject_bug = o.inject_bug;
    GradcheckReport r = check_model_gradients(c);
    for (const auto& [name, e] : r.per_param)
      *rt.out << "beta=" << fmt(beta) << '\t' << name << '\t' << fmt(e) << '\n';
    worst = std::max(worst, r.max_relative_error);
  }
  const bool ok = worst < 1e-4;
  *rt.out << "max_relative_error\t" << fmt(worst) << '\t'
          << (ok ? "PASS" : "FAIL") << '\n';
  return ok;
}

void cmd_gen_synthetic(const SyntheticOptions& o, const Runtime& rt) {
  SyntheticSpec spec = o.spec;
  spec.seed = rt.seed;
  SyntheticData data = generate_synthetic(spec);
  const fs::path dir(o.out_dir);
  fs::create_directories(dir);
  auto write_split = [&](const std::string& name, const SyntheticSplit& s) {
    for (const auto& c : s.corpora)
      save_corpus(dir / (name + "." + c.language), c);
    save_features(dir / (name + ".feat"), s.images);
    std::ostringstream classes;
    for (auto c : s.image_class) classes << c << '\n';
    write_text(dir / (name + ".classes"), classes.str());
  };
  write_split("train", data.train);
  write_split("valid", data.validation);
  write_split("test", data.test);
  *rt.out << "wrote\t" << dir.string() << '\n';
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out,
        std::ostream& err) {
  CLI::App app{"Multilingual multi-modal embeddings: training, evaluation "
               "and n-best re-ranking"};
  app.set_config("--config", "", "TOML configuration file");
  app.require_subcommand(1);
  app.fallthrough();

  Runtime rt;
  rt.out = &out;
  rt.err = &err;
  app.add_option("--seed", rt.seed, "Root seed for all randomness")
      ->capture_default_str();
  app.add_option("--threads", rt.threads,
                 "Worker threads (1 gives bitwise-reproducible runs)")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);

  TrainOptions tr;
  auto* train_cmd = app.add_subcommand("train", "Train a model");
  train_cmd->add_option("--train", tr.train_prefix,
                        "Training data prefix (PREFIX.<lang>, PREFIX.feat)")
      ->required();
  train_cmd->add_option("--valid", tr.valid_prefix, "Validation data prefix");
  train_cmd->add_option("--out", tr.out_dir, "Run directory")->required();
  train_cmd->add_option("--languages", tr.languages, "Language codes")
      ->delimiter(',')
      ->required();
  train_cmd->add_option("--captions-per-image", tr.captions_per_image)
      ->capture_default_str()
      ->check(CLI::PositiveNumber);
  train_cmd->add_option("--min-count", tr.min_count)->capture_default_str();
  train_cmd->add_option("--embed-dim", tr.dims.embed)->capture_default_str();
  train_cmd->add_option("--hidden-dim", tr.dims.hidden)->capture_default_str();
  train_cmd->add_option("--multimodal-dim", tr.dims.multimodal)
      ->capture_default_str();
  train_cmd->add_option("--dropout", tr.dropout)->capture_default_str();
  train_cmd->add_option("--init-stddev", tr.init_stddev)->capture_default_str();
  train_cmd->add_option("--margin", tr.training.loss.margin,
                        "Hinge margin alpha")
      ->capture_default_str();
  train_cmd->add_option("--beta", tr.training.loss.beta,
                        "Weight of the image-sentence term")
      ->capture_default_str();
  train_cmd->add_option("--negatives", tr.training.loss.negatives_per_instance,
                        "Contrastive examples per instance")
      ->capture_default_str();
  train_cmd->add_option("--batch-size", tr.training.batch_size)
      ->capture_default_str();
  train_cmd->add_option("--epochs", tr.training.max_epochs)
      ->capture_default_str();
  train_cmd->add_option("--patience", tr.training.patience,
                        "Early-stopping patience in epochs (0 disables)")
      ->capture_default_str();
  train_cmd->add_option("--learning-rate", tr.training.adam.learning_rate)
      ->capture_default_str();
  train_cmd->add_option("--clip-norm", tr.training.clip_norm,
                        "Global gradient-norm clip (0 disables)")
      ->capture_default_str();
  train_cmd->add_option("--selection", tr.selection,
                        "Model selection: sum_of_recalls or loss")
      ->capture_default_str()
      ->check(CLI::IsMember({"sum_of_recalls", "loss"}));
  train_cmd->add_option("--precision", tr.precision)
      ->capture_default_str()
      ->check(CLI::IsMember({"float", "double"}));

  EvalRankOptions er;
  auto* rank_cmd =
      app.add_subcommand("eval-rank", "Image-sentence retrieval metrics");
  rank_cmd->add_option("--model", er.model, "Checkpoint")->required();
  rank_cmd->add_option("--data", er.data, "Data prefix")->required();
  rank_cmd->add_option("--languages", er.languages,
                       "Languages to evaluate (default: all in checkpoint)")
      ->delimiter(',');
  rank_cmd->add_option("--captions-per-image", er.captions_per_image)
      ->capture_default_str()
      ->check(CLI::PositiveNumber);
  rank_cmd->add_flag("--cross-lingual", er.cross_lingual,
                     "Also rank captions across languages");

  EvalStsOptions es;
  auto* sts_cmd = app.add_subcommand("eval-sts", "Semantic similarity");
  sts_cmd->add_option("--model", es.model, "Checkpoint")->required();
  sts_cmd->add_option("--pairs", es.pairs, "sentA<TAB>sentB<TAB>gold lines")
      ->required();
  sts_cmd->add_option("--language", es.language);
  sts_cmd->add_option("--predictions", es.predictions,
                      "Write index<TAB>score lines here");

  RerankOptions rr;
  auto add_rerank = [&rr](CLI::App* cmd) {
    cmd->add_option("--model", rr.model, "Checkpoint")->required();
    cmd->add_option("--nbest", rr.nbest, "id ||| hypothesis ||| loglik lines")
        ->required();
    cmd->add_option("--source", rr.source, "Source sentences, one per line")
        ->required();
    cmd->add_option("--references", rr.references, "Reference translations");
    cmd->add_option("--images", rr.images, "Image features for s_i");
    cmd->add_option("--image-alignment", rr.image_alignment,
                    "Feature row per segment, one per line");
    cmd->add_option("--source-language", rr.source_language);
    cmd->add_option("--target-language", rr.target_language);
    cmd->add_option("--weights", rr.weights, "Weights file");
  };
  auto* rtrain_cmd = app.add_subcommand("rerank-train", "Tune weights (MIRA)");
  add_rerank(rtrain_cmd);
  rtrain_cmd->add_option("--mira-c", rr.mira.c)->capture_default_str();
  rtrain_cmd->add_option("--mira-epochs", rr.mira.epochs)
      ->capture_default_str();
  rtrain_cmd->add_option("--bleu-decay", rr.mira.bleu_decay)
      ->capture_default_str();
  rtrain_cmd->add_option("--mira-metric", rr.metric)
      ->capture_default_str()
      ->check(CLI::IsMember({"sentence", "background"}));
  auto* rapply_cmd = app.add_subcommand("rerank-apply", "Pick 1-best");
  add_rerank(rapply_cmd);
  rapply_cmd->add_option("--out", rr.out, "Output file (default: stdout)");

  GradcheckOptions gc;
  auto* grad_cmd = app.add_subcommand(
      "gradcheck", "Finite-difference check of all gradients");
  grad_cmd->add_option("--beta", gc.betas,
                       "Beta values to check (default: 0, 0.5, 1)")
      ->delimiter(',');
  grad_cmd->add_flag("--inject-gradient-bug", gc.inject_bug)
      ->group("");

  SyntheticOptions sy;
  auto* syn_cmd = app.add_subcommand("gen-synthetic", "Generate toy data");
  syn_cmd->add_option("--out", sy.out_dir, "Output directory")->required();
  syn_cmd->add_option("--classes", sy.spec.classes)->capture_default_str();
  syn_cmd->add_option("--images-per-class", sy.spec.images_per_class,
                      "Images per class in validation and test")
      ->capture_default_str();
  syn_cmd->add_option("--train-images-per-class",
                      sy.spec.train_images_per_class)
      ->capture_default_str();
  syn_cmd->add_option("--captions-per-image", sy.spec.captions_per_image)
      ->capture_default_str();
  syn_cmd->add_option("--vocab-size", sy.spec.vocabulary_size)
      ->capture_default_str();
  syn_cmd->add_option("--feature-dim", sy.spec.feature_dim)
      ->capture_default_str();
  syn_cmd->add_option("--noise", sy.spec.noise)->capture_default_str();
  syn_cmd->add_option("--languages", sy.spec.languages)
      ->delimiter(',')
      ->capture_default_str();

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kOk;
  } catch (const CLI::CallForAllHelp& e) {
    out << app.help("", CLI::AppFormatMode::All);
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    return kUsageError;
  }

  try {
    err << "seed " << rt.seed << '\n';
    if (*train_cmd) {
      cmd_train(tr, rt, app.config_to_str(true, false));
    } else if (*rank_cmd) {
      cmd_eval_rank(er, rt);
    } else if (*sts_cmd) {
      cmd_eval_sts(es, rt);
    } else if (*rtrain_cmd) {
      cmd_rerank_train(rr, rt);
    } else if (*rapply_cmd) {
      cmd_rerank_apply(rr, rt);
    } else if (*grad_cmd) {
      if (!cmd_gradcheck(gc, rt)) return kNumericalError;
    } else if (*syn_cmd) {
      cmd_gen_synthetic(sy, rt);
    }
  } catch (const ConfigError& e) {
    err << "configuration error: " << e.what() << '\n';
    return kUsageError;
  } catch (const InvalidArgument& e) {
    err << "invalid argument: " << e.what() << '\n';
    return kUsageError;
  } catch (const NumericalError& e) {
    err << "numerical error: " << e.what() << '\n';
    return kNumericalError;
  } catch (const InputError& e) {
    err << "input error: " << e.what() << '\n';
    return kDataError;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kDataError;
  }
  return kOk;
}

}  // namespace mlmme::cli
