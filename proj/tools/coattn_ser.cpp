// Copyright 2026 The coattn-ser Authors.
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

// coattn_ser: feature extraction, training, evaluation, ablation, export and
// synthetic-corpus generation.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "coattn/config.hpp"
#include "coattn/evaluation.hpp"
#include "coattn/features.hpp"
#include "coattn/synth.hpp"

namespace fs = std::filesystem;
using namespace coattn;

namespace {

struct Flags {
  std::string config_file;
  std::vector<std::string> settings;
  std::optional<std::string> manifest, strategy, provider, preset, out, cache_dir;
  std::optional<std::uint64_t> seed;
  bool verbose = false;
};

void add_common(CLI::App& cmd, Flags& f) {
  cmd.add_option("--config", f.config_file, "key=value config file");
  cmd.add_option("--set", f.settings, "Extra key=value setting (repeatable)");
  cmd.add_option("--manifest", f.manifest, "Manifest CSV");
  cmd.add_option("--strategy", f.strategy, "session | speaker")
      ->check(CLI::IsMember({"session", "speaker"}));
  cmd.add_option("--provider", f.provider, "toy | file")
      ->check(CLI::IsMember({"toy", "file"}));
  cmd.add_option("--preset", f.preset, "mini | alexnet")
      ->check(CLI::IsMember({"mini", "alexnet"}));
  cmd.add_option("--seed", f.seed, "Random seed");
  cmd.add_option("--out", f.out, "Output directory");
  cmd.add_option("--cache-dir", f.cache_dir, "Feature cache directory");
  cmd.add_flag("-v,--verbose", f.verbose, "Per-epoch progress on stderr");
}

// Defaults, then the config file, then --set, then explicit flags; the
// COATTN_SER_CACHE environment variable has the last word on the cache.
RunConfig resolve(const Flags& f) {
  RunConfig c;
  if (!f.config_file.empty()) load_config(f.config_file, c);
  for (const auto& kv : f.settings) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects key=value, got " + kv);
    apply_setting(c, kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (f.manifest) apply_setting(c, "manifest", *f.manifest);
  if (f.strategy) apply_setting(c, "strategy", *f.strategy);
  if (f.provider) apply_setting(c, "provider", *f.provider);
  if (f.preset) apply_setting(c, "preset", *f.preset);
  if (f.out) apply_setting(c, "out_dir", *f.out);
  if (f.cache_dir) apply_setting(c, "cache_dir", *f.cache_dir);
  if (f.seed) c.train.seed = *f.seed;
  if (const char* env = std::getenv("COATTN_SER_CACHE"); env != nullptr && *env != '\0') {
    c.cache_dir = env;
  }
  if (c.cache_dir.empty()) c.cache_dir = c.out_dir / "cache";
  c.validate();
  return c;
}

Manifest require_manifest(const RunConfig& c) {
  if (c.manifest.empty()) throw ConfigError("no manifest given (--manifest)");
  ManifestOptions opts;
  opts.drop_unknown_labels = c.drop_unknown_labels;
  Manifest m = load_manifest(c.manifest, opts);
  if (m.dropped() > 0) {
    std::cerr << "note: skipped " << m.dropped() << " rows with labels outside the four classes\n";
  }
  return m;
}

Dataset load_dataset(const RunConfig& c, const Manifest& m,
                     const model::EmbeddingProvider& provider) {
  DatasetOptions opts;
  opts.provider = &provider;
  opts.selection = FeatureSelection::for_model(c.train.model);
  opts.cache_dir = c.cache_dir;
  return build_dataset(m, opts);
}

void print_fold(const std::string& tag, const FoldResult& r) {
  std::printf("%s fold %zu (held out %s): WA %.4f UA %.4f\n", tag.c_str(), r.fold,
              r.held_out.c_str(), r.utterance.wa, r.utterance.ua);
  if (!r.utterance.unsupported.empty()) {
    std::fprintf(stderr, "warning: fold %zu has classes without test support; UA averages "
                 "over the remaining classes\n", r.fold);
  }
  std::fflush(stdout);
}

void print_summary(const CrossValidationResult& cv) {
  std::printf("%s pooled: WA %.4f UA %.4f | fold mean: WA %.4f UA %.4f\n",
              cv.config_name.c_str(), cv.pooled_utterance.wa, cv.pooled_utterance.ua,
              cv.mean_wa, cv.mean_ua);
}

EpochCallback epoch_logger(bool verbose) {
  if (!verbose) return {};
  return [](const EpochRecord& e) {
    std::fprintf(stderr, "  epoch %zu loss %.4f train WA %.4f val UA %.4f\n", e.epoch,
                 e.train_loss, e.train_wa, e.val_ua);
  };
}

int cmd_synth(const Flags& f, std::size_t per_speaker) {
  SynthOptions opts;
  if (f.seed) opts.seed = *f.seed;
  opts.utterances_per_speaker = per_speaker;
  const fs::path out = f.out ? fs::path(*f.out) : fs::path("synth");
  const SynthCorpus corpus = generate_corpus(out, opts);
  std::printf("wrote %zu utterances and %s\n", corpus.manifest.size(),
              corpus.manifest_path.string().c_str());
  return 0;
}

int cmd_extract(const Flags& f) {
  const RunConfig c = resolve(f);
  const Manifest m = require_manifest(c);
  const auto provider = make_provider(c);
  DatasetOptions opts;
  opts.provider = provider.get();
  opts.selection = FeatureSelection::for_model(c.train.model);
  opts.cache_dir = c.cache_dir;
  ExtractReport report;
  build_dataset(m, opts, &report);
  for (const auto& [id, msg] : report.failures) {
    std::fprintf(stderr, "error: %s: %s\n", id.c_str(), msg.c_str());
  }
  std::printf("extracted %zu utterances (%zu segments) into %s: %zu up to date, %zu files "
              "written, %zu failed\n",
              report.utterances, report.segments, c.cache_dir.string().c_str(),
              report.cached, report.files_written, report.failures.size());
  return report.failures.empty() ? 0 : 2;
}

int cmd_train(const Flags& f) {
  const RunConfig c = resolve(f);
  const Manifest m = require_manifest(c);
  const auto provider = make_provider(c);
  const Dataset data = load_dataset(c, m, *provider);
  CrossValidationOptions opts;
  opts.out_dir = c.out_dir;
  opts.max_folds = c.max_folds;
  opts.on_epoch = epoch_logger(f.verbose);
  opts.on_fold = [](const FoldResult& r) { print_fold("train", r); };
  const auto cv = cross_validate(data, m, c.strategy, c.train, opts);
  if (!c.emit_checkpoints || !c.emit_history) {
    for (std::size_t k = 0; k < cv.folds.size(); ++k) {
      const auto stem = c.out_dir / ("fold_" + std::to_string(k));
      if (!c.emit_checkpoints) fs::remove(stem.string() + ".ckpt");
      if (!c.emit_history) fs::remove(stem.string() + ".history.jsonl");
    }
  }
  print_summary(cv);
  return 0;
}

int cmd_evaluate(const Flags& f, const std::string& checkpoints) {
  const RunConfig c = resolve(f);
  const Manifest m = require_manifest(c);
  const auto provider = make_provider(c);
  const Dataset data = load_dataset(c, m, *provider);
  CrossValidationOptions opts;
  opts.out_dir = c.out_dir / "evaluate";
  opts.max_folds = c.max_folds;
  opts.on_fold = [](const FoldResult& r) { print_fold("evaluate", r); };
  const fs::path dir = checkpoints.empty() ? c.out_dir : fs::path(checkpoints);
  const auto cv = evaluate_checkpoints(data, m, c.strategy, c.train, dir, opts);
  print_summary(cv);
  return 0;
}

int cmd_ablate(const Flags& f) {
  RunConfig c = resolve(f);
  const Manifest m = require_manifest(c);
  const auto provider = make_provider(c);
  // Every row of the grid is trained, so extract all three feature kinds.
  model::ModelConfig all = c.train.model;
  all.use_mfcc = all.use_spectrogram = all.use_embedding = true;
  DatasetOptions dopts;
  dopts.provider = provider.get();
  dopts.selection = FeatureSelection::for_model(all);
  dopts.cache_dir = c.cache_dir;
  const Dataset data = build_dataset(m, dopts);
  AblationOptions opts;
  opts.out_dir = c.out_dir;
  opts.max_folds = c.max_folds;
  opts.on_row = [](const AblationResult& r) { print_summary(r.cv); };
  run_ablation(data, m, c.strategy, c.train, opts);
  std::printf("wrote %s\n", (c.out_dir / "ablation.csv").string().c_str());
  return 0;
}

int cmd_export(const Flags& f, const std::string& checkpoint, std::optional<std::size_t> fold) {
  const RunConfig c = resolve(f);
  const Manifest m = require_manifest(c);
  if (checkpoint.empty() || !fs::exists(checkpoint)) {
    throw std::runtime_error("export needs an existing --checkpoint, got '" + checkpoint + "'");
  }
  const auto provider = make_provider(c);
  const Dataset data = load_dataset(c, m, *provider);
  model::CoAttentionModel<float> model(c.train.model, 0);
  model.load(load_checkpoint(checkpoint));
  std::vector<std::string> ids;
  if (fold) {
    const auto folds = make_folds(m, c.strategy);
    if (*fold >= folds.size()) throw std::out_of_range("--fold out of range");
    ids = folds[*fold].test_ids;
  } else {
    for (const auto& r : m.records()) ids.push_back(r.utterance_id);
  }
  fs::create_directories(c.out_dir);
  const fs::path pooled = c.emit_features ? c.out_dir / "pooled_embeddings.csv" : fs::path();
  const fs::path fused = c.out_dir / "fused_features.csv";
  const auto s = export_features(model, data, ids, pooled, fused);
  std::printf("exported %zu segments: fused width %zu, pooled width %zu\n", s.rows,
              s.fused_width, s.pooled_width);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Speech emotion recognition with co-attention fusion of MFCC, "
               "spectrogram and frame-embedding branches"};
  app.require_subcommand(1);

  Flags f;
  std::size_t per_speaker = 20;
  std::string checkpoints, checkpoint;
  std::optional<std::size_t> fold;

  auto* synth = app.add_subcommand("synth", "Generate the synthetic corpus and manifest");
  synth->add_option("--seed", f.seed, "Random seed");
  synth->add_option("--out", f.out, "Output directory");
  synth->add_option("--per-speaker", per_speaker, "Utterances per speaker");

  auto* extract = app.add_subcommand("extract", "Compute and cache per-segment features");
  add_common(*extract, f);
  auto* train = app.add_subcommand("train", "Cross-validated training");
  add_common(*train, f);
  auto* evaluate = app.add_subcommand("evaluate", "Score saved fold checkpoints");
  add_common(*evaluate, f);
  evaluate->add_option("--checkpoints", checkpoints,
                       "Directory holding fold_<k>.ckpt (default: --out)");
  auto* ablate = app.add_subcommand("ablate", "Run the ten-row branch ablation");
  add_common(*ablate, f);
  auto* exp = app.add_subcommand("export", "Dump pooled-embedding and fused vectors as CSV");
  add_common(*exp, f);
  exp->add_option("--checkpoint", checkpoint, "Checkpoint file")->required();
  exp->add_option("--fold", fold, "Only the test utterances of this fold");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*synth) return cmd_synth(f, per_speaker);
    if (*extract) return cmd_extract(f);
    if (*train) return cmd_train(f);
    if (*evaluate) return cmd_evaluate(f, checkpoints);
    if (*ablate) return cmd_ablate(f);
    if (*exp) return cmd_export(f, checkpoint, fold);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
