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

// Acceptance run: one PASS/FAIL line per criterion, exit status 0 only when
// every criterion passes. Usage: acceptance [--work DIR] [--only N]...

#include <algorithm>
#include <chrono>
#include <cmath>
#include <complex>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <map>
#include <numbers>
#include <numeric>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "coattn/dsp.hpp"
#include "coattn/evaluation.hpp"
#include "coattn/synth.hpp"
#include "gradient_cases.hpp"

using namespace coattn;
namespace fs = std::filesystem;
using testing::TensorD;
using testing::random_tensor;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

// ---------------------------------------------------------------------------
// Shared synthetic corpus

struct Workspace {
  fs::path root;
  std::optional<Manifest> manifest;
  std::optional<Dataset> data;

  const Manifest& corpus_manifest() {
    if (!manifest) manifest = generate_corpus(root / "corpus", SynthOptions{}).manifest;
    return *manifest;
  }
  const Dataset& corpus_data() {
    if (!data) {
      const model::ToyEmbeddingProvider toy;
      DatasetOptions opt;
      opt.provider = &toy;
      opt.cache_dir = root / "cache";
      data = build_dataset(corpus_manifest(), opt);
    }
    return *data;
  }
};

// ---------------------------------------------------------------------------
// 1. Gradient suite

Outcome gradients() {
  const auto t0 = Clock::now();
  constexpr int kTrials = 20;
  Rng rng(2026);
  std::string worst_name;
  double worst_ratio = 0.0;
  std::size_t checks = 0, failures = 0;
  for (const auto& c : testing::gradient_cases()) {
    for (int t = 0; t < kTrials; ++t) {
      const double err = c.trial(rng);
      ++checks;
      if (!(err < c.tolerance)) ++failures;
      if (err / c.tolerance > worst_ratio) {
        worst_ratio = err / c.tolerance;
        worst_name = c.name;
      }
    }
  }
  const double secs = seconds_since(t0);
  return {failures == 0 && secs < 120.0,
          fmt("%zu ops x %d trials, %zu failures, worst error %.2g of tolerance (%s), %.1f s",
              checks / kTrials, kTrials, failures, worst_ratio, worst_name.c_str(), secs)};
}

// ---------------------------------------------------------------------------
// 2. DSP oracles

Outcome dsp_oracles() {
  const auto t0 = Clock::now();
  Rng rng(7);
  std::vector<double> signal(16000);
  for (double& v : signal) v = rng.uniform(-1.0, 1.0);
  const dsp::StftOptions opt;  // 640 / 160 / 800 Hamming
  const auto spec = dsp::stft(signal, opt);
  const auto win = dsp::make_window(opt.window, opt.window_len);

  // Twiddle table for the naive transform.
  const std::size_t n = opt.dft_len;
  std::vector<std::complex<double>> tw(n);
  for (std::size_t i = 0; i < n; ++i) tw[i] = std::polar(1.0, -2.0 * std::numbers::pi * i / n);

  double max_err = 0.0, max_parseval = 0.0;
  for (std::size_t f = 0; f < spec.rows; ++f) {
    std::vector<double> frame(n, 0.0);
    double energy = 0.0;
    for (std::size_t i = 0; i < opt.window_len; ++i) {
      frame[i] = signal[f * opt.hop + i] * win[i];
      energy += frame[i] * frame[i];
    }
    double spectral = 0.0;
    for (std::size_t k = 0; k <= n / 2; ++k) {
      std::complex<double> acc = 0.0;
      for (std::size_t i = 0; i < n; ++i) acc += frame[i] * tw[(k * i) % n];
      max_err = std::max(max_err, std::abs(acc - spec(f, k)));
      spectral += (k == 0 || k == n / 2 ? 1.0 : 2.0) * std::norm(spec(f, k));
    }
    max_parseval = std::max(max_parseval, std::abs(spectral / n - energy) / energy);
  }

  audio::AudioSegment tone;
  tone.samples.resize(audio::kSegmentSamples);
  for (std::size_t i = 0; i < tone.samples.size(); ++i) {
    tone.samples[i] = static_cast<float>(0.5 * std::sin(2.0 * std::numbers::pi * 1000.0 * i / 16000.0));
  }
  tone.valid_samples = tone.samples.size();
  const auto img = dsp::spectrogram_image(tone);
  std::size_t off_peak = 0;
  for (std::size_t f = 0; f < img.rows; ++f) {
    const auto row = img.row(f);
    if (std::max_element(row.begin(), row.end()) - row.begin() != 50) ++off_peak;
  }
  const double secs = seconds_since(t0);
  const bool pass = max_err < 1e-8 && max_parseval < 1e-6 && off_peak == 0 && secs < 60.0;
  return {pass, fmt("%zu frames: DFT max error %.2g, Parseval max rel %.2g, 1 kHz peak off bin 50 "
                    "in %zu/%zu frames, %.1f s",
                    spec.rows, max_err, max_parseval, off_peak, img.rows, secs)};
}

// ---------------------------------------------------------------------------
// 3. Shapes

Outcome shapes() {
  Rng rng(3);
  const model::ToyEmbeddingProvider toy;
  std::size_t segments = 0, expected = 0, bad = 0;
  for (std::size_t len : {1u, 16000u, 47999u, 48000u, 48001u, 112000u, 150000u}) {
    expected += (len + audio::kSegmentSamples - 1) / audio::kSegmentSamples;
    audio::Waveform w;
    w.samples.resize(len);
    for (float& s : w.samples) s = static_cast<float>(0.5 * rng.uniform(-1.0, 1.0));
    for (const auto& seg : audio::segment(w, "u")) {
      ++segments;
      const auto m = dsp::mfcc(seg);
      const auto s = dsp::spectrogram_image(seg);
      const auto e = model::embed_audio(seg, toy);
      if (m.rows != 94 || m.cols != 40 || s.rows != 300 || s.cols != 200 || e.rows != 149 ||
          e.cols != 768) {
        ++bad;
      }
    }
  }
  return {bad == 0 && segments == expected,
          fmt("%zu segments from 7 lengths, %zu with wrong MFCC/spectrogram/embedding shape",
              segments, bad)};
}

// ---------------------------------------------------------------------------
// 4. Co-attention properties

Outcome coattention() {
  Rng rng(4);
  double onehot = 0.0, uniform = 0.0, sums = 0.0, perm = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t b = 2, t = 149, d = 768;
    const TensorD emb = random_tensor({b, t, d}, rng, false);
    std::vector<double> hot(b * t, 0.0);
    std::vector<std::size_t> pick(b);
    for (std::size_t i = 0; i < b; ++i) {
      pick[i] = rng.below(t);
      hot[i * t + pick[i]] = 1.0;
    }
    const auto sel = model::pool_embeddings(TensorD::from({b, t}, hot), emb);
    const auto avg = model::pool_embeddings(TensorD::full({b, t}, 1.0 / t), emb);
    for (std::size_t i = 0; i < b; ++i)
      for (std::size_t k = 0; k < d; ++k) {
        onehot = std::max(onehot, std::abs(sel.data()[i * d + k] - emb.data()[(i * t + pick[i]) * d + k]));
        double mean = 0.0;
        for (std::size_t f = 0; f < t; ++f) mean += emb.data()[(i * t + f) * d + k];
        uniform = std::max(uniform, std::abs(avg.data()[i * d + k] - mean / t));
      }

    const TensorD xm = random_tensor({b, 128}, rng, false, -3.0, 3.0);
    const TensorD xs = random_tensor({b, 128}, rng, false, -3.0, 3.0);
    const model::Linear<double> f{random_tensor({256, t}, rng, false), random_tensor({t}, rng, false)};
    const auto w = model::coattention_weights(xm, xs, f, model::AttentionMode::kSoftmax);
    for (std::size_t i = 0; i < b; ++i) {
      double s = 0.0;
      for (std::size_t k = 0; k < t; ++k) s += w.data()[i * t + k];
      sums = std::max(sums, std::abs(s - 1.0));
    }

    std::vector<std::size_t> order(t);
    std::iota(order.begin(), order.end(), 0);
    rng.shuffle(std::span(order));
    std::vector<double> pw(b * t), pe(b * t * d);
    for (std::size_t i = 0; i < b; ++i)
      for (std::size_t k = 0; k < t; ++k) {
        pw[i * t + k] = w.data()[i * t + order[k]];
        std::copy_n(emb.data().begin() + static_cast<std::ptrdiff_t>((i * t + order[k]) * d), d,
                    pe.begin() + static_cast<std::ptrdiff_t>((i * t + k) * d));
      }
    const auto a = model::pool_embeddings(w, emb);
    const auto p = model::pool_embeddings(TensorD::from({b, t}, pw), TensorD::from({b, t, d}, pe));
    for (std::size_t i = 0; i < a.numel(); ++i) perm = std::max(perm, std::abs(a.data()[i] - p.data()[i]));
  }
  const bool pass = onehot < 1e-9 && uniform < 1e-9 && sums < 1e-6 && perm < 1e-9;
  return {pass, fmt("20 trials at 149 x 768: one-hot %.2g, uniform %.2g, softmax sum %.2g, "
                    "permutation %.2g",
                    onehot, uniform, sums, perm)};
}

// ---------------------------------------------------------------------------
// 5. Overfit

Outcome overfit(Workspace& ws) {
  const auto t0 = Clock::now();
  const Dataset& data = ws.corpus_data();
  const double extract_secs = seconds_since(t0);
  TrainConfig cfg;
  cfg.lr = 1e-3;
  cfg.seed = 5;
  cfg.max_epochs = 200;
  cfg.patience = 200;
  cfg.validation_fraction = 0.0;
  cfg.stop_at_train_accuracy = 0.95;
  std::vector<std::string> ids;
  for (const auto& u : data.utterances()) ids.push_back(u.id);
  const auto t1 = Clock::now();
  const TrainResult r = train(data, ids, cfg);
  const auto& last = r.history.epochs.back();

  // Accuracy of the final weights over every segment, dropout off.
  model::CoAttentionModel<float> net(cfg.model, 0);
  net.load(r.checkpoint);
  std::size_t right = 0, total = 0;
  for (const auto& p : predict_utterances(net, data, ids)) {
    for (const auto& s : p.segments) {
      right += s.label == p.truth;
      ++total;
    }
  }
  const double secs = seconds_since(t0);
  const bool pass = last.train_wa >= 0.95 && r.history.epochs.size() <= 200 && secs < 900.0;
  return {pass, fmt("%zu utterances / %zu segments: train accuracy %.4f after %zu epochs "
                    "(eval-mode %.4f), extract %.0f s, train %.0f s",
                    ids.size(), data.segment_count(), last.train_wa, r.history.epochs.size(),
                    static_cast<double>(right) / total, extract_secs, seconds_since(t1))};
}

// ---------------------------------------------------------------------------
// 6. Speaker-independent generalisation

TrainConfig quick_config() {
  TrainConfig cfg;
  cfg.lr = 1e-3;
  cfg.max_epochs = 3;
  cfg.patience = 1;
  cfg.seed = 6;
  return cfg;
}

Outcome generalisation(Workspace& ws) {
  const auto t0 = Clock::now();
  const Dataset& data = ws.corpus_data();
  const Manifest& m = ws.corpus_manifest();
  const auto grid = model::ablation_grid({});
  TrainConfig with = quick_config();
  TrainConfig without = quick_config();
  without.model = grid[5].config;  // all three branches, mean pooling
  CrossValidationOptions opt;
  opt.config_name = "with";
  const auto cv_with = cross_validate(data, m, SplitStrategy::kSpeaker, with, opt);
  opt.config_name = "without";
  const auto cv_without =
      cross_validate(data.project(FeatureSelection::for_model(without.model)), m,
                     SplitStrategy::kSpeaker, without, opt);
  const bool pass = cv_with.folds.size() == 10 && cv_with.mean_ua >= 0.70 &&
                    cv_with.mean_ua >= cv_without.mean_ua - 0.05;
  return {pass, fmt("10 speaker folds, fold-mean utterance UA: w/ co-att %.4f (pooled %.4f), "
                    "w/o co-att %.4f (pooled %.4f), %.0f s",
                    cv_with.mean_ua, cv_with.pooled_utterance.ua, cv_without.mean_ua,
                    cv_without.pooled_utterance.ua, seconds_since(t0))};
}

// ---------------------------------------------------------------------------
// 7. Ablation harness

Outcome ablation(Workspace& ws) {
  const auto t0 = Clock::now();
  TrainConfig cfg = quick_config();
  cfg.max_epochs = 1;
  AblationOptions opt;
  opt.out_dir = ws.root / "ablation";
  const auto rows = run_ablation(ws.corpus_data(), ws.corpus_manifest(), SplitStrategy::kSession,
                                 cfg, opt);
  const auto grid = model::ablation_grid(cfg.model);
  bool ok = rows.size() == 10;
  std::size_t leaks = 0;
  for (std::size_t i = 0; ok && i < rows.size(); ++i) {
    const auto& r = rows[i];
    ok = ok && r.name == grid[i].name && r.cv.folds.size() == 5 &&
         std::isfinite(r.cv.pooled_utterance.wa) && std::isfinite(r.cv.pooled_utterance.ua);
    if (!grid[i].config.needs_mfcc() && r.mfcc_calls != 0) ++leaks;
    if (!grid[i].config.needs_spectrogram() && r.spectrogram_calls != 0) ++leaks;
  }
  std::string table;
  for (const auto& r : rows) {
    table += fmt("\n      %-36s WA %.4f UA %.4f  (mfcc batches %zu, spectrogram batches %zu)",
                 r.name.c_str(), r.cv.pooled_utterance.wa, r.cv.pooled_utterance.ua,
                 r.mfcc_calls, r.spectrogram_calls);
  }
  const bool csv = slurp(*opt.out_dir / "ablation.csv").rfind("model,WA,UA", 0) == 0;
  return {ok && leaks == 0 && csv,
          fmt("%zu rows x 5 session folds, %zu disabled-encoder invocations, %.0f s", rows.size(),
              leaks, seconds_since(t0)) +
              table};
}

// ---------------------------------------------------------------------------
// 8. Splitters

Manifest random_manifest(Rng& rng) {
  std::vector<ManifestRecord> recs;
  std::vector<std::string> names{"j", "e", "x", "a", "r", "k", "z", "c", "p", "d"};
  rng.shuffle(std::span(names));
  std::size_t n = 0;
  for (int session = 1; session <= 5; ++session) {
    for (int g = 0; g < 2; ++g) {
      const std::size_t count = 1 + rng.below(30);
      for (std::size_t i = 0; i < count; ++i) {
        ManifestRecord r;
        r.utterance_id = "r" + std::to_string(n++);
        r.wav_path = r.utterance_id + ".wav";
        r.session = session;
        r.speaker_id = names[static_cast<std::size_t>(2 * (session - 1) + g)];
        r.gender = g == 0 ? "F" : "M";
        r.label = static_cast<int>(rng.below(4));
        recs.push_back(r);
      }
    }
  }
  rng.shuffle(std::span(recs));
  return Manifest(std::move(recs));
}

bool valid_folds(const Manifest& m, const std::vector<Fold>& folds, std::size_t expected) {
  if (folds.size() != expected) return false;
  std::map<std::string, std::size_t> tested;
  for (const auto& f : folds) {
    std::set<std::string> train_spk;
    std::set<std::string> ids(f.train_ids.begin(), f.train_ids.end());
    for (const auto& id : f.train_ids) train_spk.insert(m.at(id).speaker_id);
    for (const auto& id : f.test_ids) {
      if (train_spk.count(m.at(id).speaker_id) != 0) return false;
      if (!ids.insert(id).second) return false;
      ++tested[id];
    }
    if (ids.size() != m.size()) return false;
  }
  if (tested.size() != m.size()) return false;
  return std::all_of(tested.begin(), tested.end(), [](const auto& kv) { return kv.second == 1; });
}

Outcome splitters() {
  Rng rng(8);
  std::size_t bad = 0;
  constexpr int kManifests = 200;
  for (int i = 0; i < kManifests; ++i) {
    const Manifest m = random_manifest(rng);
    if (!valid_folds(m, split_session(m), 5)) ++bad;
    if (!valid_folds(m, split_speaker(m), 10)) ++bad;
  }
  // Fixed predictions; repeating the (perfectly recognised) class-0 items
  // raises WA and leaves UA alone.
  const std::vector<int> truth{0, 0, 1, 1, 1, 2, 2, 3, 3, 3};
  const std::vector<int> pred{0, 0, 1, 2, 1, 2, 0, 3, 1, 3};
  const auto base = compute_metrics(pred, truth);
  std::vector<int> t2 = truth, p2 = pred;
  for (int k = 0; k < 5; ++k) {
    t2.insert(t2.end(), {0, 0});
    p2.insert(p2.end(), {0, 0});
  }
  const auto heavy = compute_metrics(p2, t2);
  const bool weighting = std::abs(heavy.ua - base.ua) < 1e-12 && heavy.wa - base.wa > 0.05;
  return {bad == 0 && weighting,
          fmt("%d random manifests, %zu invalid fold sets; reweighting WA %.4f -> %.4f, "
              "UA %.4f -> %.4f",
              kManifests, bad, base.wa, heavy.wa, base.ua, heavy.ua)};
}

// ---------------------------------------------------------------------------
// 9. Metrics oracle

Outcome metrics_oracle() {
  struct Case {
    std::vector<int> pred, truth;
    double wa, ua;
  };
  const Case cases[] = {
      {{0, 0, 0, 1, 1}, {0, 0, 0, 0, 1}, 4.0 / 5.0, (3.0 / 4.0 + 1.0) / 2.0},
      {{0, 0, 0, 0, 0, 0, 0, 0}, {0, 1, 2, 3, 0, 1, 2, 3}, 2.0 / 8.0, (1.0 + 0 + 0 + 0) / 4.0},
      {{0, 1, 2, 3}, {0, 1, 2, 3}, 1.0, 1.0},
      // Recalls 2/3, 1/2, 1, 0 over supports 3, 2, 1, 2.
      {{0, 0, 1, 1, 0, 2, 2, 1}, {0, 0, 0, 1, 1, 2, 3, 3}, 4.0 / 8.0, (2.0 / 3 + 0.5 + 1.0 + 0.0) / 4.0},
  };
  double worst = 0.0;
  for (const auto& c : cases) {
    const auto r = compute_metrics(c.pred, c.truth);
    worst = std::max({worst, std::abs(r.wa - c.wa), std::abs(r.ua - c.ua)});
  }
  return {worst < 1e-12, fmt("4 hand-computed cases, max deviation %.2g", worst)};
}

// ---------------------------------------------------------------------------
// 10. Determinism

Outcome determinism(Workspace& ws) {
  const auto t0 = Clock::now();
  std::size_t differing = 0, files = 0;
  for (const char* tag : {"a", "b"}) generate_corpus(ws.root / "det" / tag, SynthOptions{});
  for (const auto& e : fs::recursive_directory_iterator(ws.root / "det" / "a")) {
    if (!e.is_regular_file()) continue;
    ++files;
    const auto rel = fs::relative(e.path(), ws.root / "det" / "a");
    if (slurp(e.path()) != slurp(ws.root / "det" / "b" / rel)) ++differing;
  }
  // Also equal to the corpus used by the other criteria.
  const bool same_as_shared =
      slurp(ws.root / "det" / "a" / "manifest.csv") == slurp(ws.root / "corpus" / "manifest.csv");

  TrainConfig cfg = quick_config();
  cfg.max_epochs = 1;
  std::string ckpt[2], metrics[2];
  for (int run = 0; run < 2; ++run) {
    CrossValidationOptions opt;
    opt.out_dir = ws.root / "det" / ("train" + std::to_string(run));
    opt.max_folds = 1;
    cross_validate(ws.corpus_data(), ws.corpus_manifest(), SplitStrategy::kSession, cfg, opt);
    ckpt[run] = slurp(*opt.out_dir / "fold_0.ckpt");
    metrics[run] = slurp(*opt.out_dir / "metrics.jsonl");
  }
  const bool ok = differing == 0 && files == 201 && same_as_shared && !ckpt[0].empty() &&
                  ckpt[0] == ckpt[1] && metrics[0] == metrics[1];
  return {ok, fmt("corpus: %zu files, %zu differ; checkpoint %s (%zu bytes), metrics JSON %s, "
                  "%.0f s",
                  files, differing, ckpt[0] == ckpt[1] ? "identical" : "DIFFERS", ckpt[0].size(),
                  metrics[0] == metrics[1] ? "identical" : "DIFFERS", seconds_since(t0))};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance criteria"};
  std::string work = (fs::temp_directory_path() / "coattn_acceptance").string();
  std::vector<int> only;
  app.add_option("--work", work, "Scratch directory (recreated)");
  app.add_option("--only", only, "Run just these criteria")->check(CLI::Range(1, 10));
  CLI11_PARSE(app, argc, argv);

  Workspace ws;
  ws.root = work;
  fs::remove_all(ws.root);
  fs::create_directories(ws.root);

  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"gradient suite", gradients},
      {"DSP oracles", dsp_oracles},
      {"shape conformance", shapes},
      {"co-attention properties", coattention},
      {"overfit on the synthetic corpus", [&] { return overfit(ws); }},
      {"speaker-independent generalisation", [&] { return generalisation(ws); }},
      {"ablation harness", [&] { return ablation(ws); }},
      {"splitter properties", splitters},
      {"metrics oracle", metrics_oracle},
      {"determinism", [&] { return determinism(ws); }},
  };

  std::size_t failed = 0, ran = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i + 1);
    if (!only.empty() && std::find(only.begin(), only.end(), id) == only.end()) continue;
    Outcome out;
    try {
      out = criteria[i].second();
    } catch (const std::exception& e) {
      out = {false, std::string("exception: ") + e.what()};
    }
    ++ran;
    if (!out.pass) ++failed;
    std::printf("[%s] %2d %s: %s\n", out.pass ? "PASS" : "FAIL", id, criteria[i].first.c_str(),
                out.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%zu/%zu criteria passed\n", ran - failed, ran);
  return failed == 0 ? 0 : 1;
}
