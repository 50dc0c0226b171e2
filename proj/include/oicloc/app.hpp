// Copyright (C) 2026 The oicloc Authors
// SPDX-License-Identifier: Apache-2.0
//
// Command implementations behind the oicloc executable. Each command takes
// paths and options and writes its artifacts; nothing here touches argv.

#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "oicloc/baselines.hpp"
#include "oicloc/config.hpp"
#include "oicloc/eval.hpp"
#include "oicloc/gradcheck.hpp"
#include "oicloc/io.hpp"
#include "oicloc/log.hpp"
#include "oicloc/parallel.hpp"
#include "oicloc/pipeline.hpp"

namespace oicloc {

struct AppOptions {
  std::optional<std::uint64_t> seed;  // overrides the config's seed
  int workers = 1;
};

/// Reads a run config; manifest paths resolve against the config's directory.
inline RunConfig load_run_config(const fs::path& path, std::optional<std::uint64_t> seed = std::nullopt) {
  nlohmann::json j;
  try {
    j = read_json(path);
  } catch (const InputError& e) {
    throw ConfigError(e.what());
  }
  RunConfig c;
  try {
    c = parse_run_config(j);
  } catch (const ConfigError& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  if (seed) c.seed = *seed;
  const fs::path base = path.parent_path();
  for (std::string* m : {&c.train_manifest, &c.test_manifest}) {
    if (!m->empty() && fs::path(*m).is_relative()) *m = (base / *m).string();
  }
  return c;
}

/// Seed of the generated corpus, kept apart from the network's init stream.
inline std::uint64_t corpus_seed(const RunConfig& c) { return c.seed ^ stable_hash("synthetic-corpus"); }

/// Train and test halves of one generated corpus; both share the feature
/// projection.
inline std::pair<std::vector<VideoRecord>, std::vector<VideoRecord>> synth_split(const RunConfig& c) {
  if (!c.synth) throw ConfigError("config has no synth spec");
  if (c.synth_train_videos < 0 || c.synth_test_videos < 0)
    throw ConfigError("synth video counts must be non-negative");
  SynthSpec spec = *c.synth;
  spec.num_videos = c.synth_train_videos + c.synth_test_videos;
  auto all = synth_corpus(spec, corpus_seed(c));
  const auto cut = all.begin() + c.synth_train_videos;
  return {std::vector<VideoRecord>(all.begin(), cut), std::vector<VideoRecord>(cut, all.end())};
}

enum class Split { Train, Test };

/// Videos of one split: the manifest when the config names one, otherwise
/// the generated corpus.
inline std::vector<VideoRecord> load_split(const RunConfig& c, Split s) {
  const std::string& manifest = s == Split::Train ? c.train_manifest : c.test_manifest;
  if (!manifest.empty()) {
    try {
      return load_manifest(manifest, c.att_threshold);
    } catch (const InputError& e) {
      throw ConfigError(std::string("manifest ") + e.what());
    }
  }
  if (!c.synth)
    throw ConfigError(std::string("config names no ") + (s == Split::Train ? "train" : "test") +
                      "_manifest and has no synth spec");
  auto halves = synth_split(c);
  return s == Split::Train ? std::move(halves.first) : std::move(halves.second);
}

// ---------------------------------------------------------------------------
// train

struct TrainOutputs {
  fs::path checkpoint;
  fs::path log;
  long iterations = 0;  // optimizer iteration count after training
};

inline std::string train_log_header() { return "iteration,video_id,loss,kept,lr\n"; }

inline std::string train_log_row(const StepLog& l) {
  return std::to_string(l.iteration) + "," + l.video_id + "," + format_double(l.loss) + "," +
         std::to_string(l.kept) + "," + format_double(l.lr) + "\n";
}

/// Trains the regressor on the train split and writes checkpoint.json and
/// train_log.csv into `out_dir`. With `resume`, training continues from the
/// checkpoint's iteration.
inline TrainOutputs cmd_train(const fs::path& config_path, const fs::path& out_dir, const AppOptions& opt = {},
                              const std::optional<fs::path>& resume = std::nullopt) {
  const RunConfig cfg = load_run_config(config_path, opt.seed);
  const auto corpus = load_split(cfg, Split::Train);
  if (corpus.empty()) throw ConfigError("training corpus is empty");
  TrainState state = resume ? load_checkpoint(*resume, cfg.sgd) : fresh_state(cfg);
  if (!(state.net.config() == cfg.network()))
    throw ConfigError("checkpoint network does not match the config");

  std::string log = train_log_header();
  train(state, corpus, cfg, [&](const StepLog& l) {
    log += train_log_row(l);
    log_debug("iter " + std::to_string(l.iteration) + " " + l.video_id + " loss " + format_double(l.loss));
  });
  TrainOutputs out{out_dir / "checkpoint.json", out_dir / "train_log.csv", state.opt.iteration()};
  save_checkpoint(out.checkpoint, state);
  write_text(out.log, log);
  log_info("trained " + std::to_string(out.iterations) + " iterations -> " + out.checkpoint.string());
  return out;
}

// ---------------------------------------------------------------------------
// predict

enum class PredictMode { AutoLoc, Threshold, OicSelect, DirectOpt, InnerOnly };

inline PredictMode parse_predict_mode(const std::string& s) {
  if (s == "autoloc") return PredictMode::AutoLoc;
  if (s == "threshold") return PredictMode::Threshold;
  if (s == "oic_select") return PredictMode::OicSelect;
  if (s == "direct_opt") return PredictMode::DirectOpt;
  if (s == "inner_only") return PredictMode::InnerOnly;
  throw UsageError("unknown mode '" + s + "' (autoloc|threshold|oic_select|direct_opt|inner_only)");
}

inline bool mode_needs_checkpoint(PredictMode m) { return m == PredictMode::AutoLoc || m == PredictMode::InnerOnly; }

/// Runs one detector over `videos`, videos spread over `workers` threads.
/// `net` is required for autoloc and inner_only.
inline std::vector<Prediction> predict_corpus(const RunConfig& cfg, const std::vector<VideoRecord>& videos,
                                              PredictMode mode, const NetworkB* net, int workers,
                                              std::optional<double> tau = std::nullopt) {
  if (mode_needs_checkpoint(mode) && !net) throw UsageError("this mode needs a checkpoint");
  const double t = tau.value_or(cfg.threshold_tau);
  auto per_video = parallel_map(videos.size(), workers, [&](std::size_t i) {
    const VideoRecord& v = videos[i];
    switch (mode) {
      case PredictMode::AutoLoc: return predict_autoloc(*net, v, cfg);
      case PredictMode::Threshold: return threshold_localize_video(v, t);
      case PredictMode::OicSelect: return oic_selection_video(v, cfg);
      case PredictMode::DirectOpt: return direct_optimize(v, cfg);
      case PredictMode::InnerOnly: return predict_inner_only(*net, v, cfg);
    }
    return std::vector<Prediction>{};
  });
  std::vector<Prediction> out;
  for (auto& p : per_video) out.insert(out.end(), p.begin(), p.end());
  return out;
}

/// Predicts on the test split and writes JSON lines to `out_path`.
inline std::vector<Prediction> cmd_predict(const fs::path& config_path, const std::optional<fs::path>& checkpoint,
                                           const std::string& mode_name, const fs::path& out_path,
                                           const AppOptions& opt = {}) {
  const PredictMode mode = parse_predict_mode(mode_name);
  const RunConfig cfg = load_run_config(config_path, opt.seed);
  std::optional<TrainState> state;
  if (mode_needs_checkpoint(mode)) {
    if (!checkpoint) throw UsageError("mode " + mode_name + " needs --checkpoint");
    state = load_checkpoint(*checkpoint, cfg.sgd);
  }
  const auto videos = load_split(cfg, Split::Test);
  auto preds = predict_corpus(cfg, videos, mode, state ? &state->net : nullptr, opt.workers);
  write_predictions(out_path, preds);
  log_info(std::to_string(preds.size()) + " predictions -> " + out_path.string());
  sort_for_eval(preds);
  return preds;
}

// ---------------------------------------------------------------------------
// eval

inline void write_report(const fs::path& out_dir, const EvalReport& r) {
  write_text(out_dir / "report.json", report_json(r).dump(2) + "\n");
  write_text(out_dir / "report.csv", report_csv(r));
}

inline EvalReport evaluate(const std::vector<Prediction>& preds, const std::vector<VideoRecord>& videos,
                           const std::string& profile, ApMode mode = ApMode::Envelope) {
  return map_report(preds, collect_ground_truth(videos), thresholds_for_profile(profile), mode);
}

/// Scores a predictions file against a manifest's ground truth.
inline EvalReport cmd_eval(const fs::path& pred_path, const fs::path& manifest, const std::string& profile,
                           const std::optional<fs::path>& out_dir = std::nullopt, ApMode mode = ApMode::Envelope) {
  const auto preds = read_predictions(pred_path);
  const auto videos = load_manifest(manifest);
  const EvalReport r = evaluate(preds, videos, profile, mode);
  if (out_dir) write_report(*out_dir, r);
  return r;
}

// ---------------------------------------------------------------------------
// synth

struct SynthOutputs {
  fs::path train_manifest;
  fs::path test_manifest;
};

/// Writes the generated corpus as train/ and test/ manifests with their CSVs.
inline SynthOutputs cmd_synth(const fs::path& config_path, const fs::path& out_dir, const AppOptions& opt = {}) {
  const RunConfig cfg = load_run_config(config_path, opt.seed);
  const auto [train_set, test_set] = synth_split(cfg);
  SynthOutputs out{out_dir / "train" / "manifest.json", out_dir / "test" / "manifest.json"};
  save_manifest(out.train_manifest, train_set);
  save_manifest(out.test_manifest, test_set);
  SynthSpec spec = *cfg.synth;
  spec.num_videos = cfg.synth_train_videos + cfg.synth_test_videos;
  nlohmann::json meta = synth_spec_to_json(spec);
  write_text(out_dir / "synth_spec.json", meta.dump(2) + "\n");
  return out;
}

// ---------------------------------------------------------------------------
// gradcheck

inline GradcheckReport cmd_gradcheck(std::uint64_t seed) {
  GradcheckOptions o;
  o.seed = seed;
  return run_gradcheck(o);
}

// ---------------------------------------------------------------------------
// ablate

struct AblationRow {
  std::string method;  // autoloc | direct_opt | oic_select | inner_only | threshold
  double alpha = 0.0;
  std::optional<double> tau;
  EvalReport report;
  std::vector<Prediction> preds;
};

struct AblationTable {
  std::vector<double> thresholds;
  std::vector<AblationRow> rows;
  double main_alpha = 0.25;

  const AblationRow& row(const std::string& method, std::optional<double> alpha = std::nullopt) const {
    for (const auto& r : rows)
      if (r.method == method && (!alpha || std::abs(r.alpha - *alpha) < 1e-12)) return r;
    throw InputError("no ablation row for " + method);
  }

  /// The trained regressor at the configured alpha.
  const AblationRow& autoloc() const { return row("autoloc", main_alpha); }

  const AblationRow& best_threshold(double iou) const {
    const AblationRow* best = nullptr;
    for (const auto& r : rows)
      if (r.method == "threshold" && (!best || r.report.map_at(iou) > best->report.map_at(iou))) best = &r;
    if (!best) throw InputError("no threshold rows");
    return *best;
  }

  std::string csv() const {
    std::string s = "method,alpha,tau";
    for (double th : thresholds) s += ",mAP@" + threshold_key(th);
    s += ",avg\n";
    for (const auto& r : rows) {
      s += r.method + "," + format_double(r.alpha) + "," + (r.tau ? format_double(*r.tau) : std::string());
      for (const auto& row : r.report.rows) s += "," + format_double(row.map);
      s += "," + format_double(r.report.avg_map) + "\n";
    }
    return s;
  }
};

namespace detail {

inline std::string plot_intervals_csv(const VideoRecord& v, const std::vector<std::pair<std::string, const std::vector<Prediction>*>>& sources) {
  std::string s = "source,class,start_s,end_s,score\n";
  for (const auto& g : v.gt)
    s += "gt," + std::to_string(g.cls) + "," + format_double(g.start_s) + "," + format_double(g.end_s) + ",\n";
  for (const auto& [name, preds] : sources) {
    std::vector<Prediction> mine;
    for (const auto& p : *preds)
      if (p.video_id == v.video_id) mine.push_back(p);
    sort_for_eval(mine);
    for (const auto& p : mine)
      s += name + "," + std::to_string(p.cls) + "," + format_double(p.start_s) + "," + format_double(p.end_s) +
           "," + format_double(p.score) + "\n";
  }
  return s;
}

}  // namespace detail

/// The trained regressor across the alpha sweep, the three learning/selection variants and
/// the thresholding sweep, all on the same train/test corpus. Writes
/// ablation.csv plus per-video plot data for the first `plot_videos` test
/// videos under plots/. `out_dir` may be empty to skip writing.
inline AblationTable cmd_ablate(const fs::path& config_path, const fs::path& out_dir, const AppOptions& opt = {},
                                int plot_videos = 5) {
  const RunConfig cfg = load_run_config(config_path, opt.seed);
  const auto train_set = load_split(cfg, Split::Train);
  const auto test_set = load_split(cfg, Split::Test);
  if (train_set.empty()) throw ConfigError("training corpus is empty");
  const auto gts = collect_ground_truth(test_set);
  const auto thresholds = thresholds_for_profile(cfg.eval_profile);

  AblationTable table;
  table.thresholds = thresholds;
  table.main_alpha = cfg.alpha;
  auto add = [&](std::string method, double alpha, std::optional<double> tau, std::vector<Prediction> preds) {
    EvalReport rep = map_report(preds, gts, thresholds, cfg.ap_mode);
    log_info(method + " alpha " + format_double(alpha) + " mAP avg " + format_double(rep.avg_map));
    table.rows.push_back({std::move(method), alpha, tau, std::move(rep), std::move(preds)});
  };

  std::vector<double> alphas = cfg.alpha_sweep;
  if (std::find(alphas.begin(), alphas.end(), cfg.alpha) == alphas.end()) alphas.insert(alphas.begin(), cfg.alpha);
  for (double a : alphas) {
    RunConfig c = cfg;
    c.alpha = a;
    c.train_loss = LossKind::Oic;
    TrainState st = fresh_state(c);
    train(st, train_set, c);
    add("autoloc", a, std::nullopt, predict_corpus(c, test_set, PredictMode::AutoLoc, &st.net, opt.workers));
  }
  add("direct_opt", cfg.alpha, std::nullopt, predict_corpus(cfg, test_set, PredictMode::DirectOpt, nullptr, opt.workers));
  add("oic_select", cfg.alpha, std::nullopt, predict_corpus(cfg, test_set, PredictMode::OicSelect, nullptr, opt.workers));
  {
    const TrainState st = train_inner_only(train_set, cfg);
    add("inner_only", cfg.alpha, std::nullopt, predict_corpus(cfg, test_set, PredictMode::InnerOnly, &st.net, opt.workers));
  }
  for (double tau : cfg.threshold_taus)
    add("threshold", cfg.alpha, tau, predict_corpus(cfg, test_set, PredictMode::Threshold, nullptr, opt.workers, tau));

  if (!out_dir.empty()) {
    write_text(out_dir / "ablation.csv", table.csv());
    const double mid = thresholds[thresholds.size() / 2];
    const std::vector<std::pair<std::string, const std::vector<Prediction>*>> sources{
        {"autoloc", &table.autoloc().preds},
        {"direct_opt", &table.row("direct_opt").preds},
        {"oic_select", &table.row("oic_select").preds},
        {"inner_only", &table.row("inner_only").preds},
        {"threshold", &table.best_threshold(mid).preds}};
    const std::size_t n = std::min(test_set.size(), static_cast<std::size_t>(std::max(plot_videos, 0)));
    for (std::size_t i = 0; i < n; ++i) {
      const VideoRecord& v = test_set[i];
      write_cas_csv(out_dir / "plots" / (v.video_id + "_cas.csv"), v.cas);
      write_text(out_dir / "plots" / (v.video_id + "_intervals.csv"), detail::plot_intervals_csv(v, sources));
    }
  }
  return table;
}

}  // namespace oicloc
