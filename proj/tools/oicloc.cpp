// Copyright (C) 2026 The oicloc Authors
// SPDX-License-Identifier: Apache-2.0
//
// oicloc: train, predict, eval, synth, gradcheck, ablate.

#include <cstdint>
#include <iomanip>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "oicloc/app.hpp"

namespace {

using namespace oicloc;

// exit codes
constexpr int kOk = 0;
constexpr int kCheckFailed = 1;
constexpr int kBadInput = 2;

void print_report(const EvalReport& r) {
  std::cout << std::fixed << std::setprecision(4);
  for (const auto& row : r.rows) std::cout << "mAP@" << threshold_key(row.threshold) << " " << row.map << "\n";
  std::cout << "avg " << r.avg_map << "\n" << std::defaultfloat;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Weakly supervised temporal action localization with the outer-inner-contrastive loss"};
  app.require_subcommand(1);

  std::string config, out, checkpoint, resume, mode, predictions, manifest, profile;
  std::optional<std::uint64_t> seed;
  int workers = 1;
  int plot_videos = 5;

  auto add_common = [&](CLI::App* sub, bool with_workers) {
    sub->add_option("--seed", seed, "override the config seed");
    if (with_workers) sub->add_option("--workers", workers, "worker threads for per-video work")->check(CLI::PositiveNumber);
  };

  auto* train = app.add_subcommand("train", "train the boundary regressor");
  train->add_option("--config", config, "run config JSON")->required()->check(CLI::ExistingFile);
  train->add_option("--out", out, "output directory")->required();
  train->add_option("--resume", resume, "checkpoint to continue from")->check(CLI::ExistingFile);
  add_common(train, false);

  auto* predict = app.add_subcommand("predict", "localize actions in the test split");
  predict->add_option("--config", config, "run config JSON")->required()->check(CLI::ExistingFile);
  predict->add_option("--checkpoint", checkpoint, "trained checkpoint")->check(CLI::ExistingFile);
  predict->add_option("--mode", mode, "autoloc|threshold|oic_select|direct_opt|inner_only")->required();
  predict->add_option("--out", out, "predictions file (JSON lines)")->required();
  add_common(predict, true);

  auto* eval = app.add_subcommand("eval", "score predictions against ground truth");
  eval->add_option("--predictions", predictions, "predictions file")->required()->check(CLI::ExistingFile);
  auto* man_opt = eval->add_option("--manifest", manifest, "manifest with ground truth")->check(CLI::ExistingFile);
  auto* cfg_opt = eval->add_option("--config", config, "run config; its test split supplies ground truth")
                      ->check(CLI::ExistingFile);
  man_opt->excludes(cfg_opt);
  eval->add_option("--profile", profile, "thumos|activitynet");
  eval->add_option("--out", out, "directory for report.json and report.csv");
  add_common(eval, false);

  auto* synth = app.add_subcommand("synth", "write a synthetic train/test corpus");
  synth->add_option("--config", config, "run config JSON with a synth spec")->required()->check(CLI::ExistingFile);
  synth->add_option("--out", out, "output directory")->required();
  add_common(synth, false);

  auto* gradcheck = app.add_subcommand("gradcheck", "run the numerical gradient suites");
  gradcheck->add_option("--seed", seed, "case generator seed");

  auto* ablate = app.add_subcommand("ablate", "compare detectors and inflation ratios on one corpus");
  ablate->add_option("--config", config, "run config JSON")->required()->check(CLI::ExistingFile);
  ablate->add_option("--out", out, "output directory")->required();
  ablate->add_option("--plot-videos", plot_videos, "test videos to dump plot data for");
  add_common(ablate, true);

  CLI11_PARSE(app, argc, argv);

  const AppOptions opt{seed, workers};
  try {
    if (*train) {
      const auto r = cmd_train(config, out, opt, resume.empty() ? std::nullopt : std::optional<fs::path>(resume));
      std::cout << "iterations " << r.iterations << "\ncheckpoint " << r.checkpoint.string() << "\nlog "
                << r.log.string() << "\n";
    } else if (*predict) {
      const auto preds = cmd_predict(config, checkpoint.empty() ? std::nullopt : std::optional<fs::path>(checkpoint),
                                     mode, out, opt);
      std::cout << preds.size() << " predictions written to " << out << "\n";
    } else if (*eval) {
      std::vector<Prediction> preds = read_predictions(fs::path(predictions));
      std::vector<VideoRecord> videos;
      std::string prof = profile;
      ApMode ap = ApMode::Envelope;
      if (!manifest.empty()) {
        videos = load_manifest(manifest);
        if (prof.empty()) prof = "thumos";
      } else if (!config.empty()) {
        const RunConfig cfg = load_run_config(config, opt.seed);
        videos = load_split(cfg, Split::Test);
        if (prof.empty()) prof = cfg.eval_profile;
        ap = cfg.ap_mode;
      } else {
        throw UsageError("eval needs --manifest or --config");
      }
      const EvalReport r = evaluate(preds, videos, prof, ap);
      if (!out.empty()) write_report(out, r);
      print_report(r);
    } else if (*synth) {
      const auto r = cmd_synth(config, out, opt);
      std::cout << "train " << r.train_manifest.string() << "\ntest " << r.test_manifest.string() << "\n";
    } else if (*gradcheck) {
      const GradcheckReport r = cmd_gradcheck(seed.value_or(0));
      std::cout << r.text();
      return r.passed() ? kOk : kCheckFailed;
    } else if (*ablate) {
      const AblationTable t = cmd_ablate(config, out, opt, plot_videos);
      std::cout << t.csv();
    }
  } catch (const ParseError& e) {
    std::cerr << "parse error: " << e.what() << "\n";
    return kBadInput;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kBadInput;
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kBadInput;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kBadInput;
  } catch (const std::exception& e) {
    std::cerr << "unexpected error: " << e.what() << "\n";
    return kBadInput;
  }
  return kOk;
}
