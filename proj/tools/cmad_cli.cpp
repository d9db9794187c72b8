// Copyright (C) 2026 The cmad authors
// SPDX-License-Identifier: Apache-2.0

#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include "cmad/diffgraph/checkpoint.hpp"
#include "cmad/errors.hpp"
#include "cmad/harness/experiment.hpp"

using namespace cmad;
using namespace cmad::harness;

namespace {

struct Common {
  std::string config_path;
  std::map<std::string, std::string> overrides;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("-c,--config", c.config_path, "key = value experiment config file");
  for (const std::string& key : config_keys()) {
    cmd->add_option_function<std::string>(
        "--" + key, [&c, key](const std::string& v) { c.overrides[key] = v; }, "config key " + key);
  }
}

ExperimentConfig build_config(const Common& c) {
  ExperimentConfig cfg = c.config_path.empty() ? ExperimentConfig{} : load_config(c.config_path);
  for (const auto& [k, v] : c.overrides) {
    try {
      apply_setting(cfg, k, v);
    } catch (const ConfigError& e) {
      throw ConfigError(std::string("--") + e.what());
    }
  }
  cfg.validate();
  return cfg;
}

void print_metrics(const Metrics& m) { std::cout << metrics_csv(m); }

std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p);
  if (!in) throw IoError("cannot read " + p.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

int cmd_train_score(const Common& c) {
  ExperimentConfig cfg = build_config(c);
  if (cfg.score_checkpoint.empty()) cfg.score_checkpoint = (resolve_output(cfg) / "score.ckpt").string();
  std::filesystem::create_directories(std::filesystem::path(cfg.score_checkpoint).parent_path());
  NetworkScore model = make_score_network(cfg);
  const std::vector<double> curve = train_score_model(model, cfg);
  const auto params = std::as_const(model.net()).parameters();
  dg::save_checkpoint(cfg.score_checkpoint, params);
  std::printf("score model: %d steps, final loss %.6g, saved to %s\n", cfg.score_steps, curve.back(),
              cfg.score_checkpoint.c_str());
  return 0;
}

int cmd_train_classifier(const Common& c) {
  ExperimentConfig cfg = build_config(c);
  if (cfg.task != Task::Shapes16) throw ConfigError("train-classifier needs task = shapes16");
  if (cfg.classifier_checkpoint.empty()) {
    cfg.classifier_checkpoint = (resolve_output(cfg) / "classifier.ckpt").string();
  }
  std::filesystem::create_directories(std::filesystem::path(cfg.classifier_checkpoint).parent_path());
  const ClassifierReport rep = train_shape_classifier(cfg);
  save_classifier(cfg.classifier_checkpoint, *rep.classifier);
  std::printf("classifier: held-out accuracy %.4f, saved to %s\n", rep.held_out_accuracy,
              cfg.classifier_checkpoint.c_str());
  return 0;
}

int cmd_run(const Common& c, bool train) {
  const ExperimentConfig cfg = build_config(c);
  const RunOutput out = run_experiment(cfg, RunOptions{.train = train, .write = true});
  print_metrics(out.metrics);
  std::printf("artifacts in %s\n", out.dir.string().c_str());
  return 0;
}

int cmd_report(const std::vector<std::string>& dirs) {
  bool header = false;
  for (const std::string& d : dirs) {
    const std::string text = read_file(std::filesystem::path(d) / "metrics.csv");
    const auto nl = text.find('\n');
    if (!header) {
      std::cout << "run," << text.substr(0, nl + 1);
      header = true;
    }
    std::istringstream rows(text.substr(nl + 1));
    std::string row;
    while (std::getline(rows, row)) {
      if (!row.empty()) std::cout << d << "," << row << "\n";
    }
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"cmad: cooperative multi-agent diffusion control"};
  app.require_subcommand(1);

  Common score_opts, clf_opts, run_opts, sample_opts;
  auto* train_score = app.add_subcommand("train-score", "train the score network and save a checkpoint");
  add_common(train_score, score_opts);
  auto* train_clf = app.add_subcommand("train-classifier", "train the shapes classifier and save a checkpoint");
  add_common(train_clf, clf_opts);
  auto* run = app.add_subcommand("run", "train the selected method (if learned), evaluate and write artifacts");
  add_common(run, run_opts);
  auto* sample = app.add_subcommand("sample", "evaluate with policies loaded from policy_checkpoint");
  add_common(sample, sample_opts);
  std::vector<std::string> report_dirs;
  auto* report = app.add_subcommand("report", "tabulate metrics.csv from run directories");
  report->add_option("dirs", report_dirs, "run directories")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (*train_score) return cmd_train_score(score_opts);
    if (*train_clf) return cmd_train_classifier(clf_opts);
    if (*run) return cmd_run(run_opts, true);
    if (*sample) return cmd_run(sample_opts, false);
    if (*report) return cmd_report(report_dirs);
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const DivergenceError& e) {
    std::fprintf(stderr, "diverged: %s\n", e.what());
    return 3;
  } catch (const IoError& e) {
    std::fprintf(stderr, "i/o error: %s\n", e.what());
    return 4;
  } catch (const std::filesystem::filesystem_error& e) {
    std::fprintf(stderr, "i/o error: %s\n", e.what());
    return 4;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 1;
}
