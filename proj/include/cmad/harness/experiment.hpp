// Copyright (C) 2026 The cmad authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "cmad/harness/classifier.hpp"
#include "cmad/harness/config.hpp"
#include "cmad/optimize.hpp"
#include "cmad/score.hpp"

namespace cmad::harness {

/// Four equally weighted components at (+-2, +-2) with standard deviation 0.5;
/// component 0 sits at (2, 2).
GaussianMixture gmm2d_data();

struct TaskAssets {
  Task task = Task::Gmm2d;
  int height = 0;
  int width = 0;
  std::shared_ptr<ScoreProvider> score;
  std::shared_ptr<const Classifier> classifier;
  GaussianMixture data;

  int dim() const { return score ? score->dim() : 0; }
};

NetworkScore make_score_network(const ExperimentConfig& cfg);
/// Trains a fresh score network on the task data and returns its loss curve.
std::vector<double> train_score_model(NetworkScore& model, const ExperimentConfig& cfg);
ClassifierReport train_shape_classifier(const ExperimentConfig& cfg);

/// Loads the score model and classifier the task needs from the configured
/// checkpoints, training (and saving, when a path is set) whatever is missing.
TaskAssets prepare_assets(const ExperimentConfig& cfg);

MaskAggregator make_aggregator(const ExperimentConfig& cfg, const TaskAssets& assets);
TerminalCost make_terminal(const ExperimentConfig& cfg, const TaskAssets& assets, const MaskAggregator& agg);
std::vector<ControlPolicy> make_policies(const ExperimentConfig& cfg, int dim);
void save_policies(const std::string& path, const std::vector<ControlPolicy>& policies);
void load_policies(const std::string& path, std::vector<ControlPolicy>& policies);

struct Metrics {
  std::string task;
  std::string method;
  int num_agents = 0;
  int samples = 0;
  long updates = 0;
  double mean_psi = 0.0;
  double accuracy = 0.0;
  double l_u = 0.0;
  double l_c = 0.0;
  double objective = 0.0;
};

struct RunOptions {
  /// Train learned policies; otherwise load them from cfg.policy_checkpoint.
  bool train = true;
  /// Write the run artifacts under resolve_output(cfg).
  bool write = true;
};

struct RunOutput {
  Metrics metrics;
  TrainResult training;
  /// Aggregated evaluation samples, one per row.
  Matrix samples;
  std::vector<Matrix> agent_samples;
  std::vector<ControlPolicy> policies;
  std::filesystem::path dir;
};

RunOutput run_experiment(const ExperimentConfig& cfg, const TaskAssets& assets, const RunOptions& opts = {});
RunOutput run_experiment(const ExperimentConfig& cfg, const RunOptions& opts = {});

std::string metrics_csv(const Metrics& m);
std::string curve_csv(const TrainResult& r);

/// Artifact names every run writes.
std::vector<std::string> report_files();

}  // namespace cmad::harness
