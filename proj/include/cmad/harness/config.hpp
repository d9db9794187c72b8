// Copyright (C) 2026 The cmad authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "cmad/control.hpp"
#include "cmad/costs.hpp"
#include "cmad/optimize.hpp"
#include "cmad/score.hpp"
#include "cmad/sde.hpp"

namespace cmad::harness {

enum class Task { Gmm2d, Shapes16 };
enum class Method { CmadJoint, CmadControlWise, Cdps, PoeNaive, Uncontrolled };
enum class TerminalKind { Classifier, Gaussian, Quadratic };

std::string to_string(Task t);
std::string to_string(Method m);
std::string to_string(TerminalKind k);
Method parse_method(const std::string& s);

struct ExperimentConfig {
  Task task = Task::Gmm2d;
  Method method = Method::CmadJoint;
  std::uint64_t seed = 0;

  int num_agents = 2;
  std::string mask = "halves";

  NoiseSchedule schedule;
  int steps = 500;
  double eps = 1e-3;

  SocConfig soc;
  TerminalKind terminal = TerminalKind::Gaussian;
  double terminal_std = 0.5;
  double cdps_scale = 100.0;

  int joint_updates = 1000;
  int outer_iterations = 300;
  int inner_steps = 5;
  int batch = 16;
  double lr = 1e-4;
  double lr_aggregator = 1e-4;
  AgentOrder agent_order = AgentOrder::Ascending;
  int checkpoint_every = 0;

  std::vector<int> nn1_hidden = {64, 64};
  std::vector<int> nn2_hidden = {16};
  int time_embed = 16;
  double nn2_init = 0.0;

  int eval_samples = 1024;
  int eval_batch = 256;

  std::string output_dir = "run";
  std::string score_checkpoint;
  std::string classifier_checkpoint;
  std::string policy_checkpoint;

  ScoreParam score_param = ScoreParam::Denoiser;
  std::vector<int> score_hidden = {256, 256};
  int score_steps = 3000;
  int score_batch = 128;
  double score_lr = 1e-3;
  std::vector<int> classifier_hidden = {64};
  int classifier_steps = 1500;
  double classifier_lr = 1e-3;
  int dataset_size = 2000;

  /// Throws ConfigError naming the offending key.
  void validate() const;
  /// Canonical key = value listing of every field, in schema order.
  std::string to_text() const;
  /// Train plan implied by the method and budgets.
  TrainPlan plan() const;
  PolicySpec policy_spec(int dim) const;
  TimeGrid grid() const;
};

/// Sets one field from its textual value. Throws ConfigError for unknown keys
/// or malformed values.
void apply_setting(ExperimentConfig& cfg, const std::string& key, const std::string& value);

/// Names of all recognised keys in schema order.
std::vector<std::string> config_keys();

/// Parses "key = value" lines ('#' starts a comment). Errors carry
/// "<origin>:<line>:" prefixes.
ExperimentConfig parse_config(const std::string& text, const std::string& origin = "<config>");
ExperimentConfig load_config(const std::filesystem::path& path);

/// CMAD_OUTPUT_ROOT if set, otherwise the current directory.
std::filesystem::path output_root();
/// Output directory of a run: output_dir resolved against output_root().
std::filesystem::path resolve_output(const ExperimentConfig& cfg);

}  // namespace cmad::harness
