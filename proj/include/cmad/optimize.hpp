// Copyright (C) 2026 The cmad authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <functional>
#include <vector>

#include "cmad/aggregation.hpp"
#include "cmad/control.hpp"
#include "cmad/costs.hpp"
#include "cmad/errors.hpp"
#include "cmad/noise.hpp"
#include "cmad/score.hpp"
#include "cmad/sde.hpp"

namespace cmad {

/// Shared, read-only pieces of the coupled system.
struct RolloutSetup {
  const ScoreProvider* score = nullptr;
  const MaskAggregator* agg = nullptr;
  const TerminalCost* psi = nullptr;
  SocConfig cfg;
  NoiseSchedule schedule;
  TimeGrid grid;

  int num_agents() const { return agg->num_agents(); }
  int dim() const { return agg->dim(); }
  void validate() const;
};

/// How the per-step control is produced.
enum class ControlMode {
  Learned,  // ControlPolicy per agent
  Cdps,     // -alpha_guid grad_X Psi through Tweedie and the score model
  None,     // uncontrolled reverse SDE
};

struct RolloutRecord {
  int batch = 0;
  /// Batch-mean loss terms accumulated along the rollout.
  ObjectiveValue objective;
  /// Per-step values, filled only when trajectories are kept.
  RolloutTerms terms;
  /// states[k][i] for k = 0..K-1.
  std::vector<std::vector<Matrix>> states;
  /// denoised[k][i] Tweedie estimates for k = 0..K-2.
  std::vector<std::vector<Matrix>> denoised;
  /// Y_{t_k} and the aggregated Tweedie estimate for k = 0..K-2.
  std::vector<Matrix> aggregated;
  std::vector<Matrix> aggregated_denoised;
  /// Final agent states and Y_{t_{K-1}}.
  std::vector<Matrix> final_agents;
  Matrix terminal_y;
};

struct RolloutResult {
  /// Differentiable objective J (1x1) on the caller's tape.
  dg::Var objective;
  RolloutRecord record;
};

/// Simulates `batch` coupled controlled trajectories with Euler-Maruyama on
/// one tape and returns the differentiable Monte Carlo objective
///   J = sum_i lambda^i sum_k dt ||u^i_k||^2 + alpha_run sum_k w(t_k) Psi(Y0hat_k) dt + Psi(Y_T),
/// averaged over the batch. Noise comes from `noise`: stream(0).stream(i) for
/// the initial state of agent i and stream(k + 1).stream(i) for step k.
/// Throws DivergenceError naming the step on a non-finite state.
RolloutResult bptt_rollout(dg::Tape& tape, const std::vector<ControlPolicy>& policies, const RolloutSetup& setup,
                           const CounterRng& noise, int batch, bool keep_trajectory = false);

/// Same dynamics without a persistent tape (no gradients). `policies` is used
/// only in Learned mode, `alpha_guid` only in Cdps mode.
RolloutRecord simulate(ControlMode mode, const std::vector<ControlPolicy>* policies, double alpha_guid,
                       const RolloutSetup& setup, const CounterRng& noise, int batch, bool keep_trajectory = false);

enum class TrainMode { Joint, ControlWise, CdpsOnly };
enum class AgentOrder { Ascending, Shuffle };

struct TrainPlan {
  TrainMode mode = TrainMode::Joint;
  /// Joint: number of gradient updates. Control-wise: outer iterations.
  int iterations = 1000;
  /// Control-wise inner updates per agent (M).
  int inner_steps = 5;
  int batch = 16;
  double lr = 1e-4;
  double lr_aggregator = 1e-4;
  std::uint64_t seed = 0;
  AgentOrder order = AgentOrder::Ascending;

  void validate() const;
  /// Number of gradient updates the plan performs for `num_agents` agents.
  long total_updates(int num_agents) const;
};

struct CurvePoint {
  long update = 0;
  int outer = 0;
  /// Active agent in control-wise mode, -1 for joint updates.
  int agent = -1;
  double l_u = 0.0;
  double l_c = 0.0;
  double l_psi = 0.0;
  double objective = 0.0;
};

struct TrainResult {
  std::vector<CurvePoint> curve;
  double final_lr = 0.0;
  int lr_halvings = 0;
};

/// Raised when a rollout diverges twice in a row (once more after halving the
/// learning rate). Carries the curve up to the failure.
class TrainingDiverged : public DivergenceError {
 public:
  TrainingDiverged(const std::string& what, int step, TrainResult partial)
      : DivergenceError(what, step), partial_(std::move(partial)) {}
  const TrainResult& partial() const { return partial_; }

 private:
  TrainResult partial_;
};

/// Called after every gradient update with the curve point just recorded.
using UpdateObserver = std::function<void(const CurvePoint&)>;

/// Updates all policies simultaneously for plan.iterations steps.
TrainResult joint_ido(std::vector<ControlPolicy>& policies, MaskAggregator& agg, const RolloutSetup& setup,
                      const TrainPlan& plan, const UpdateObserver& observer = {});

/// Coordinate descent over agents: for each outer iteration and each agent,
/// plan.inner_steps updates of that agent's policy with all others frozen.
TrainResult controlwise_ido(std::vector<ControlPolicy>& policies, MaskAggregator& agg, const RolloutSetup& setup,
                            const TrainPlan& plan, const UpdateObserver& observer = {});

/// Guidance baseline over `batch` trajectories; no parameters change.
RolloutRecord sample_cdps(const RolloutSetup& setup, double alpha_guid, const CounterRng& noise, int batch);

/// Single-state reverse SDE whose score term is the sum of the given scores.
Matrix sample_poe_naive(const std::vector<const ScoreProvider*>& scores, const NoiseSchedule& schedule,
                        const TimeGrid& grid, const CounterRng& noise, int batch);

}  // namespace cmad
