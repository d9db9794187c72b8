// Copyright (C) 2026 The cmad authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <vector>

#include "cmad/aggregation.hpp"
#include "cmad/costs.hpp"
#include "cmad/diffgraph/mlp.hpp"
#include "cmad/score.hpp"

namespace cmad {

struct PolicySpec {
  int dim = 0;
  std::vector<int> nn1_hidden = {64, 64};
  std::vector<int> nn2_hidden = {16};
  int time_embed = 16;
  dg::Activation activation = dg::Activation::Silu;
  /// Constant output of the guidance gain network at construction.
  double nn2_init = 0.0;
};

/// Reward-informed control of one agent,
///   u^i = NN1([X^i, Y, g^i], t) + NN2(t) g^i,
/// where g^i is the detached gradient of the cost with respect to the agent's
/// Tweedie estimate. NN2 is scalar-valued and broadcast over the state.
/// NN1 starts with a zero head and NN2 as the constant `nn2_init`.
class ControlPolicy {
 public:
  ControlPolicy() = default;
  ControlPolicy(int agent, PolicySpec spec, const CounterRng& rng);

  int agent() const { return agent_; }
  int dim() const { return spec_.dim; }
  const PolicySpec& spec() const { return spec_; }

  /// x: B x d agent state, y: B x d aggregate, guidance: B x d.
  dg::Var eval(dg::Tape& tape, dg::Var x, dg::Var y, dg::Var guidance, double t) const;
  Matrix eval(const Matrix& x, const Matrix& y, const Matrix& guidance, double t) const;
  /// NN2(t), the current guidance gain.
  double gain(double t) const;

  dg::Mlp& nn1() { return nn1_; }
  dg::Mlp& nn2() { return nn2_; }
  const dg::Mlp& nn1() const { return nn1_; }
  const dg::Mlp& nn2() const { return nn2_; }

  std::vector<dg::Parameter*> parameters();
  std::vector<const dg::Parameter*> parameters() const;
  void set_trainable(bool trainable);

 private:
  int agent_ = 0;
  PolicySpec spec_;
  dg::Mlp nn1_;
  dg::Mlp nn2_;
};

/// Training-free guidance control -alpha_guid * grad_{X^i} Psi(Y0hat): a step
/// of size alpha_guid down the cost gradient taken through the Tweedie map
/// and the score model.
Matrix cdps_control(const Matrix& grad_wrt_state, double alpha_guid);

/// grad_{X^i} Psi(aggregate(Tweedie(X^j, S(X^j, t)))) for every agent,
/// differentiating through the score model.
std::vector<Matrix> cdps_guidance(const std::vector<Matrix>& agents, double t, const ScoreProvider& score,
                                  const MaskAggregator& agg, const TerminalCost& psi,
                                  const NoiseSchedule& schedule);

}  // namespace cmad
