// Copyright (C) 2026 The cmad authors
// SPDX-License-Identifier: Apache-2.0

#include "cmad/control.hpp"

#include "cmad/diffgraph/ops.hpp"
#include "cmad/errors.hpp"

namespace cmad {

ControlPolicy::ControlPolicy(int agent, PolicySpec spec, const CounterRng& rng)
    : agent_(agent), spec_(std::move(spec)) {
  if (spec_.dim < 1) {
    throw ConfigError("policy dimension must be positive");
  }
  const std::string prefix = "policy" + std::to_string(agent);
  nn1_ = dg::Mlp({.input_dim = 3 * spec_.dim,
                  .hidden = spec_.nn1_hidden,
                  .output_dim = spec_.dim,
                  .activation = spec_.activation,
                  .time_embed = spec_.time_embed},
                 rng.stream(1), prefix + ".nn1");
  nn2_ = dg::Mlp({.input_dim = 0,
                  .hidden = spec_.nn2_hidden,
                  .output_dim = 1,
                  .activation = spec_.activation,
                  .time_embed = spec_.time_embed},
                 rng.stream(2), prefix + ".nn2");
  nn1_.zero_head();
  nn2_.constant_output(spec_.nn2_init);
}

dg::Var ControlPolicy::eval(dg::Tape& tape, dg::Var x, dg::Var y, dg::Var guidance, double t) const {
  if (x.cols() != spec_.dim || y.cols() != spec_.dim || guidance.cols() != spec_.dim || y.rows() != x.rows() ||
      guidance.rows() != x.rows()) {
    throw ShapeError("policy inputs must all be B x " + std::to_string(spec_.dim));
  }
  dg::Var drift = nn1_.forward(tape, dg::concat_cols({x, y, guidance}), t);
  dg::Var gain = nn2_.forward(tape, tape.constant(Matrix(1, 0)), t);
  return dg::add(drift, dg::scale_rows(guidance, gain));
}

Matrix ControlPolicy::eval(const Matrix& x, const Matrix& y, const Matrix& guidance, double t) const {
  dg::Tape tape;
  return eval(tape, tape.constant(x), tape.constant(y), tape.constant(guidance), t).value();
}

double ControlPolicy::gain(double t) const { return nn2_.eval(Matrix(1, 0), t)(0, 0); }

std::vector<dg::Parameter*> ControlPolicy::parameters() {
  auto out = nn1_.parameters();
  for (auto* p : nn2_.parameters()) out.push_back(p);
  return out;
}

std::vector<const dg::Parameter*> ControlPolicy::parameters() const {
  auto out = nn1_.parameters();
  for (const auto* p : nn2_.parameters()) out.push_back(p);
  return out;
}

void ControlPolicy::set_trainable(bool trainable) {
  nn1_.set_trainable(trainable);
  nn2_.set_trainable(trainable);
}

Matrix cdps_control(const Matrix& grad_wrt_state, double alpha_guid) { return -alpha_guid * grad_wrt_state; }

std::vector<Matrix> cdps_guidance(const std::vector<Matrix>& agents, double t, const ScoreProvider& score,
                                  const MaskAggregator& agg, const TerminalCost& psi,
                                  const NoiseSchedule& schedule) {
  dg::Tape tape;
  dg::FrozenBinding fixed(tape);
  std::vector<dg::Var> inputs;
  std::vector<dg::Var> denoised;
  for (const Matrix& x : agents) {
    dg::Var in = tape.input(x);
    inputs.push_back(in);
    denoised.push_back(tweedie(schedule, in, t, score.score(tape, in, t)));
  }
  tape.backward(dg::sum(psi.evaluate(tape, agg.aggregate(denoised))));
  std::vector<Matrix> grads;
  for (const dg::Var& in : inputs) grads.push_back(tape.grad(in));
  return grads;
}

}  // namespace cmad
