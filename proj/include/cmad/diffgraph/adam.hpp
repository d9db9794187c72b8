// Copyright (C) 2026 The cmad authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <span>
#include <vector>

#include "cmad/diffgraph/tape.hpp"

namespace cmad::dg {

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Moment accumulators for one ordered list of parameters.
struct AdamState {
  AdamConfig config;
  std::vector<Matrix> m;
  std::vector<Matrix> v;
  long step = 0;

  AdamState() = default;
  explicit AdamState(std::span<Parameter* const> params, AdamConfig cfg = {});
};

/// Bias-corrected Adam update of `params` from their accumulated `grad`,
/// using learning rate `lr`. Throws ShapeError when the state does not match.
void adam_step(std::span<Parameter* const> params, AdamState& state, double lr);

/// Convenience owner of a parameter list and its state.
class Adam {
 public:
  Adam() = default;
  Adam(std::vector<Parameter*> params, AdamConfig cfg);

  void zero_grad();
  void step();
  double lr() const { return state_.config.lr; }
  void set_lr(double lr) { state_.config.lr = lr; }
  const AdamState& state() const { return state_; }
  const std::vector<Parameter*>& params() const { return params_; }

 private:
  std::vector<Parameter*> params_;
  AdamState state_;
};

}  // namespace cmad::dg
