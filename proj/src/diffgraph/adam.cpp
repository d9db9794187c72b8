// Copyright (C) 2026 The cmad authors
// SPDX-License-Identifier: Apache-2.0

#include "cmad/diffgraph/adam.hpp"

#include <cmath>

#include "cmad/errors.hpp"

namespace cmad::dg {

AdamState::AdamState(std::span<Parameter* const> params, AdamConfig cfg) : config(cfg) {
  for (const Parameter* p : params) {
    m.push_back(Matrix::Zero(p->value.rows(), p->value.cols()));
    v.push_back(Matrix::Zero(p->value.rows(), p->value.cols()));
  }
}

void adam_step(std::span<Parameter* const> params, AdamState& state, double lr) {
  if (params.size() != state.m.size() || params.size() != state.v.size()) {
    throw ShapeError("adam_step: state tracks a different number of parameters");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    const Parameter& p = *params[i];
    if (p.grad.rows() != p.value.rows() || p.grad.cols() != p.value.cols() ||
        state.m[i].rows() != p.value.rows() || state.m[i].cols() != p.value.cols()) {
      throw ShapeError("adam_step: shape mismatch for parameter " + p.name);
    }
  }
  const AdamConfig& c = state.config;
  ++state.step;
  const double correction1 = 1.0 - std::pow(c.beta1, static_cast<double>(state.step));
  const double correction2 = 1.0 - std::pow(c.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    Parameter& p = *params[i];
    state.m[i] = c.beta1 * state.m[i] + (1.0 - c.beta1) * p.grad;
    state.v[i] = c.beta2 * state.v[i] + (1.0 - c.beta2) * p.grad.cwiseAbs2();
    p.value.array() -= lr * (state.m[i].array() / correction1) /
                       ((state.v[i].array() / correction2).sqrt() + c.eps);
  }
}

Adam::Adam(std::vector<Parameter*> params, AdamConfig cfg)
    : params_(std::move(params)), state_(params_, cfg) {}

void Adam::zero_grad() {
  for (Parameter* p : params_) p->zero_grad();
}

void Adam::step() { adam_step(params_, state_, state_.config.lr); }

}  // namespace cmad::dg
