// Copyright (C) 2026 The cmad authors
// SPDX-License-Identifier: Apache-2.0

#include "cmad/diffgraph/mlp.hpp"

#include <cmath>
#include <numbers>

#include "cmad/diffgraph/ops.hpp"
#include "cmad/errors.hpp"

namespace cmad::dg {

Matrix time_embedding(double t, int width, Eigen::Index rows) {
  if (width % 2 != 0) {
    throw ConfigError("time embedding width must be even");
  }
  RowVector feat(width);
  for (int j = 0; j < width / 2; ++j) {
    const double w = std::numbers::pi * std::ldexp(1.0, j - 1);
    feat(2 * j) = std::sin(w * t);
    feat(2 * j + 1) = std::cos(w * t);
  }
  return feat.replicate(rows, 1);
}

Matrix time_embedding(const Vector& times, int width) {
  Matrix out(times.size(), width);
  for (Eigen::Index r = 0; r < times.size(); ++r) {
    out.row(r) = time_embedding(times(r), width, 1);
  }
  return out;
}

Mlp::Mlp(MlpSpec spec, const CounterRng& rng, const std::string& name) : spec_(std::move(spec)) {
  if (spec_.input_dim < 0 || spec_.output_dim < 1 || spec_.time_embed < 0 || spec_.time_embed % 2 != 0) {
    throw ConfigError("invalid MLP spec");
  }
  if (spec_.input_dim + spec_.time_embed == 0) {
    throw ConfigError("MLP needs at least one input feature");
  }
  std::vector<int> widths;
  widths.push_back(spec_.input_dim + spec_.time_embed);
  for (int h : spec_.hidden) {
    if (h < 1) throw ConfigError("hidden widths must be positive");
    widths.push_back(h);
  }
  widths.push_back(spec_.output_dim);
  for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
    const double stddev = 1.0 / std::sqrt(static_cast<double>(widths[l]));
    Matrix w = rng.stream(l).normal(widths[l], widths[l + 1]) * stddev;
    weights_.emplace_back(name + ".w" + std::to_string(l), std::move(w));
    biases_.emplace_back(name + ".b" + std::to_string(l), Matrix::Zero(1, widths[l + 1]));
  }
}

void Mlp::zero_head() { constant_output(0.0); }

void Mlp::constant_output(double c) {
  weights_.back().value.setZero();
  biases_.back().value.setConstant(c);
}

namespace {

Var run_layers(Tape& tape, Var h, std::vector<Parameter>& weights, std::vector<Parameter>& biases, Activation act) {
  for (std::size_t l = 0; l < weights.size(); ++l) {
    h = linear(h, tape.parameter(weights[l]), tape.parameter(biases[l]));
    if (l + 1 < weights.size()) {
      h = act == Activation::Tanh ? dg::tanh(h) : silu(h);
    }
  }
  return h;
}

}  // namespace

Var Mlp::forward(Tape& tape, Var x, const Vector& times) const {
  if (x.cols() != spec_.input_dim) {
    throw ShapeError("MLP input width mismatch");
  }
  if (spec_.time_embed == 0) {
    return run_layers(tape, x, weights_, biases_, spec_.activation);
  }
  if (times.size() != x.rows()) {
    throw ShapeError("MLP needs one time per input row");
  }
  Var emb = tape.constant(time_embedding(times, spec_.time_embed));
  return run_layers(tape, spec_.input_dim > 0 ? concat_cols({x, emb}) : emb, weights_, biases_, spec_.activation);
}

Var Mlp::forward(Tape& tape, Var x, double t) const {
  if (x.cols() != spec_.input_dim) {
    throw ShapeError("MLP input width mismatch");
  }
  Var h = x;
  if (spec_.time_embed > 0) {
    Var emb = tape.constant(time_embedding(t, spec_.time_embed, x.rows()));
    h = spec_.input_dim > 0 ? concat_cols({x, emb}) : emb;
  }
  return run_layers(tape, h, weights_, biases_, spec_.activation);
}

Var Mlp::forward(Tape& tape, Var x) const { return forward(tape, x, 0.0); }

Matrix Mlp::eval(const Matrix& x, double t) const {
  Tape tape;
  return forward(tape, tape.constant(x), t).value();
}

std::vector<Parameter*> Mlp::parameters() {
  std::vector<Parameter*> out;
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    out.push_back(&weights_[l]);
    out.push_back(&biases_[l]);
  }
  return out;
}

std::vector<const Parameter*> Mlp::parameters() const {
  std::vector<const Parameter*> out;
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    out.push_back(&weights_[l]);
    out.push_back(&biases_[l]);
  }
  return out;
}

std::size_t Mlp::parameter_count() const {
  std::size_t n = 0;
  for (const auto* p : parameters()) n += static_cast<std::size_t>(p->value.size());
  return n;
}

void Mlp::set_trainable(bool trainable) {
  for (auto* p : parameters()) p->trainable = trainable;
}

}  // namespace cmad::dg
