// Copyright (C) 2026 The cmad authors
// SPDX-License-Identifier: Apache-2.0

#include "cmad/sde.hpp"

#include <cmath>
#include <sstream>

#include "cmad/errors.hpp"

namespace cmad {

namespace {

void check_time(double t) {
  if (!(t >= 0.0 && t <= 1.0)) {
    std::ostringstream msg;
    msg << "diffusion time " << t << " outside [0, 1]";
    throw DomainError(msg.str());
  }
}

}  // namespace

void NoiseSchedule::validate() const {
  if (!(beta_min > 0.0) || !(beta_max >= beta_min) || !std::isfinite(beta_max)) {
    throw ConfigError("noise schedule requires 0 < beta_min <= beta_max < inf");
  }
}

double NoiseSchedule::beta(double t) const { return beta_min + t * (beta_max - beta_min); }

double NoiseSchedule::integrated_beta(double t) const {
  return beta_min * t + 0.5 * (beta_max - beta_min) * t * t;
}

double NoiseSchedule::g(double t) const { return std::sqrt(beta(t)); }

MarginalCoeffs NoiseSchedule::marginal(double t) const {
  check_time(t);
  const double half_integral = 0.5 * integrated_beta(t);
  // sigma^2 = 1 - exp(-integral); expm1 keeps precision near t = 0.
  return {std::exp(-half_integral), std::sqrt(-std::expm1(-2.0 * half_integral))};
}

MarginalCoeffs marginal_coeffs(const NoiseSchedule& schedule, double t) { return schedule.marginal(t); }

void MultiAgentState::validate() const {
  for (const auto& a : agents) {
    if (a.cols() != dim() || a.rows() != batch()) {
      throw ShapeError("agent states must share batch size and dimension");
    }
    if (!a.allFinite()) {
      throw NumericError("agent state has non-finite entries");
    }
  }
}

Matrix reverse_drift(const NoiseSchedule& schedule, const Matrix& x, double t, const Matrix& score) {
  if (x.rows() != score.rows() || x.cols() != score.cols()) {
    throw ShapeError("reverse_drift: score shape does not match state shape");
  }
  check_time(t);
  const double b = schedule.beta(t);
  return 0.5 * b * x + b * score;
}

Matrix em_step(const Matrix& x, double dt, const Matrix& drift, double g, const Matrix& noise) {
  if (x.rows() != drift.rows() || x.cols() != drift.cols() || x.rows() != noise.rows() ||
      x.cols() != noise.cols()) {
    throw ShapeError("em_step: drift/noise shape does not match state shape");
  }
  if (!(dt > 0.0) || !std::isfinite(dt) || !std::isfinite(g)) {
    throw NumericError("em_step: dt must be positive and finite, g finite");
  }
  if (!x.allFinite() || !drift.allFinite() || !noise.allFinite()) {
    throw NumericError("em_step: non-finite input");
  }
  return x + drift * dt + (g * std::sqrt(dt)) * noise;
}

TimeGrid make_time_grid(std::size_t num_steps, double eps) {
  if (num_steps < 2) {
    throw ConfigError("time grid needs at least 2 points");
  }
  if (!(eps > 0.0 && eps < 1.0)) {
    throw ConfigError("time grid cutoff eps must lie in (0, 1)");
  }
  TimeGrid grid;
  grid.eps = eps;
  grid.times.resize(num_steps);
  const double h = (1.0 - eps) / static_cast<double>(num_steps - 1);
  for (std::size_t k = 0; k < num_steps; ++k) {
    grid.times[k] = 1.0 - static_cast<double>(k) * h;
  }
  grid.times.back() = eps;
  return grid;
}

}  // namespace cmad
