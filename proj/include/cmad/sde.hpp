// Copyright (C) 2026 The cmad authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <vector>

#include "cmad/types.hpp"

namespace cmad {

struct MarginalCoeffs {
  double alpha;
  double sigma;
};

/// Variance-preserving diffusion with a linear rate
/// beta(t) = beta_min + t * (beta_max - beta_min) on diffusion time t in [0, 1].
///
/// The forward process is dX = -0.5 beta(t) X dt + sqrt(beta(t)) dW, so that
/// X_t = alpha(t) X_0 + sigma(t) eps with alpha^2 + sigma^2 = 1.
struct NoiseSchedule {
  double beta_min = 0.1;
  double beta_max = 20.0;

  void validate() const;

  double beta(double t) const;
  /// Closed-form integral of beta over [0, t].
  double integrated_beta(double t) const;
  /// Diffusion coefficient g(t) = sqrt(beta(t)).
  double g(double t) const;
  MarginalCoeffs marginal(double t) const;
};

/// Diffusion times sampled by the reverse integrator, t_0 = 1 > ... > t_{K-1} = eps.
struct TimeGrid {
  std::vector<double> times;
  double eps = 0.0;

  std::size_t size() const { return times.size(); }
  /// Positive step t_k - t_{k+1}, k in [0, K-2].
  double dt(std::size_t k) const { return times[k] - times[k + 1]; }
};

/// N agent states of a common dimension d, batched along rows (B x d each).
struct MultiAgentState {
  std::vector<Matrix> agents;

  std::size_t num_agents() const { return agents.size(); }
  Eigen::Index dim() const { return agents.empty() ? 0 : agents.front().cols(); }
  Eigen::Index batch() const { return agents.empty() ? 0 : agents.front().rows(); }
  /// Throws ShapeError on ragged agents and NumericError on non-finite entries.
  void validate() const;
};

/// (alpha(t), sigma(t)); throws DomainError when t is outside [0, 1].
MarginalCoeffs marginal_coeffs(const NoiseSchedule& schedule, double t);

/// Reverse-time drift -f(x, t) + g(t)^2 score = 0.5 beta x + beta score.
Matrix reverse_drift(const NoiseSchedule& schedule, const Matrix& x, double t, const Matrix& score);

/// One Euler-Maruyama step x + drift dt + g sqrt(dt) noise. The noise is
/// supplied by the caller so that paired runs can share it.
Matrix em_step(const Matrix& x, double dt, const Matrix& drift, double g, const Matrix& noise);

/// K linearly spaced times from 1 down to eps.
TimeGrid make_time_grid(std::size_t num_steps, double eps);

}  // namespace cmad
