// Copyright (C) 2026 The cmad authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <functional>
#include <vector>

#include "cmad/diffgraph/mlp.hpp"
#include "cmad/diffgraph/tape.hpp"
#include "cmad/noise.hpp"
#include "cmad/sde.hpp"

namespace cmad {

/// Mixture of isotropic Gaussians sum_j w_j N(mu_j, s_j^2 I).
struct GaussianMixture {
  std::vector<double> weights;
  std::vector<RowVector> means;
  std::vector<double> variances;

  int dim() const { return means.empty() ? 0 : static_cast<int>(means.front().size()); }
  std::size_t size() const { return weights.size(); }
  /// Weights on the simplex (to 1e-12), positive variances, equal dimensions.
  void validate() const;

  /// Marginal of the VP forward process started from this mixture: means
  /// alpha mu_j and variances alpha^2 s_j^2 + sigma^2.
  GaussianMixture diffused(const NoiseSchedule& schedule, double t) const;

  Matrix sample(const CounterRng& rng, Eigen::Index n) const;
  /// Component index of the highest posterior for each row.
  std::vector<int> classify(const Matrix& x) const;
};

/// Per-row log-density, B x 1 (log-sum-exp stabilised).
Matrix gmm_log_density(const GaussianMixture& gmm, const Matrix& x);
/// Per-row component posteriors, B x J.
Matrix gmm_responsibilities(const GaussianMixture& gmm, const Matrix& x);
/// Exact score of the mixture itself.
Matrix gmm_score(const GaussianMixture& gmm, const Matrix& x);
/// Exact score of the VP-diffused mixture at time t.
Matrix gmm_score(const GaussianMixture& gmm, const NoiseSchedule& schedule, const Matrix& x, double t);
/// Taped score with per-row diffusion times. The adjoint uses the analytic
/// Hessian of the log-density, so gradients flow back to x.
dg::Var gmm_score(dg::Tape& tape, const GaussianMixture& gmm, const NoiseSchedule& schedule, dg::Var x,
                  const Vector& times);
/// Normalised product density a(x) b(x) / Z, again an isotropic mixture.
GaussianMixture gmm_product(const GaussianMixture& a, const GaussianMixture& b);

/// Source of grad_x log p_t(x). Implementations are either analytic or a
/// network; both can be placed on a tape so rollouts differentiate through
/// them with respect to the state.
class ScoreProvider {
 public:
  virtual ~ScoreProvider() = default;

  virtual int dim() const = 0;
  /// times: one diffusion time per row of x.
  virtual dg::Var score(dg::Tape& tape, dg::Var x, const Vector& times) const = 0;
  virtual std::vector<dg::Parameter*> parameters() { return {}; }

  dg::Var score(dg::Tape& tape, dg::Var x, double t) const;
  Matrix eval(const Matrix& x, double t) const;
};

class AnalyticScore final : public ScoreProvider {
 public:
  AnalyticScore(GaussianMixture gmm, NoiseSchedule schedule);

  int dim() const override { return gmm_.dim(); }
  dg::Var score(dg::Tape& tape, dg::Var x, const Vector& times) const override;
  using ScoreProvider::score;

  const GaussianMixture& mixture() const { return gmm_; }

 private:
  GaussianMixture gmm_;
  NoiseSchedule schedule_;
};

/// Network S(x, t; theta) = -eps_theta(x, t) / sigma(t). The network predicts
/// the injected noise; times below `t_min` are clamped to it.
/// Noise: the network predicts the injected noise, S = -eps_hat / sigma.
/// Denoiser: the network predicts the clean sample through tanh, so
/// S = (alpha tanh(net) - x) / sigma^2; suited to data inside [-1, 1].
enum class ScoreParam { Noise, Denoiser };

class NetworkScore final : public ScoreProvider {
 public:
  NetworkScore(dg::Mlp net, NoiseSchedule schedule, double t_min = 1e-3, ScoreParam param = ScoreParam::Noise);

  int dim() const override { return net_.spec().output_dim; }
  dg::Var score(dg::Tape& tape, dg::Var x, const Vector& times) const override;
  using ScoreProvider::score;
  std::vector<dg::Parameter*> parameters() override { return net_.parameters(); }

  dg::Mlp& net() { return net_; }
  const dg::Mlp& net() const { return net_; }
  const NoiseSchedule& schedule() const { return schedule_; }
  double t_min() const { return t_min_; }
  ScoreParam param() const { return param_; }

  /// Per-batch training loss in the network's own parametrization: mean
  /// squared noise error, or mean squared clean-sample error.
  dg::Var training_loss(dg::Tape& tape, const Matrix& x0, const Vector& times, const Matrix& noise) const;

 private:
  dg::Mlp net_;
  NoiseSchedule schedule_;
  double t_min_;
  ScoreParam param_;
};

/// Monte Carlo denoising score-matching loss
/// mean_b || -noise_b / sigma(t_b) - S(x_{t_b}, t_b) ||^2 with
/// x_t = alpha x_0 + sigma noise. Times below t_min are clamped.
dg::Var dsm_loss(dg::Tape& tape, const ScoreProvider& model, const NoiseSchedule& schedule, const Matrix& x0,
                 const Vector& times, const Matrix& noise, double t_min = 1e-3);
double dsm_loss(const ScoreProvider& model, const NoiseSchedule& schedule, const Matrix& x0,
                const Vector& times, const Matrix& noise, double t_min = 1e-3);

/// Posterior-mean denoiser (x + sigma^2 score) / alpha.
Matrix tweedie(const NoiseSchedule& schedule, const Matrix& x, double t, const Matrix& score);
dg::Var tweedie(const NoiseSchedule& schedule, dg::Var x, double t, dg::Var score);

struct ScoreTrainConfig {
  int steps = 2000;
  int batch = 128;
  double lr = 1e-3;
  double t_min = 1e-3;
  std::uint64_t seed = 0;
};

/// Trains a NetworkScore with the sigma^2-weighted (noise prediction) form of
/// the denoising objective. `data(rng, n)` draws n clean samples. Returns the
/// per-step training loss.
std::vector<double> train_score(NetworkScore& model, const std::function<Matrix(const CounterRng&, int)>& data,
                                const ScoreTrainConfig& config);

}  // namespace cmad
