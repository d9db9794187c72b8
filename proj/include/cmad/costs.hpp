// Copyright (C) 2026 The cmad authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <memory>
#include <optional>
#include <vector>

#include "cmad/aggregation.hpp"
#include "cmad/diffgraph/mlp.hpp"
#include "cmad/diffgraph/tape.hpp"

namespace cmad {

enum class RunningScale { Constant, LinearRamp };

/// Weights of the cooperative control objective.
struct SocConfig {
  /// Control-energy weight lambda; agent i gets lambda / N unless overridden.
  double lambda = 10.0;
  std::vector<double> agent_lambda;
  /// Running-cost scale alpha.
  double alpha_run = 1.0;
  /// Shape of the time-dependent running-cost weight: 1, or (1 - t).
  RunningScale running_scale = RunningScale::Constant;
  double beta_seam = 0.0;
  double gamma_seam = 0.0;
  double charbonnier_eps = 1e-3;
  int target_label = 0;

  void validate() const;
  double agent_weight(int agent, int num_agents) const;
  /// Shape factor w(t); the running cost is alpha_run * w(t) * Psi.
  double running_weight(double t) const;
};

/// Small MLP classifier producing logits.
class Classifier {
 public:
  Classifier() = default;
  Classifier(dg::Mlp net, int num_classes);

  int num_classes() const { return num_classes_; }
  int dim() const { return net_.spec().input_dim; }
  dg::Var logits(dg::Tape& tape, dg::Var x) const { return net_.forward(tape, x); }
  Matrix logits(const Matrix& x) const { return net_.eval(x); }
  std::vector<int> predict(const Matrix& x) const;

  dg::Mlp& net() { return net_; }
  const dg::Mlp& net() const { return net_; }

 private:
  dg::Mlp net_;
  int num_classes_ = 0;
};

/// Per-row -log softmax(classifier(Y))[label], B x 1.
dg::Var classifier_nll(dg::Tape& tape, dg::Var y, int label, const Classifier& clf);
Matrix classifier_nll(const Matrix& y, int label, const Classifier& clf);

/// Charbonnier seam penalty per row, B x 1:
///   sum over boundaries b and positions along the seam of
///   beta rho(Y[b-1] - Y[b]) + gamma rho(grad Y[b-1] - grad Y[b]),
/// with rho(x) = sqrt(x^2 + eps^2). The gradient on each side is taken one
/// line into its own stripe (Y[b-1] - Y[b-2] above, Y[b+1] - Y[b] below) and
/// is zero where that line falls outside the image.
dg::Var seam_loss(dg::Var y, const SeamLayout& layout, double beta, double gamma, double eps);
Matrix seam_loss(const Matrix& y, const SeamLayout& layout, double beta, double gamma, double eps);

/// Terminal cost Psi on the aggregated state, optionally plus a seam penalty.
class TerminalCost {
 public:
  enum class Kind { ClassifierNll, GaussianNll, QuadraticWell };

  static TerminalCost classifier(std::shared_ptr<const Classifier> clf, int label);
  /// ||Y - mean||^2 / (2 std^2): the negative log-density of N(mean, std^2 I)
  /// offset so that its mode costs zero.
  static TerminalCost gaussian(RowVector mean, double std);
  /// ||Y - target||^2.
  static TerminalCost quadratic(RowVector target);

  TerminalCost with_seam(SeamLayout layout, double beta, double gamma, double eps) const;

  Kind kind() const { return kind_; }
  bool has_seam() const { return seam_.has_value(); }
  int label() const { return label_; }
  const Classifier* classifier_model() const { return clf_.get(); }

  /// Per-row cost, B x 1.
  dg::Var evaluate(dg::Tape& tape, dg::Var y) const;
  Matrix evaluate(const Matrix& y) const;
  /// Per-row cost without the seam addend.
  Matrix main_term(const Matrix& y) const;
  Matrix seam_term(const Matrix& y) const;

  /// Gradient of sum_b Psi(Y_b) with respect to Y, computed on a private tape
  /// and returned as plain values (no path back into the caller's graph).
  Matrix gradient(const Matrix& y) const;
  /// Gradient as a differentiable expression of Y. Only closed-form costs
  /// without a seam addend support this.
  dg::Var gradient(dg::Tape& tape, dg::Var y) const;

 private:
  Kind kind_ = Kind::QuadraticWell;
  std::shared_ptr<const Classifier> clf_;
  int label_ = 0;
  RowVector center_;
  double inv_two_var_ = 1.0;
  struct Seam {
    SeamLayout layout;
    double beta;
    double gamma;
    double eps;
  };
  std::optional<Seam> seam_;
};

/// alpha_run * w(t) * Psi(Y0hat), per row.
dg::Var running_cost(dg::Var y0hat, double t, const TerminalCost& psi, const SocConfig& cfg);
Matrix running_cost(const Matrix& y0hat, double t, const TerminalCost& psi, const SocConfig& cfg);

/// Values collected along a batch of controlled trajectories.
struct RolloutTerms {
  std::vector<double> dt;
  std::vector<double> times;
  /// controls[k][i]: B x d control of agent i at step k.
  std::vector<std::vector<Matrix>> controls;
  /// running[k]: B x 1 values of Psi at the aggregated Tweedie estimate.
  std::vector<Matrix> running;
  /// B x 1 values of Psi at the terminal aggregated state.
  Matrix terminal;
};

struct ObjectiveValue {
  /// sum_k dt_k (1/N) sum_i ||u^i_k||^2, batch mean.
  double l_u = 0.0;
  /// sum_k w(t_k) Psi(Y0hat_k) dt_k, batch mean.
  double l_c = 0.0;
  /// Psi(Y_T), batch mean.
  double l_psi = 0.0;
  /// sum_i lambda^i sum_k dt_k ||u^i_k||^2, batch mean (lambda l_u by default).
  double control = 0.0;
  /// control + alpha_run l_c + l_psi.
  double total = 0.0;
};

/// Monte Carlo objective from recorded terms. Throws ShapeError for an empty
/// batch.
ObjectiveValue soc_objective(const RolloutTerms& terms, const SocConfig& cfg);

}  // namespace cmad
