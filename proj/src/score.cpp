// Copyright (C) 2026 The cmad authors
// SPDX-License-Identifier: Apache-2.0

#include "cmad/score.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "cmad/diffgraph/adam.hpp"
#include "cmad/diffgraph/ops.hpp"
#include "cmad/errors.hpp"

namespace cmad {

void GaussianMixture::validate() const {
  if (weights.empty() || weights.size() != means.size() || weights.size() != variances.size()) {
    throw ConfigError("mixture needs matching, non-empty weights/means/variances");
  }
  double total = 0.0;
  for (std::size_t j = 0; j < weights.size(); ++j) {
    if (!(weights[j] >= 0.0)) throw ConfigError("mixture weights must be non-negative");
    if (!(variances[j] > 0.0)) throw ConfigError("mixture variances must be positive");
    if (means[j].size() != means.front().size()) throw ShapeError("mixture means differ in dimension");
    total += weights[j];
  }
  if (std::abs(total - 1.0) > 1e-12) {
    throw ConfigError("mixture weights must sum to 1");
  }
}

GaussianMixture GaussianMixture::diffused(const NoiseSchedule& schedule, double t) const {
  const auto [alpha, sigma] = schedule.marginal(t);
  GaussianMixture out = *this;
  for (std::size_t j = 0; j < size(); ++j) {
    out.means[j] = alpha * means[j];
    out.variances[j] = alpha * alpha * variances[j] + sigma * sigma;
  }
  return out;
}

Matrix GaussianMixture::sample(const CounterRng& rng, Eigen::Index n) const {
  const Matrix z = rng.stream(1).normal(n, dim());
  Matrix out(n, dim());
  for (Eigen::Index r = 0; r < n; ++r) {
    const double u = rng.stream(0).uniform(static_cast<std::uint64_t>(r));
    std::size_t j = 0;
    double acc = weights[0];
    while (u > acc && j + 1 < size()) acc += weights[++j];
    out.row(r) = means[j] + std::sqrt(variances[j]) * z.row(r);
  }
  return out;
}

std::vector<int> GaussianMixture::classify(const Matrix& x) const {
  const Matrix resp = gmm_responsibilities(*this, x);
  std::vector<int> labels(static_cast<std::size_t>(x.rows()));
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    Eigen::Index best = 0;
    resp.row(r).maxCoeff(&best);
    labels[static_cast<std::size_t>(r)] = static_cast<int>(best);
  }
  return labels;
}

namespace {

// log w_j + log N(x; mu_j, v_j I) for each row and component, B x J.
Matrix component_log_terms(const GaussianMixture& gmm, const Matrix& x) {
  if (x.cols() != gmm.dim()) {
    throw ShapeError("mixture dimension does not match input");
  }
  const double d = static_cast<double>(gmm.dim());
  Matrix out(x.rows(), static_cast<Eigen::Index>(gmm.size()));
  for (std::size_t j = 0; j < gmm.size(); ++j) {
    const double v = gmm.variances[j];
    const double lw = gmm.weights[j] > 0.0 ? std::log(gmm.weights[j]) : -INFINITY;
    out.col(static_cast<Eigen::Index>(j)) =
        ((x.rowwise() - gmm.means[j]).rowwise().squaredNorm() * (-0.5 / v)).array() +
        (lw - 0.5 * d * std::log(2.0 * std::numbers::pi * v));
  }
  return out;
}

Vector log_sum_exp_rows(const Matrix& m) {
  const Vector mx = m.rowwise().maxCoeff();
  return mx.array() + (m.colwise() - mx).array().exp().rowwise().sum().log();
}

}  // namespace

Matrix gmm_log_density(const GaussianMixture& gmm, const Matrix& x) {
  return log_sum_exp_rows(component_log_terms(gmm, x));
}

Matrix gmm_responsibilities(const GaussianMixture& gmm, const Matrix& x) {
  const Matrix terms = component_log_terms(gmm, x);
  const Vector lse = log_sum_exp_rows(terms);
  return (terms.colwise() - lse).array().exp();
}

Matrix gmm_score(const GaussianMixture& gmm, const Matrix& x) {
  const Matrix resp = gmm_responsibilities(gmm, x);
  Matrix s = Matrix::Zero(x.rows(), x.cols());
  for (std::size_t j = 0; j < gmm.size(); ++j) {
    const Matrix a = (x.rowwise() - gmm.means[j]) * (-1.0 / gmm.variances[j]);
    s += (a.array().colwise() * resp.col(static_cast<Eigen::Index>(j)).array()).matrix();
  }
  return s;
}

Matrix gmm_score(const GaussianMixture& gmm, const NoiseSchedule& schedule, const Matrix& x, double t) {
  return gmm_score(gmm.diffused(schedule, t), x);
}

dg::Var gmm_score(dg::Tape& tape, const GaussianMixture& gmm, const NoiseSchedule& schedule, dg::Var x,
                  const Vector& times) {
  const Matrix& xv = x.value();
  if (times.size() != xv.rows()) {
    throw ShapeError("gmm_score: need one time per row");
  }
  const auto J = static_cast<Eigen::Index>(gmm.size());
  // Per row: responsibilities r_j, directions a_j = -(x - m_j) / v_j and
  // 1 / v_j, kept for the adjoint.
  Matrix resp(xv.rows(), J);
  Matrix inv_var(xv.rows(), J);
  std::vector<Matrix> dirs(gmm.size(), Matrix(xv.rows(), xv.cols()));
  Matrix s = Matrix::Zero(xv.rows(), xv.cols());
  for (Eigen::Index r = 0; r < xv.rows(); ++r) {
    const GaussianMixture g = gmm.diffused(schedule, times(r));
    resp.row(r) = gmm_responsibilities(g, xv.row(r));
    for (Eigen::Index j = 0; j < J; ++j) {
      inv_var(r, j) = 1.0 / g.variances[j];
      dirs[j].row(r) = (xv.row(r) - g.means[j]) * (-inv_var(r, j));
      s.row(r) += resp(r, j) * dirs[j].row(r);
    }
  }
  return tape.record(s, {x}, [x, resp, inv_var, dirs, s](dg::Tape& tp, const Matrix& gbar) {
    // The Jacobian is the Hessian of log p:
    //   H = -sum_j r_j / v_j I + sum_j r_j a_j a_j^T - s s^T.
    Matrix gx = (gbar.array().colwise() * -(resp.cwiseProduct(inv_var)).rowwise().sum().array()).matrix();
    for (std::size_t j = 0; j < dirs.size(); ++j) {
      const Vector proj = dirs[j].cwiseProduct(gbar).rowwise().sum();
      gx += (dirs[j].array().colwise() *
             (resp.col(static_cast<Eigen::Index>(j)).array() * proj.array()))
                .matrix();
    }
    const Vector sproj = s.cwiseProduct(gbar).rowwise().sum();
    gx -= (s.array().colwise() * sproj.array()).matrix();
    tp.accumulate(x, gx);
  });
}

GaussianMixture gmm_product(const GaussianMixture& a, const GaussianMixture& b) {
  if (a.dim() != b.dim()) {
    throw ShapeError("gmm_product: dimensions differ");
  }
  GaussianMixture out;
  std::vector<double> log_w;
  const double d = static_cast<double>(a.dim());
  for (std::size_t i = 0; i < a.size(); ++i) {
    for (std::size_t j = 0; j < b.size(); ++j) {
      const double va = a.variances[i];
      const double vb = b.variances[j];
      const double v = 1.0 / (1.0 / va + 1.0 / vb);
      out.variances.push_back(v);
      out.means.push_back(v * (a.means[i] / va + b.means[j] / vb));
      // Overlap integral N(mu_a; mu_b, (va + vb) I).
      log_w.push_back(std::log(a.weights[i]) + std::log(b.weights[j]) -
                      0.5 * (a.means[i] - b.means[j]).squaredNorm() / (va + vb) -
                      0.5 * d * std::log(2.0 * std::numbers::pi * (va + vb)));
    }
  }
  const double mx = *std::max_element(log_w.begin(), log_w.end());
  double z = 0.0;
  for (double lw : log_w) z += std::exp(lw - mx);
  for (double lw : log_w) out.weights.push_back(std::exp(lw - mx) / z);
  return out;
}

dg::Var ScoreProvider::score(dg::Tape& tape, dg::Var x, double t) const {
  return score(tape, x, Vector::Constant(x.rows(), t));
}

Matrix ScoreProvider::eval(const Matrix& x, double t) const {
  dg::Tape tape;
  return score(tape, tape.constant(x), t).value();
}

AnalyticScore::AnalyticScore(GaussianMixture gmm, NoiseSchedule schedule)
    : gmm_(std::move(gmm)), schedule_(schedule) {
  gmm_.validate();
}

dg::Var AnalyticScore::score(dg::Tape& tape, dg::Var x, const Vector& times) const {
  return gmm_score(tape, gmm_, schedule_, x, times);
}

NetworkScore::NetworkScore(dg::Mlp net, NoiseSchedule schedule, double t_min, ScoreParam param)
    : net_(std::move(net)), schedule_(schedule), t_min_(t_min), param_(param) {
  if (net_.spec().input_dim != net_.spec().output_dim || net_.spec().time_embed == 0) {
    throw ConfigError("score network must map R^d x time to R^d");
  }
}

namespace {

// Per-row factors as a 1 x 1 constant when all times agree, B x 1 otherwise.
dg::Var row_factor(dg::Tape& tape, const Matrix& f) {
  if (f.rows() > 0 && (f.array() == f(0, 0)).all()) return tape.constant(f.topRows(1));
  return tape.constant(f);
}

}  // namespace

dg::Var NetworkScore::score(dg::Tape& tape, dg::Var x, const Vector& times) const {
  const Vector t = times.cwiseMax(t_min_);
  dg::Var out = net_.forward(tape, x, t);
  if (param_ == ScoreParam::Noise) {
    Matrix neg_inv_sigma(t.size(), 1);
    for (Eigen::Index r = 0; r < t.size(); ++r) {
      neg_inv_sigma(r, 0) = -1.0 / schedule_.marginal(t(r)).sigma;
    }
    return dg::scale_rows(out, row_factor(tape, neg_inv_sigma));
  }
  Matrix a(t.size(), 1);
  Matrix inv_var(t.size(), 1);
  for (Eigen::Index r = 0; r < t.size(); ++r) {
    const auto [alpha, sigma] = schedule_.marginal(t(r));
    inv_var(r, 0) = 1.0 / (sigma * sigma);
    a(r, 0) = alpha * inv_var(r, 0);
  }
  return dg::sub(dg::scale_rows(dg::tanh(out), row_factor(tape, a)), dg::scale_rows(x, row_factor(tape, inv_var)));
}

dg::Var NetworkScore::training_loss(dg::Tape& tape, const Matrix& x0, const Vector& times, const Matrix& noise) const {
  if (x0.rows() == 0 || times.size() != x0.rows() || noise.rows() != x0.rows() || noise.cols() != x0.cols()) {
    throw ShapeError("training_loss: batch, times and noise must agree");
  }
  const Vector t = times.cwiseMax(t_min_);
  Matrix xt(x0.rows(), x0.cols());
  for (Eigen::Index r = 0; r < x0.rows(); ++r) {
    const auto [alpha, sigma] = schedule_.marginal(t(r));
    xt.row(r) = alpha * x0.row(r) + sigma * noise.row(r);
  }
  dg::Var out = net_.forward(tape, tape.constant(xt), t);
  dg::Var diff = param_ == ScoreParam::Noise ? dg::sub(out, tape.constant(noise))
                                             : dg::sub(dg::tanh(out), tape.constant(x0));
  return dg::scale(dg::sum(dg::square(diff)), 1.0 / static_cast<double>(x0.rows()));
}

dg::Var dsm_loss(dg::Tape& tape, const ScoreProvider& model, const NoiseSchedule& schedule, const Matrix& x0,
                 const Vector& times, const Matrix& noise, double t_min) {
  if (x0.rows() == 0) {
    throw ShapeError("dsm_loss: empty batch");
  }
  if (times.size() != x0.rows() || noise.rows() != x0.rows() || noise.cols() != x0.cols()) {
    throw ShapeError("dsm_loss: batch, times and noise must agree");
  }
  const Vector t = times.cwiseMax(t_min);
  Matrix xt(x0.rows(), x0.cols());
  Matrix target(x0.rows(), x0.cols());
  for (Eigen::Index r = 0; r < x0.rows(); ++r) {
    const auto [alpha, sigma] = schedule.marginal(t(r));
    xt.row(r) = alpha * x0.row(r) + sigma * noise.row(r);
    target.row(r) = -noise.row(r) / sigma;
  }
  dg::Var s = model.score(tape, tape.constant(xt), t);
  dg::Var diff = dg::sub(s, tape.constant(target));
  return dg::scale(dg::sum(dg::square(diff)), 1.0 / static_cast<double>(x0.rows()));
}

double dsm_loss(const ScoreProvider& model, const NoiseSchedule& schedule, const Matrix& x0, const Vector& times,
                const Matrix& noise, double t_min) {
  dg::Tape tape;
  return dsm_loss(tape, model, schedule, x0, times, noise, t_min).value()(0, 0);
}

namespace {

double tweedie_alpha(const NoiseSchedule& schedule, double t, double* sigma_sq) {
  const auto [alpha, sigma] = schedule.marginal(t);
  if (alpha < 1e-12) {
    throw NumericError("tweedie: signal scale below numeric floor");
  }
  *sigma_sq = sigma * sigma;
  return alpha;
}

}  // namespace

Matrix tweedie(const NoiseSchedule& schedule, const Matrix& x, double t, const Matrix& score) {
  if (x.rows() != score.rows() || x.cols() != score.cols()) {
    throw ShapeError("tweedie: score shape does not match state");
  }
  double sigma_sq = 0.0;
  const double alpha = tweedie_alpha(schedule, t, &sigma_sq);
  return (x + sigma_sq * score) / alpha;
}

dg::Var tweedie(const NoiseSchedule& schedule, dg::Var x, double t, dg::Var score) {
  double sigma_sq = 0.0;
  const double alpha = tweedie_alpha(schedule, t, &sigma_sq);
  return dg::scale(dg::add(x, dg::scale(score, sigma_sq)), 1.0 / alpha);
}

std::vector<double> train_score(NetworkScore& model, const std::function<Matrix(const CounterRng&, int)>& data,
                                const ScoreTrainConfig& config) {
  if (config.steps < 1 || config.batch < 1) {
    throw ConfigError("score training needs steps >= 1 and batch >= 1");
  }
  model.net().set_trainable(true);
  dg::Adam adam(model.parameters(), {.lr = config.lr});
  const CounterRng root(config.seed);
  std::vector<double> curve;
  curve.reserve(static_cast<std::size_t>(config.steps));
  for (int step = 0; step < config.steps; ++step) {
    const CounterRng rng = root.stream(static_cast<std::uint64_t>(step));
    const Matrix x0 = data(rng.stream(0), config.batch);
    const Matrix u = rng.stream(1).uniform(config.batch, 1);
    const Vector t = (config.t_min + (1.0 - config.t_min) * u.array()).matrix();
    const Matrix noise = rng.stream(2).normal(config.batch, x0.cols());
    dg::Tape tape;
    dg::Var loss = model.training_loss(tape, x0, t, noise);
    adam.zero_grad();
    tape.backward(loss);
    adam.step();
    curve.push_back(loss.value()(0, 0));
  }
  model.net().set_trainable(false);
  return curve;
}

}  // namespace cmad
