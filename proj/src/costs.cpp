// Copyright (C) 2026 The cmad authors
// SPDX-License-Identifier: Apache-2.0

#include "cmad/costs.hpp"

#include <cmath>

#include "cmad/diffgraph/ops.hpp"
#include "cmad/errors.hpp"

namespace cmad {

void SocConfig::validate() const {
  if (!(lambda >= 0.0) || !(alpha_run >= 0.0) || !(beta_seam >= 0.0) || !(gamma_seam >= 0.0)) {
    throw ConfigError("lambda, alpha_run, beta_seam and gamma_seam must be >= 0");
  }
  if (!(charbonnier_eps > 0.0)) {
    throw ConfigError("charbonnier_eps must be > 0");
  }
  for (double w : agent_lambda) {
    if (!(w >= 0.0)) throw ConfigError("per-agent lambda must be >= 0");
  }
}

double SocConfig::agent_weight(int agent, int num_agents) const {
  if (!agent_lambda.empty()) {
    if (static_cast<int>(agent_lambda.size()) != num_agents) {
      throw ConfigError("agent_lambda must list one weight per agent");
    }
    return agent_lambda[static_cast<std::size_t>(agent)];
  }
  return lambda / static_cast<double>(num_agents);
}

double SocConfig::running_weight(double t) const {
  return running_scale == RunningScale::Constant ? 1.0 : 1.0 - t;
}

Classifier::Classifier(dg::Mlp net, int num_classes) : net_(std::move(net)), num_classes_(num_classes) {
  if (net_.spec().output_dim != num_classes || num_classes < 2 || net_.spec().time_embed != 0) {
    throw ConfigError("classifier network must map R^d to one logit per class");
  }
}

std::vector<int> Classifier::predict(const Matrix& x) const {
  const Matrix z = logits(x);
  std::vector<int> out(static_cast<std::size_t>(z.rows()));
  for (Eigen::Index r = 0; r < z.rows(); ++r) {
    Eigen::Index best = 0;
    z.row(r).maxCoeff(&best);
    out[static_cast<std::size_t>(r)] = static_cast<int>(best);
  }
  return out;
}

dg::Var classifier_nll(dg::Tape& tape, dg::Var y, int label, const Classifier& clf) {
  if (label < 0 || label >= clf.num_classes()) {
    throw DomainError("classifier label " + std::to_string(label) + " out of range");
  }
  return dg::softmax_cross_entropy(clf.logits(tape, y), label);
}

Matrix classifier_nll(const Matrix& y, int label, const Classifier& clf) {
  dg::Tape tape;
  return classifier_nll(tape, tape.constant(y), label, clf).value();
}

namespace {

std::vector<int> line_indices(const SeamLayout& layout, int line) {
  std::vector<int> idx;
  if (layout.horizontal) {
    for (int c = 0; c < layout.width; ++c) idx.push_back(line * layout.width + c);
  } else {
    for (int r = 0; r < layout.height; ++r) idx.push_back(r * layout.width + line);
  }
  return idx;
}

}  // namespace

dg::Var seam_loss(dg::Var y, const SeamLayout& layout, double beta, double gamma, double eps) {
  dg::Tape& tape = *y.tape();
  if (y.cols() != static_cast<Eigen::Index>(layout.height) * layout.width) {
    throw ShapeError("seam_loss: state is not a " + std::to_string(layout.height) + "x" +
                     std::to_string(layout.width) + " image");
  }
  const int lines = layout.horizontal ? layout.height : layout.width;
  const int along = layout.horizontal ? layout.width : layout.height;
  dg::Var total = tape.constant(Matrix::Zero(y.rows(), 1));
  if (beta == 0.0 && gamma == 0.0) {
    return total;
  }
  auto line = [&](int l) { return dg::gather_cols(y, line_indices(layout, l)); };
  const dg::Var zeros = tape.constant(Matrix::Zero(y.rows(), along));
  for (int b : layout.boundaries) {
    if (b < 1 || b >= lines) {
      throw ShapeError("seam boundary " + std::to_string(b) + " outside the image");
    }
    const dg::Var upper = line(b - 1);
    const dg::Var lower = line(b);
    if (beta != 0.0) {
      total = dg::add(total, dg::scale(dg::row_sum(dg::charbonnier(dg::sub(upper, lower), eps)), beta));
    }
    if (gamma != 0.0) {
      const dg::Var grad_upper = b - 2 >= 0 ? dg::sub(upper, line(b - 2)) : zeros;
      const dg::Var grad_lower = b + 1 < lines ? dg::sub(line(b + 1), lower) : zeros;
      total = dg::add(total, dg::scale(dg::row_sum(dg::charbonnier(dg::sub(grad_upper, grad_lower), eps)), gamma));
    }
  }
  return total;
}

Matrix seam_loss(const Matrix& y, const SeamLayout& layout, double beta, double gamma, double eps) {
  dg::Tape tape;
  return seam_loss(tape.constant(y), layout, beta, gamma, eps).value();
}

TerminalCost TerminalCost::classifier(std::shared_ptr<const Classifier> clf, int label) {
  if (!clf) throw ConfigError("classifier cost needs a classifier");
  if (label < 0 || label >= clf->num_classes()) {
    throw DomainError("target label " + std::to_string(label) + " out of range");
  }
  TerminalCost c;
  c.kind_ = Kind::ClassifierNll;
  c.clf_ = std::move(clf);
  c.label_ = label;
  return c;
}

TerminalCost TerminalCost::gaussian(RowVector mean, double std) {
  if (!(std > 0.0)) throw ConfigError("gaussian cost needs std > 0");
  TerminalCost c;
  c.kind_ = Kind::GaussianNll;
  c.center_ = std::move(mean);
  c.inv_two_var_ = 1.0 / (2.0 * std * std);
  return c;
}

TerminalCost TerminalCost::quadratic(RowVector target) {
  TerminalCost c;
  c.kind_ = Kind::QuadraticWell;
  c.center_ = std::move(target);
  c.inv_two_var_ = 1.0;
  return c;
}

TerminalCost TerminalCost::with_seam(SeamLayout layout, double beta, double gamma, double eps) const {
  if (!(beta >= 0.0) || !(gamma >= 0.0) || !(eps > 0.0)) {
    throw ConfigError("seam weights must be >= 0 and eps > 0");
  }
  TerminalCost c = *this;
  c.seam_ = Seam{std::move(layout), beta, gamma, eps};
  return c;
}

dg::Var TerminalCost::evaluate(dg::Tape& tape, dg::Var y) const {
  dg::Var main;
  if (kind_ == Kind::ClassifierNll) {
    main = classifier_nll(tape, y, label_, *clf_);
  } else {
    if (y.cols() != center_.size()) throw ShapeError("terminal cost target has wrong dimension");
    Matrix c = center_.replicate(y.rows(), 1);
    main = dg::scale(dg::row_sum_squares(dg::sub(y, tape.constant(std::move(c)))), inv_two_var_);
  }
  if (seam_) {
    main = dg::add(main, seam_loss(y, seam_->layout, seam_->beta, seam_->gamma, seam_->eps));
  }
  return main;
}

Matrix TerminalCost::evaluate(const Matrix& y) const {
  dg::Tape tape;
  return evaluate(tape, tape.constant(y)).value();
}

Matrix TerminalCost::main_term(const Matrix& y) const {
  TerminalCost plain = *this;
  plain.seam_.reset();
  return plain.evaluate(y);
}

Matrix TerminalCost::seam_term(const Matrix& y) const {
  if (!seam_) return Matrix::Zero(y.rows(), 1);
  return seam_loss(y, seam_->layout, seam_->beta, seam_->gamma, seam_->eps);
}

Matrix TerminalCost::gradient(const Matrix& y) const {
  dg::Tape tape;
  dg::FrozenBinding fixed(tape);
  dg::Var in = tape.input(y);
  tape.backward(dg::sum(evaluate(tape, in)));
  return tape.grad(in);
}

dg::Var TerminalCost::gradient(dg::Tape& tape, dg::Var y) const {
  if (kind_ == Kind::ClassifierNll || seam_) {
    throw UsageError("taped gradient is only available for closed-form costs without a seam");
  }
  Matrix c = center_.replicate(y.rows(), 1);
  return dg::scale(dg::sub(y, tape.constant(std::move(c))), 2.0 * inv_two_var_);
}

dg::Var running_cost(dg::Var y0hat, double t, const TerminalCost& psi, const SocConfig& cfg) {
  dg::Tape& tape = *y0hat.tape();
  return dg::scale(psi.evaluate(tape, y0hat), cfg.alpha_run * cfg.running_weight(t));
}

Matrix running_cost(const Matrix& y0hat, double t, const TerminalCost& psi, const SocConfig& cfg) {
  return cfg.alpha_run * cfg.running_weight(t) * psi.evaluate(y0hat);
}

ObjectiveValue soc_objective(const RolloutTerms& terms, const SocConfig& cfg) {
  const Eigen::Index batch = terms.terminal.rows();
  if (batch == 0) {
    throw ShapeError("soc_objective: empty batch");
  }
  if (terms.controls.size() != terms.dt.size() || terms.running.size() != terms.dt.size() ||
      terms.times.size() != terms.dt.size()) {
    throw ShapeError("soc_objective: per-step records have inconsistent lengths");
  }
  const double inv_b = 1.0 / static_cast<double>(batch);
  ObjectiveValue v;
  for (std::size_t k = 0; k < terms.dt.size(); ++k) {
    const auto& step = terms.controls[k];
    const int n = static_cast<int>(step.size());
    for (int i = 0; i < n; ++i) {
      const double energy = step[static_cast<std::size_t>(i)].squaredNorm() * inv_b * terms.dt[k];
      v.l_u += energy / static_cast<double>(n);
      v.control += cfg.agent_weight(i, n) * energy;
    }
    v.l_c += cfg.running_weight(terms.times[k]) * terms.running[k].sum() * inv_b * terms.dt[k];
  }
  v.l_psi = terms.terminal.sum() * inv_b;
  v.total = v.control + cfg.alpha_run * v.l_c + v.l_psi;
  return v;
}

}  // namespace cmad
