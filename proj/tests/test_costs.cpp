// Copyright (C) 2026 The cmad authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cmath>
#include <memory>

#include "cmad/costs.hpp"
#include "cmad/diffgraph/ops.hpp"
#include "cmad/errors.hpp"
#include "support.hpp"

using namespace cmad;
using cmad::test::fd_gradient;
using cmad::test::rel_err;

namespace {

std::shared_ptr<Classifier> small_classifier(int dim, std::uint64_t seed) {
  return std::make_shared<Classifier>(
      dg::Mlp({.input_dim = dim, .hidden = {6}, .output_dim = 3, .activation = dg::Activation::Tanh}, CounterRng(seed),
              "clf"),
      3);
}

SeamLayout one_seam() { return SeamLayout{4, 3, true, {2}}; }

Matrix step_image(double h) {
  Matrix y = Matrix::Zero(1, 12);
  y.rightCols(6).setConstant(h);
  return y;
}

}  // namespace

TEST_CASE("soc config validation") {
  SocConfig c;
  CHECK_NOTHROW(c.validate());
  c.lambda = -1;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = SocConfig{};
  c.charbonnier_eps = 0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = SocConfig{};
  CHECK(c.agent_weight(1, 4) == doctest::Approx(2.5));
  c.agent_lambda = {1.0, 3.0};
  CHECK(c.agent_weight(1, 2) == 3.0);
  CHECK_THROWS_AS(c.agent_weight(0, 3), ConfigError);
}

TEST_CASE("seam loss values") {
  const SeamLayout s = one_seam();
  CHECK(seam_loss(step_image(0.7), s, 0.0, 0.0, 1e-3)(0, 0) == 0.0);
  // Constant image: every Charbonnier term sits at rho(0) = eps.
  const double eps = 1e-3;
  const Matrix flat = Matrix::Constant(1, 12, 0.3);
  CHECK(seam_loss(flat, s, 2.0, 0.5, eps)(0, 0) == doctest::Approx(1 * (2.0 + 0.5) * eps * 3).epsilon(1e-12));
  CHECK(seam_loss(flat, s, 2.0, 0.5, 1e-12)(0, 0) < 1e-10);

  // Jump of h across the seam: beta term rho(h) per column, gradient term rho(0) (flat on both sides).
  double last = -1.0;
  for (double h : {0.0, 0.5, 1.0}) {
    const double v = seam_loss(step_image(h), s, 1.0, 1.0, eps)(0, 0);
    CHECK(v == doctest::Approx(3 * std::sqrt(h * h + eps * eps) + 3 * eps).epsilon(1e-12));
    CHECK(v > last);
    last = v;
  }
  CHECK_THROWS_AS(seam_loss(Matrix::Zero(1, 10), s, 1.0, 1.0, eps), ShapeError);
  CHECK_THROWS_AS(seam_loss(flat, SeamLayout{4, 3, true, {4}}, 1.0, 1.0, eps), ShapeError);
}

TEST_CASE("vertical gradient mismatch") {
  // Rows: 0, 1 | 5, 6 ; gradients above and below the seam are both 1.
  Matrix y(1, 4);
  y << 0, 1, 5, 6;
  const SeamLayout s{4, 1, true, {2}};
  const double eps = 1e-6;
  CHECK(seam_loss(y, s, 0.0, 1.0, eps)(0, 0) == doctest::Approx(eps).epsilon(1e-9));
  y << 0, 1, 5, 8;
  CHECK(seam_loss(y, s, 0.0, 1.0, eps)(0, 0) == doctest::Approx(std::sqrt(4.0 + eps * eps)).epsilon(1e-12));
}

TEST_CASE("running cost examples") {
  RowVector target(2);
  target << 1.0, -1.0;
  const TerminalCost psi = TerminalCost::quadratic(target);
  SocConfig cfg;
  Matrix y(1, 2);
  y << 1.0 + 2.0 / std::sqrt(2.0), -1.0 + 2.0 / std::sqrt(2.0);
  CHECK(running_cost(y, 0.4, psi, cfg)(0, 0) == doctest::Approx(4.0).epsilon(1e-12));
  CHECK(running_cost(Matrix(target), 0.4, psi, cfg)(0, 0) == 0.0);
  cfg.alpha_run = 0.0;
  CHECK(running_cost(y, 0.4, psi, cfg)(0, 0) == 0.0);
  cfg.alpha_run = 2.0;
  cfg.running_scale = RunningScale::LinearRamp;
  CHECK(running_cost(y, 0.25, psi, cfg)(0, 0) == doctest::Approx(2.0 * 0.75 * 4.0).epsilon(1e-12));
}

TEST_CASE("soc objective by hand") {
  SocConfig cfg;
  cfg.lambda = 10.0;
  cfg.alpha_run = 0.0;
  RolloutTerms t;
  t.dt = {0.1};
  t.times = {1.0};
  Matrix u(1, 2);
  u << 1.0, 1.0;
  t.controls = {{u}};
  t.running = {Matrix::Constant(1, 1, 7.0)};
  t.terminal = Matrix::Zero(1, 1);
  CHECK(soc_objective(t, cfg).total == doctest::Approx(2.0).epsilon(1e-14));

  RolloutTerms empty = t;
  empty.controls = {{Matrix::Zero(0, 2)}};
  empty.running = {Matrix::Zero(0, 1)};
  empty.terminal = Matrix::Zero(0, 1);
  CHECK_THROWS_AS(soc_objective(empty, cfg), ShapeError);
}

TEST_CASE("soc objective decomposes") {
  const int k = 7;
  const int n = 3;
  const int b = 5;
  SocConfig cfg;
  cfg.lambda = 3.0;
  cfg.alpha_run = 0.7;
  cfg.running_scale = RunningScale::LinearRamp;
  const CounterRng rng(77);
  RolloutTerms t;
  for (int s = 0; s < k; ++s) {
    t.dt.push_back(0.05 + 0.01 * s);
    t.times.push_back(1.0 - 0.1 * s);
    std::vector<Matrix> us;
    for (int i = 0; i < n; ++i) us.push_back(rng.stream(s).stream(i).normal(b, 4));
    t.controls.push_back(us);
    t.running.push_back(rng.stream(100 + s).uniform(b, 1));
  }
  t.terminal = rng.stream(999).uniform(b, 1);

  double lu = 0.0;
  double lc = 0.0;
  for (int s = 0; s < k; ++s) {
    for (int i = 0; i < n; ++i) lu += t.dt[s] * t.controls[s][i].squaredNorm() / n / b;
    lc += t.dt[s] * (1.0 - t.times[s]) * t.running[s].mean();
  }
  const double lpsi = t.terminal.mean();
  const ObjectiveValue v = soc_objective(t, cfg);
  CHECK(std::abs(v.l_u - lu) < 1e-10);
  CHECK(std::abs(v.l_c - lc) < 1e-10);
  CHECK(std::abs(v.l_psi - lpsi) < 1e-10);
  CHECK(std::abs(v.total - (cfg.lambda * lu + cfg.alpha_run * lc + lpsi)) < 1e-10);
  CHECK(std::abs(v.total - (v.control + cfg.alpha_run * v.l_c + v.l_psi)) < 1e-10);

  // Per-agent weights replace lambda / N.
  cfg.agent_lambda = {1.0, 0.0, 0.0};
  double only0 = 0.0;
  for (int s = 0; s < k; ++s) only0 += t.dt[s] * t.controls[s][0].squaredNorm() / b;
  CHECK(std::abs(soc_objective(t, cfg).control - only0) < 1e-10);

  RolloutTerms zero = t;
  for (auto& us : zero.controls) {
    for (auto& u : us) u.setZero();
  }
  cfg.alpha_run = 0.0;
  CHECK(std::abs(soc_objective(zero, cfg).total - lpsi) < 1e-14);
}

TEST_CASE("classifier nll") {
  auto clf = small_classifier(4, 1);
  clf->net().zero_head();
  const Matrix y = CounterRng(2).normal(6, 4);
  CHECK((classifier_nll(y, 1, *clf).array() - std::log(3.0)).abs().maxCoeff() < 1e-12);

  auto sure = small_classifier(4, 1);
  sure->net().zero_head();
  // Bias of 50 on the target logit only.
  auto params = sure->net().parameters();
  params.back()->value(0, 2) = 50.0;
  CHECK(classifier_nll(y, 2, *sure).maxCoeff() < 1e-20);
  CHECK(classifier_nll(y, 0, *sure).minCoeff() > 49.0);
  CHECK_THROWS_AS(classifier_nll(y, 3, *clf), DomainError);
  CHECK_THROWS_AS(TerminalCost::classifier(clf, -1), DomainError);
}

TEST_CASE("cost gradients match finite differences") {
  const CounterRng rng(5);
  RowVector target = rng.stream(0).normal(1, 12);
  const Matrix y0 = rng.stream(1).normal(3, 12);
  auto clf = small_classifier(12, 3);
  std::vector<TerminalCost> costs{
      TerminalCost::quadratic(target),
      TerminalCost::gaussian(target, 0.7),
      TerminalCost::classifier(clf, 2),
      TerminalCost::quadratic(target).with_seam(one_seam(), 1.5, 0.8, 1e-2),
      TerminalCost::classifier(clf, 1).with_seam(SeamLayout{4, 3, false, {1, 2}}, 0.4, 2.0, 1e-2),
  };
  for (std::size_t c = 0; c < costs.size(); ++c) {
    INFO("cost " << c);
    Matrix y = y0;
    auto f = [&] { return costs[c].evaluate(y).sum(); };
    const Matrix fd = fd_gradient(y, f);
    CHECK(rel_err(costs[c].gradient(y0), fd) < 1e-4);
    CHECK(costs[c].evaluate(y0).minCoeff() >= 0.0);
    CHECK(costs[c].evaluate(y0).isApprox(costs[c].main_term(y0) + costs[c].seam_term(y0), 1e-14));
  }
  // Closed-form gradient expression agrees with the tape.
  for (std::size_t c : {0u, 1u}) {
    dg::Tape tape;
    CHECK(rel_err(costs[c].gradient(tape, tape.constant(y0)).value(), costs[c].gradient(y0)) < 1e-12);
  }
  dg::Tape tape;
  CHECK_THROWS_AS(costs[3].gradient(tape, tape.constant(y0)), UsageError);
}

TEST_CASE("gaussian cost is zero at its mode") {
  RowVector m(3);
  m << 0.5, -1.0, 2.0;
  const TerminalCost g = TerminalCost::gaussian(m, 0.5);
  CHECK(g.evaluate(Matrix(m))(0, 0) == 0.0);
  Matrix y = m;
  y(0, 1) += 1.0;
  CHECK(g.evaluate(y)(0, 0) == doctest::Approx(2.0));
  CHECK_THROWS_AS(g.evaluate(Matrix::Zero(1, 2)), ShapeError);
  CHECK_THROWS_AS(TerminalCost::gaussian(m, 0.0), ConfigError);
}
