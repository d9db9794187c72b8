// Copyright (C) 2026 The cmad authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cmath>

#include "cmad/diffgraph/ops.hpp"
#include "cmad/optimize.hpp"
#include "rollout_oracle.hpp"
#include "support.hpp"

using namespace cmad;
using cmad::test::rel_err;
using cmad::test::recorded_guidance;

namespace {

GaussianMixture two_modes(int d) {
  RowVector m = RowVector::Constant(d, 1.5);
  return GaussianMixture{{0.5, 0.5}, {m, RowVector(-m)}, {0.25, 0.25}};
}

struct Fixture {
  NoiseSchedule schedule;
  AnalyticScore score;
  MaskAggregator agg;
  TerminalCost psi;
  RolloutSetup setup;

  Fixture(int n, int d, std::size_t k, TerminalCost cost)
      : score(two_modes(d), schedule),
        agg(n == 1 ? MaskAggregator::identity(d) : MaskAggregator::halves(d, n)),
        psi(std::move(cost)) {
    setup.score = &score;
    setup.agg = &agg;
    setup.psi = &psi;
    setup.cfg.lambda = 1.0;
    setup.grid = make_time_grid(k, 1e-3);
  }
};

TerminalCost well(int d) { return TerminalCost::quadratic(RowVector::LinSpaced(d, -1.0, 1.0)); }

std::vector<ControlPolicy> make_policies(int n, int d, double c0, std::uint64_t seed, bool perturb) {
  std::vector<ControlPolicy> out;
  PolicySpec spec;
  spec.dim = d;
  spec.nn1_hidden = {6};
  spec.nn2_hidden = {4};
  spec.time_embed = 4;
  spec.nn2_init = c0;
  for (int i = 0; i < n; ++i) {
    out.emplace_back(i, spec, CounterRng(seed).stream(i));
    if (perturb) {
      int k = 0;
      for (dg::Parameter* p : out.back().parameters()) {
        p->value += 0.2 * CounterRng(seed + 1).stream(i).stream(k++).normal(p->value.rows(), p->value.cols());
      }
    }
  }
  return out;
}

}  // namespace

TEST_CASE("zero control with a vanishing cost reproduces the uncontrolled sampler") {
  // An infinitely wide Gaussian well: Psi is identically zero.
  Fixture f(2, 4, 30, TerminalCost::gaussian(RowVector::Zero(4), 1e200));
  f.setup.cfg.alpha_run = 0.0;
  const auto pols = make_policies(2, 4, 0.0, 1, false);
  const CounterRng noise(5);
  dg::Tape tape;
  const RolloutResult r = bptt_rollout(tape, pols, f.setup, noise, 8, true);
  CHECK(r.objective.value()(0, 0) == 0.0);
  CHECK(r.record.objective.total == 0.0);
  const RolloutRecord none = simulate(ControlMode::None, nullptr, 0.0, f.setup, noise, 8, true);
  REQUIRE(none.states.size() == r.record.states.size());
  for (std::size_t k = 0; k < none.states.size(); ++k) {
    for (int i = 0; i < 2; ++i) CHECK(none.states[k][i] == r.record.states[k][i]);
  }
  CHECK(none.terminal_y == r.record.terminal_y);
  CHECK(r.record.states.size() == 30);
  CHECK(r.record.terms.controls.size() == 29);
}

TEST_CASE("taped objective agrees with a direct re-derivation") {
  Fixture f(2, 2, 6, well(2));
  f.setup.cfg.alpha_run = 0.8;
  f.setup.cfg.lambda = 3.0;
  const auto pols = make_policies(2, 2, -0.5, 3, true);
  const CounterRng noise(9);
  dg::Tape tape;
  const RolloutResult r = bptt_rollout(tape, pols, f.setup, noise, 3, true);
  const double direct = cmad::test::fixed_guidance_objective(pols, f.setup, noise, 3, recorded_guidance(r.record, f.setup));
  CHECK(std::abs(r.objective.value()(0, 0) - direct) < 1e-12 * std::max(1.0, std::abs(direct)));
  CHECK(std::abs(r.record.objective.total - direct) < 1e-12 * std::max(1.0, std::abs(direct)));
  CHECK(simulate(ControlMode::Learned, &pols, 0.0, f.setup, noise, 3).objective.total == r.record.objective.total);
}

TEST_CASE("control energy term recomputed from the record") {
  Fixture f(3, 3, 8, well(3));
  f.setup.cfg.lambda = 7.0;
  const auto pols = make_policies(3, 3, 0.8, 4, true);
  const RolloutRecord rec = simulate(ControlMode::Learned, &pols, 0.0, f.setup, CounterRng(1), 4, true);
  double acc = 0.0;
  for (std::size_t k = 0; k < rec.terms.controls.size(); ++k) {
    double per = 0.0;
    for (const Matrix& u : rec.terms.controls[k]) per += u.squaredNorm() / 4.0;
    acc += rec.terms.dt[k] * per / 3.0;
  }
  CHECK(std::abs(rec.objective.control - 7.0 * acc) < 1e-10);
  const ObjectiveValue fused = soc_objective(rec.terms, f.setup.cfg);
  CHECK(std::abs(fused.total - rec.objective.total) < 1e-10);
  CHECK(std::abs(fused.l_c - rec.objective.l_c) < 1e-10);
}

TEST_CASE("empty batch and inconsistent setups are rejected") {
  Fixture f(2, 2, 5, well(2));
  const auto pols = make_policies(2, 2, 0.0, 1, false);
  dg::Tape tape;
  CHECK_THROWS_AS(bptt_rollout(tape, pols, f.setup, CounterRng(1), 0), ShapeError);
  CHECK_THROWS_AS(bptt_rollout(tape, make_policies(1, 2, 0.0, 1, false), f.setup, CounterRng(1), 2), ConfigError);
  CHECK_THROWS_AS(bptt_rollout(tape, make_policies(2, 3, 0.0, 1, false), f.setup, CounterRng(1), 2), ShapeError);
  RolloutSetup bad = f.setup;
  bad.psi = nullptr;
  CHECK_THROWS_AS(simulate(ControlMode::None, nullptr, 0.0, bad, CounterRng(1), 2), ConfigError);
}

TEST_CASE("rollout gradient against finite differences, N=1") {
  Fixture f(1, 2, 5, well(2));
  auto pols = make_policies(1, 2, 0.3, 6, true);
  const CounterRng noise(2);
  for (dg::Parameter* p : pols[0].parameters()) p->zero_grad();
  dg::Tape tape;
  const RolloutResult r = bptt_rollout(tape, pols, f.setup, noise, 1, true);
  tape.backward(r.objective);
  const auto guid = recorded_guidance(r.record, f.setup);
  for (dg::Parameter* p : pols[0].parameters()) {
    INFO(p->name);
    auto fn = [&] { return cmad::test::fixed_guidance_objective(pols, f.setup, noise, 1, guid); };
    CHECK(rel_err(p->grad, cmad::test::fd_gradient(p->value, fn, 1e-6)) < 1e-3);
  }
}

TEST_CASE("rollout gradient against finite differences, N=2") {
  Fixture f(2, 2, 5, well(2));
  f.setup.cfg.alpha_run = 0.5;
  auto pols = make_policies(2, 2, -0.4, 8, true);
  const CounterRng noise(3);
  for (auto& pol : pols) {
    for (dg::Parameter* p : pol.parameters()) p->zero_grad();
  }
  dg::Tape tape;
  const RolloutResult r = bptt_rollout(tape, pols, f.setup, noise, 2, true);
  tape.backward(r.objective);
  const auto guid = recorded_guidance(r.record, f.setup);
  double worst = 0.0;
  for (auto& pol : pols) {
    for (dg::Parameter* p : pol.parameters()) {
      auto fn = [&] { return cmad::test::fixed_guidance_objective(pols, f.setup, noise, 2, guid); };
      worst = std::max(worst, rel_err(p->grad, cmad::test::fd_gradient(p->value, fn, 1e-6)));
    }
  }
  CHECK(worst < 1e-3);
}

TEST_CASE("score network receives no gradient through the guidance path") {
  NoiseSchedule s;
  NetworkScore net(dg::Mlp({.input_dim = 2, .hidden = {8}, .output_dim = 2, .time_embed = 4}, CounterRng(4), "score"),
                   s);
  for (dg::Parameter* p : net.parameters()) {
    REQUIRE(p->trainable);
    p->zero_grad();
  }
  const MaskAggregator agg = MaskAggregator::halves(2, 2);
  const TerminalCost psi = well(2);
  RolloutSetup su{&net, &agg, &psi, SocConfig{}, s, make_time_grid(5, 1e-3)};
  auto pols = make_policies(2, 2, -1.0, 2, true);
  dg::Tape tape;
  const RolloutResult r = bptt_rollout(tape, pols, su, CounterRng(1), 3);
  tape.backward(r.objective);
  for (const dg::Parameter* p : net.parameters()) CHECK(p->grad.isZero(0.0));
  double policy_grad = 0.0;
  for (auto& pol : pols) {
    for (const dg::Parameter* p : pol.parameters()) policy_grad += p->grad.squaredNorm();
  }
  CHECK(policy_grad > 0.0);
}

TEST_CASE("train plan bookkeeping") {
  TrainPlan plan;
  plan.mode = TrainMode::ControlWise;
  plan.iterations = 300;
  plan.inner_steps = 5;
  CHECK(plan.total_updates(3) == 4500);
  plan.mode = TrainMode::Joint;
  CHECK(plan.total_updates(3) == 300);
  plan.mode = TrainMode::CdpsOnly;
  CHECK(plan.total_updates(3) == 0);
  plan.inner_steps = 0;
  CHECK_THROWS_AS(plan.validate(), ConfigError);
}

TEST_CASE("training without learnable parameters is a config error") {
  Fixture f(2, 2, 3, well(2));
  auto pols = make_policies(2, 2, 0.0, 1, false);
  for (auto& p : pols) p.set_trainable(false);
  TrainPlan plan;
  plan.iterations = 1;
  CHECK_THROWS_AS(joint_ido(pols, f.agg, f.setup, plan), ConfigError);
}

TEST_CASE("control-wise schedule, freezing and update count") {
  Fixture f(3, 3, 2, well(3));
  auto pols = make_policies(3, 3, 0.0, 1, false);
  TrainPlan plan;
  plan.mode = TrainMode::ControlWise;
  plan.iterations = 300;
  plan.inner_steps = 5;
  plan.batch = 1;
  plan.lr = 1e-2;
  std::vector<std::vector<Matrix>> snapshot;
  auto take = [&] {
    std::vector<std::vector<Matrix>> s;
    for (const auto& p : pols) {
      std::vector<Matrix> v;
      for (const dg::Parameter* q : p.parameters()) v.push_back(q->value);
      s.push_back(v);
    }
    return s;
  };
  snapshot = take();
  long seen = 0;
  bool frozen_ok = true;
  bool active_moved = true;
  const TrainResult res = controlwise_ido(pols, f.agg, f.setup, plan, [&](const CurvePoint& pt) {
    const auto now = take();
    for (int i = 0; i < 3; ++i) {
      bool same = true;
      for (std::size_t q = 0; q < now[i].size(); ++q) same = same && now[i][q] == snapshot[i][q];
      if (i != pt.agent) frozen_ok = frozen_ok && same;
      if (i == pt.agent) active_moved = active_moved && !same;
      for (const dg::Parameter* q : pols[i].parameters()) frozen_ok = frozen_ok && (q->trainable == (i == pt.agent));
    }
    CHECK(pt.agent == static_cast<int>((seen / 5) % 3));
    CHECK(pt.update == seen);
    snapshot = now;
    ++seen;
  });
  CHECK(frozen_ok);
  CHECK(active_moved);
  CHECK(seen == 4500);
  CHECK(res.curve.size() == 4500);
  for (const auto& p : pols) {
    for (const dg::Parameter* q : p.parameters()) CHECK(q->trainable);
  }
}

TEST_CASE("shuffled agent order visits every agent each sweep") {
  Fixture f(3, 3, 2, well(3));
  auto pols = make_policies(3, 3, 0.0, 1, false);
  TrainPlan plan;
  plan.mode = TrainMode::ControlWise;
  plan.iterations = 6;
  plan.inner_steps = 1;
  plan.batch = 1;
  plan.order = AgentOrder::Shuffle;
  const TrainResult res = controlwise_ido(pols, f.agg, f.setup, plan);
  REQUIRE(res.curve.size() == 18);
  bool any_non_ascending = false;
  for (int o = 0; o < 6; ++o) {
    std::vector<int> a;
    for (int j = 0; j < 3; ++j) a.push_back(res.curve[o * 3 + j].agent);
    any_non_ascending = any_non_ascending || a != std::vector<int>{0, 1, 2};
    std::sort(a.begin(), a.end());
    CHECK(a == std::vector<int>{0, 1, 2});
  }
  CHECK(any_non_ascending);
}

TEST_CASE("single agent control-wise equals joint with the same update count") {
  Fixture f(1, 2, 4, well(2));
  auto a = make_policies(1, 2, 0.0, 3, false);
  auto b = make_policies(1, 2, 0.0, 3, false);
  TrainPlan joint;
  joint.iterations = 12;
  joint.batch = 2;
  joint.lr = 1e-2;
  TrainPlan cw = joint;
  cw.mode = TrainMode::ControlWise;
  cw.iterations = 4;
  cw.inner_steps = 3;
  const TrainResult ra = joint_ido(a, f.agg, f.setup, joint);
  const TrainResult rb = controlwise_ido(b, f.agg, f.setup, cw);
  REQUIRE(ra.curve.size() == rb.curve.size());
  for (std::size_t k = 0; k < ra.curve.size(); ++k) CHECK(ra.curve[k].objective == rb.curve[k].objective);
  for (std::size_t q = 0; q < a[0].parameters().size(); ++q) CHECK(a[0].parameters()[q]->value == b[0].parameters()[q]->value);
}

TEST_CASE("joint and control-wise share the noise of each update") {
  Fixture f(2, 2, 4, well(2));
  auto a = make_policies(2, 2, 0.5, 3, true);
  auto b = make_policies(2, 2, 0.5, 3, true);
  TrainPlan joint;
  joint.iterations = 1;
  joint.batch = 4;
  TrainPlan cw = joint;
  cw.mode = TrainMode::ControlWise;
  const double ja = joint_ido(a, f.agg, f.setup, joint).curve[0].objective;
  const double jb = controlwise_ido(b, f.agg, f.setup, cw).curve[0].objective;
  CHECK(ja == jb);
}

TEST_CASE("divergence halves the learning rate once, then reports the partial curve") {
  Fixture f(2, 2, 4, well(2));
  auto pols = make_policies(2, 2, 1e300, 1, false);
  TrainPlan plan;
  plan.iterations = 3;
  plan.lr = 0.1;
  try {
    joint_ido(pols, f.agg, f.setup, plan);
    FAIL("expected divergence");
  } catch (const TrainingDiverged& e) {
    CHECK(e.partial().lr_halvings == 1);
    CHECK(e.partial().final_lr == doctest::Approx(0.05));
    CHECK(e.partial().curve.empty());
    CHECK(std::string(e.what()).find("update 0") != std::string::npos);
  }
}

TEST_CASE("cdps sampler") {
  Fixture f(2, 2, 20, well(2));
  const CounterRng noise(4);
  const RolloutRecord none = simulate(ControlMode::None, nullptr, 0.0, f.setup, noise, 16);
  const RolloutRecord zero = sample_cdps(f.setup, 0.0, noise, 16);
  CHECK(zero.terminal_y == none.terminal_y);
  const RolloutRecord guided = sample_cdps(f.setup, 5.0, noise, 16);
  CHECK(guided.terminal_y == sample_cdps(f.setup, 5.0, noise, 16).terminal_y);
  CHECK(guided.objective.l_psi < none.objective.l_psi);
}

TEST_CASE("naive product sampler with one expert is the plain sampler") {
  Fixture f(1, 3, 25, well(3));
  const CounterRng noise(8);
  const Matrix poe = sample_poe_naive({&f.score}, f.schedule, f.setup.grid, noise, 10);
  const RolloutRecord plain = simulate(ControlMode::None, nullptr, 0.0, f.setup, noise, 10);
  CHECK(poe == plain.final_agents[0]);
}

TEST_CASE("naive product of two standard normals follows the summed-score recursion") {
  NoiseSchedule s;
  const AnalyticScore a(GaussianMixture{{1.0}, {RowVector::Zero(2)}, {1.0}}, s);
  const TimeGrid grid = make_time_grid(200, 1e-3);
  const Matrix x = sample_poe_naive({&a, &a}, s, grid, CounterRng(3), 20000);
  // Summed score -2x gives x' = (1 - 1.5 beta dt) x + sqrt(beta dt) xi.
  double v = std::pow(s.marginal(1.0).sigma, 2);
  for (std::size_t k = 0; k + 1 < grid.size(); ++k) {
    const double bd = s.beta(grid.times[k]) * grid.dt(k);
    v = (1 - 1.5 * bd) * (1 - 1.5 * bd) * v + bd;
  }
  const Eigen::RowVectorXd mean = x.colwise().mean();
  const Eigen::RowVectorXd var = (x.rowwise() - mean).array().square().colwise().sum() / (x.rows() - 1);
  for (int c = 0; c < 2; ++c) CHECK(std::abs(var(c) / v - 1.0) < 0.03);
}

TEST_CASE("taped rollout memory stays within budget at full scale") {
  const int d = 256;
  Fixture f(3, d, 500, well(d));
  auto pols = make_policies(3, d, 0.0, 1, false);
  PolicySpec spec;
  spec.dim = d;
  pols.clear();
  for (int i = 0; i < 3; ++i) pols.emplace_back(i, spec, CounterRng(2).stream(i));
  dg::Tape tape;
  const RolloutResult r = bptt_rollout(tape, pols, f.setup, CounterRng(1), 16);
  const double bytes = static_cast<double>(tape.stored_values()) * sizeof(double);
  MESSAGE("taped rollout holds " << bytes / (1 << 20) << " MiB of node values");
  CHECK(bytes < 2.0 * (1u << 30));
  CHECK(std::isfinite(r.objective.value()(0, 0)));
}
