// Copyright (C) 2026 The cmad authors
// SPDX-License-Identifier: Apache-2.0

#include "cmad/optimize.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <string>

#include "cmad/diffgraph/adam.hpp"
#include "cmad/diffgraph/ops.hpp"

namespace cmad {

void RolloutSetup::validate() const {
  if (score == nullptr || agg == nullptr || psi == nullptr) {
    throw ConfigError("rollout setup needs a score model, an aggregator and a terminal cost");
  }
  if (score->dim() != agg->dim()) {
    throw ConfigError("score model dimension " + std::to_string(score->dim()) +
                      " does not match aggregator dimension " + std::to_string(agg->dim()));
  }
  if (grid.size() < 2) {
    throw ConfigError("time grid needs at least 2 points");
  }
  schedule.validate();
  cfg.validate();
}

void TrainPlan::validate() const {
  if (iterations < 0) throw ConfigError("iterations must be non-negative");
  if (inner_steps < 1) throw ConfigError("inner_steps must be at least 1");
  if (batch < 1) throw ConfigError("batch must be at least 1");
  if (!(lr > 0.0) || !std::isfinite(lr)) throw ConfigError("lr must be positive");
  if (!(lr_aggregator > 0.0) || !std::isfinite(lr_aggregator)) {
    throw ConfigError("lr_aggregator must be positive");
  }
}

long TrainPlan::total_updates(int num_agents) const {
  if (mode == TrainMode::ControlWise) return static_cast<long>(iterations) * num_agents * inner_steps;
  if (mode == TrainMode::Joint) return iterations;
  return 0;
}

namespace {

// x' = x + (beta x / 2 + beta s + g u) dt + g sqrt(dt) xi
dg::Var em_node(const RolloutSetup& setup, dg::Var x, dg::Var s, dg::Var u, double t, double dt, const Matrix& xi,
                int step) {
  const double beta = setup.schedule.beta(t);
  const double g = setup.schedule.g(t);
  Matrix drift = reverse_drift(setup.schedule, x.value(), t, s.value());
  drift += g * u.value();
  if (!drift.allFinite() || !x.value().allFinite()) {
    throw DivergenceError("non-finite drift at step " + std::to_string(step), step);
  }
  Matrix next = em_step(x.value(), dt, drift, g, xi);
  if (!next.allFinite()) {
    throw DivergenceError("non-finite state at step " + std::to_string(step), step);
  }
  const double cx = 1.0 + 0.5 * beta * dt;
  const double cs = beta * dt;
  const double cu = g * dt;
  return x.tape()->record(std::move(next), {x, s, u}, [x, s, u, cx, cs, cu](dg::Tape& tp, const Matrix& adj) {
    tp.accumulate(x, cx * adj);
    tp.accumulate(s, cs * adj);
    tp.accumulate(u, cu * adj);
  });
}

struct Core {
  ControlMode mode;
  const std::vector<ControlPolicy>* policies;
  double alpha_guid;
  const RolloutSetup& setup;
  const CounterRng& noise;
  int batch;
  bool keep;
};

// With `persistent` set, every step lives on that tape and the returned Var is
// the differentiable objective. Otherwise each step gets a throwaway tape.
dg::Var run_core(const Core& c, dg::Tape* persistent, RolloutRecord& rec) {
  const RolloutSetup& su = c.setup;
  su.validate();
  if (c.batch < 1) {
    throw ShapeError("rollout batch must be at least 1");
  }
  const int n = su.num_agents();
  const int d = su.dim();
  if (c.mode == ControlMode::Learned) {
    if (c.policies == nullptr || static_cast<int>(c.policies->size()) != n) {
      throw ConfigError("need one control policy per agent");
    }
    for (const ControlPolicy& p : *c.policies) {
      if (p.dim() != d) throw ShapeError("policy dimension does not match the state dimension");
    }
  }
  const auto& times = su.grid.times;
  const std::size_t steps = times.size() - 1;
  const double inv_b = 1.0 / static_cast<double>(c.batch);

  rec = RolloutRecord{};
  rec.batch = c.batch;

  const double sigma0 = su.schedule.marginal(times.front()).sigma;
  std::vector<Matrix> xs(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    xs[static_cast<std::size_t>(i)] = sigma0 * c.noise.stream(0).stream(static_cast<std::uint64_t>(i)).normal(c.batch, d);
  }
  std::vector<dg::Var> xv;
  if (persistent != nullptr) {
    for (const Matrix& x : xs) xv.push_back(persistent->constant(x));
  }
  dg::Var objective;
  auto add_term = [&](dg::Var term) { objective = objective.valid() ? dg::add(objective, term) : term; };

  for (std::size_t k = 0; k < steps; ++k) {
    const double t = times[k];
    const double dt = su.grid.dt(k);
    const int step = static_cast<int>(k);
    dg::Tape local;
    dg::Tape& tp = persistent != nullptr ? *persistent : local;
    std::vector<dg::Var> vars;
    if (persistent != nullptr) {
      vars = xv;
    } else {
      for (const Matrix& x : xs) vars.push_back(tp.constant(x));
    }

    dg::Var y = su.agg->aggregate(vars);
    std::vector<dg::Var> scores;
    std::vector<dg::Var> x0;
    dg::Var psi_run;
    {
      // The pretrained score and cost networks stay fixed under the control objective.
      dg::FrozenBinding fixed(tp);
      for (int i = 0; i < n; ++i) {
        scores.push_back(su.score->score(tp, vars[static_cast<std::size_t>(i)], t));
        x0.push_back(tweedie(su.schedule, vars[static_cast<std::size_t>(i)], t, scores.back()));
      }
    }
    dg::Var y0 = su.agg->aggregate(x0);
    {
      dg::FrozenBinding fixed(tp);
      psi_run = su.psi->evaluate(tp, y0);
    }
    if (!psi_run.value().allFinite()) {
      throw DivergenceError("non-finite running cost at step " + std::to_string(step), step);
    }
    const double w = su.cfg.running_weight(t);
    rec.objective.l_c += w * psi_run.value().sum() * inv_b * dt;

    std::vector<dg::Var> controls;
    if (c.mode == ControlMode::Learned) {
      const std::vector<Matrix> guid = su.agg->scatter_adjoint(su.psi->gradient(y0.value()));
      for (int i = 0; i < n; ++i) {
        const auto si = static_cast<std::size_t>(i);
        controls.push_back((*c.policies)[si].eval(tp, vars[si], y, tp.constant(guid[si]), t));
      }
    } else if (c.mode == ControlMode::Cdps) {
      std::vector<Matrix> cur;
      for (const dg::Var& v : vars) cur.push_back(v.value());
      const std::vector<Matrix> grads = cdps_guidance(cur, t, *su.score, *su.agg, *su.psi, su.schedule);
      for (int i = 0; i < n; ++i) {
        controls.push_back(tp.constant(cdps_control(grads[static_cast<std::size_t>(i)], c.alpha_guid)));
      }
    } else {
      for (int i = 0; i < n; ++i) controls.push_back(tp.constant(Matrix::Zero(c.batch, d)));
    }

    std::vector<dg::Var> next;
    for (int i = 0; i < n; ++i) {
      const auto si = static_cast<std::size_t>(i);
      const Matrix xi = c.noise.stream(k + 1).stream(si).normal(c.batch, d);
      next.push_back(em_node(su, vars[si], scores[si], controls[si], t, dt, xi, step));
      const double energy = controls[si].value().squaredNorm() * inv_b * dt;
      rec.objective.l_u += energy / static_cast<double>(n);
      rec.objective.control += su.cfg.agent_weight(i, n) * energy;
      if (persistent != nullptr) {
        add_term(dg::scale(dg::sum(dg::square(controls[si])), su.cfg.agent_weight(i, n) * dt * inv_b));
      }
    }
    if (persistent != nullptr) {
      add_term(dg::scale(dg::sum(psi_run), su.cfg.alpha_run * w * dt * inv_b));
    }

    if (c.keep) {
      std::vector<Matrix> st, dn, uu;
      for (int i = 0; i < n; ++i) {
        const auto si = static_cast<std::size_t>(i);
        st.push_back(vars[si].value());
        dn.push_back(x0[si].value());
        uu.push_back(controls[si].value());
      }
      rec.states.push_back(std::move(st));
      rec.denoised.push_back(std::move(dn));
      rec.aggregated.push_back(y.value());
      rec.aggregated_denoised.push_back(y0.value());
      rec.terms.dt.push_back(dt);
      rec.terms.times.push_back(t);
      rec.terms.controls.push_back(std::move(uu));
      rec.terms.running.push_back(psi_run.value());
    }

    for (int i = 0; i < n; ++i) xs[static_cast<std::size_t>(i)] = next[static_cast<std::size_t>(i)].value();
    if (persistent != nullptr) xv = std::move(next);
  }

  dg::Tape local;
  dg::Tape& tp = persistent != nullptr ? *persistent : local;
  std::vector<dg::Var> vars;
  if (persistent != nullptr) {
    vars = xv;
  } else {
    for (const Matrix& x : xs) vars.push_back(tp.constant(x));
  }
  dg::Var y_t = su.agg->aggregate(vars);
  dg::Var psi_t;
  {
    dg::FrozenBinding fixed(tp);
    psi_t = su.psi->evaluate(tp, y_t);
  }
  if (!psi_t.value().allFinite()) {
    throw DivergenceError("non-finite terminal cost", static_cast<int>(steps));
  }
  rec.objective.l_psi = psi_t.value().sum() * inv_b;
  rec.objective.total = rec.objective.control + su.cfg.alpha_run * rec.objective.l_c + rec.objective.l_psi;
  rec.final_agents = xs;
  rec.terminal_y = y_t.value();
  if (c.keep) {
    rec.states.push_back(xs);
    rec.terms.terminal = psi_t.value();
  }
  if (persistent == nullptr) return {};
  add_term(dg::scale(dg::sum(psi_t), inv_b));
  return objective;
}

}  // namespace

RolloutResult bptt_rollout(dg::Tape& tape, const std::vector<ControlPolicy>& policies, const RolloutSetup& setup,
                           const CounterRng& noise, int batch, bool keep_trajectory) {
  RolloutResult out;
  const Core c{ControlMode::Learned, &policies, 0.0, setup, noise, batch, keep_trajectory};
  out.objective = run_core(c, &tape, out.record);
  return out;
}

RolloutRecord simulate(ControlMode mode, const std::vector<ControlPolicy>* policies, double alpha_guid,
                       const RolloutSetup& setup, const CounterRng& noise, int batch, bool keep_trajectory) {
  RolloutRecord rec;
  const Core c{mode, policies, alpha_guid, setup, noise, batch, keep_trajectory};
  run_core(c, nullptr, rec);
  return rec;
}

RolloutRecord sample_cdps(const RolloutSetup& setup, double alpha_guid, const CounterRng& noise, int batch) {
  if (!(alpha_guid >= 0.0) || !std::isfinite(alpha_guid)) {
    throw ConfigError("guidance scale must be non-negative");
  }
  return simulate(ControlMode::Cdps, nullptr, alpha_guid, setup, noise, batch);
}

Matrix sample_poe_naive(const std::vector<const ScoreProvider*>& scores, const NoiseSchedule& schedule,
                        const TimeGrid& grid, const CounterRng& noise, int batch) {
  if (scores.empty()) throw ConfigError("product of experts needs at least one score model");
  if (batch < 1) throw ShapeError("batch must be at least 1");
  if (grid.size() < 2) throw ConfigError("time grid needs at least 2 points");
  const int d = scores.front()->dim();
  for (const ScoreProvider* s : scores) {
    if (s == nullptr || s->dim() != d) throw ConfigError("product of experts needs score models of equal dimension");
  }
  Matrix x = schedule.marginal(grid.times.front()).sigma * noise.stream(0).stream(0).normal(batch, d);
  for (std::size_t k = 0; k + 1 < grid.size(); ++k) {
    const double t = grid.times[k];
    Matrix total = Matrix::Zero(batch, d);
    for (const ScoreProvider* s : scores) total += s->eval(x, t);
    const Matrix drift = reverse_drift(schedule, x, t, total);
    if (!drift.allFinite()) {
      throw DivergenceError("non-finite drift at step " + std::to_string(k), static_cast<int>(k));
    }
    x = em_step(x, grid.dt(k), drift, schedule.g(t), noise.stream(k + 1).stream(0).normal(batch, d));
  }
  return x;
}

namespace {

struct Trainer {
  std::vector<ControlPolicy>& policies;
  MaskAggregator& agg;
  const RolloutSetup& setup;
  const TrainPlan& plan;
  const UpdateObserver& observer;
  CounterRng root;
  std::vector<dg::Adam> adams;
  dg::Adam agg_adam;
  std::vector<dg::Parameter*> agg_params;
  TrainResult result;
  long update = 0;
  double lr;

  Trainer(std::vector<ControlPolicy>& p, MaskAggregator& a, const RolloutSetup& s, const TrainPlan& pl,
          const UpdateObserver& obs)
      : policies(p), agg(a), setup(s), plan(pl), observer(obs), root(pl.seed), lr(pl.lr) {
    plan.validate();
    setup.validate();
    if (static_cast<int>(policies.size()) != setup.num_agents()) {
      throw ConfigError("need one control policy per agent");
    }
    if (setup.agg != &agg) {
      throw ConfigError("rollout setup must refer to the aggregator being trained");
    }
    std::size_t learnable = 0;
    for (ControlPolicy& pol : policies) {
      auto params = pol.parameters();
      for (const dg::Parameter* q : params) learnable += q->trainable ? static_cast<std::size_t>(q->value.size()) : 0;
      adams.emplace_back(std::move(params), dg::AdamConfig{.lr = plan.lr});
    }
    agg_params = agg.parameters();
    for (const dg::Parameter* q : agg_params) learnable += q->trainable ? static_cast<std::size_t>(q->value.size()) : 0;
    if (!agg_params.empty()) agg_adam = dg::Adam(agg_params, dg::AdamConfig{.lr = plan.lr_aggregator});
    if (learnable == 0) {
      throw ConfigError("no learnable parameters to optimize");
    }
    result.final_lr = lr;
  }

  // One gradient update; `active` < 0 updates every policy.
  void run_update(int outer, int active) {
    for (int attempt = 0;; ++attempt) {
      try {
        for (dg::Adam& a : adams) a.zero_grad();
        agg_adam.zero_grad();
        dg::Tape tape;
        RolloutResult r = bptt_rollout(tape, policies, setup, root.stream(static_cast<std::uint64_t>(update)), plan.batch);
        tape.backward(r.objective);
        for (std::size_t i = 0; i < adams.size(); ++i) {
          if (active >= 0 && static_cast<int>(i) != active) continue;
          for (const dg::Parameter* q : adams[i].params()) {
            if (!q->grad.allFinite()) throw DivergenceError("non-finite gradient", -1);
          }
          adams[i].set_lr(lr);
          adams[i].step();
        }
        if (!agg_params.empty()) agg_adam.step();
        CurvePoint pt{update, outer, active, r.record.objective.l_u, r.record.objective.l_c,
                      r.record.objective.l_psi, r.record.objective.total};
        result.curve.push_back(pt);
        ++update;
        if (observer) observer(pt);
        return;
      } catch (const DivergenceError& e) {
        if (attempt > 0) {
          result.final_lr = lr;
          throw TrainingDiverged(std::string("training diverged at update ") + std::to_string(update) + ": " +
                                     e.what(),
                                 e.step(), result);
        }
        lr *= 0.5;
        ++result.lr_halvings;
      }
    }
  }
};

}  // namespace

TrainResult joint_ido(std::vector<ControlPolicy>& policies, MaskAggregator& agg, const RolloutSetup& setup,
                      const TrainPlan& plan, const UpdateObserver& observer) {
  Trainer tr(policies, agg, setup, plan, observer);
  for (int it = 0; it < plan.iterations; ++it) tr.run_update(it, -1);
  tr.result.final_lr = tr.lr;
  return tr.result;
}

TrainResult controlwise_ido(std::vector<ControlPolicy>& policies, MaskAggregator& agg, const RolloutSetup& setup,
                            const TrainPlan& plan, const UpdateObserver& observer) {
  Trainer tr(policies, agg, setup, plan, observer);
  const int n = static_cast<int>(policies.size());
  std::vector<int> order(static_cast<std::size_t>(n));
  auto restore = [&] {
    for (ControlPolicy& p : policies) p.set_trainable(true);
  };
  try {
    for (int outer = 0; outer < plan.iterations; ++outer) {
      std::iota(order.begin(), order.end(), 0);
      if (plan.order == AgentOrder::Shuffle) {
        std::mt19937_64 gen(splitmix64(plan.seed ^ (0x9e3779b97f4a7c15ULL * static_cast<std::uint64_t>(outer + 1))));
        std::shuffle(order.begin(), order.end(), gen);
      }
      for (int agent : order) {
        for (int i = 0; i < n; ++i) policies[static_cast<std::size_t>(i)].set_trainable(i == agent);
        for (int m = 0; m < plan.inner_steps; ++m) tr.run_update(outer, agent);
      }
    }
  } catch (...) {
    restore();
    throw;
  }
  restore();
  tr.result.final_lr = tr.lr;
  return tr.result;
}

}  // namespace cmad
