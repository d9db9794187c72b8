// Copyright (C) 2026 The cmad authors
// SPDX-License-Identifier: Apache-2.0

#include "cmad/harness/experiment.hpp"

#include <cstdio>
#include <fstream>

#include "cmad/diffgraph/checkpoint.hpp"
#include "cmad/harness/image_io.hpp"
#include "cmad/harness/shapes.hpp"

namespace cmad::harness {

namespace {

constexpr std::uint64_t kScoreTag = 0x5c0e;
constexpr std::uint64_t kClassifierTag = 0xc1a5;
constexpr std::uint64_t kPolicyTag = 0x9011;
constexpr std::uint64_t kEvalTag = 0xe7a1;

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("failed writing " + path.string());
}

bool exists(const std::string& path) { return !path.empty() && std::filesystem::exists(path); }

}  // namespace

GaussianMixture gmm2d_data() {
  GaussianMixture g;
  g.weights = {0.25, 0.25, 0.25, 0.25};
  const double pts[4][2] = {{2, 2}, {-2, 2}, {-2, -2}, {2, -2}};
  for (const auto& p : pts) {
    RowVector m(2);
    m << p[0], p[1];
    g.means.push_back(m);
    g.variances.push_back(0.25);
  }
  return g;
}

NetworkScore make_score_network(const ExperimentConfig& cfg) {
  const int dim = cfg.task == Task::Shapes16 ? kShapeDim : 2;
  dg::Mlp net({.input_dim = dim,
               .hidden = cfg.score_hidden,
               .output_dim = dim,
               .activation = dg::Activation::Silu,
               .time_embed = 32},
              CounterRng(cfg.seed).stream(kScoreTag), "score");
  return NetworkScore(std::move(net), cfg.schedule, cfg.eps, cfg.score_param);
}

std::vector<double> train_score_model(NetworkScore& model, const ExperimentConfig& cfg) {
  ScoreTrainConfig tc;
  tc.steps = cfg.score_steps;
  tc.batch = cfg.score_batch;
  tc.lr = cfg.score_lr;
  tc.t_min = cfg.eps;
  tc.seed = splitmix64(cfg.seed ^ kScoreTag);
  if (cfg.task == Task::Shapes16) {
    return train_score(model, [](const CounterRng& r, int n) { return sample_shapes(r, n); }, tc);
  }
  const GaussianMixture data = gmm2d_data();
  return train_score(model, [&data](const CounterRng& r, int n) { return data.sample(r, n); }, tc);
}

ClassifierReport train_shape_classifier(const ExperimentConfig& cfg) {
  const ShapesDataset ds = make_shapes(cfg.dataset_size, CounterRng(cfg.seed).stream(kClassifierTag));
  ClassifierTrainConfig tc;
  tc.hidden = cfg.classifier_hidden;
  tc.steps = cfg.classifier_steps;
  tc.lr = cfg.classifier_lr;
  tc.seed = splitmix64(cfg.seed ^ kClassifierTag);
  return train_classifier(ds.train_x, ds.train_y, ds.test_x, ds.test_y, kShapeClasses, tc);
}

TaskAssets prepare_assets(const ExperimentConfig& cfg) {
  cfg.validate();
  TaskAssets a;
  a.task = cfg.task;
  if (cfg.task == Task::Gmm2d) {
    a.height = 1;
    a.width = 2;
    a.data = gmm2d_data();
    a.score = std::make_shared<AnalyticScore>(a.data, cfg.schedule);
    return a;
  }
  a.height = kShapeSide;
  a.width = kShapeSide;
  auto net = std::make_shared<NetworkScore>(make_score_network(cfg));
  if (exists(cfg.score_checkpoint)) {
    dg::load_checkpoint(cfg.score_checkpoint, net->parameters());
    net->net().set_trainable(false);
  } else {
    train_score_model(*net, cfg);
    if (!cfg.score_checkpoint.empty()) {
      const auto params = std::as_const(net->net()).parameters();
      dg::save_checkpoint(cfg.score_checkpoint, params);
    }
  }
  a.score = net;
  if (exists(cfg.classifier_checkpoint)) {
    auto clf = std::make_shared<Classifier>(make_classifier(kShapeDim, cfg.classifier_hidden, kShapeClasses));
    load_classifier(cfg.classifier_checkpoint, *clf);
    a.classifier = clf;
  } else {
    ClassifierReport rep = train_shape_classifier(cfg);
    if (!cfg.classifier_checkpoint.empty()) save_classifier(cfg.classifier_checkpoint, *rep.classifier);
    a.classifier = rep.classifier;
  }
  return a;
}

MaskAggregator make_aggregator(const ExperimentConfig& cfg, const TaskAssets& assets) {
  return MaskAggregator::from_preset(cfg.mask, assets.height, assets.width, cfg.num_agents);
}

TerminalCost make_terminal(const ExperimentConfig& cfg, const TaskAssets& assets, const MaskAggregator& agg) {
  TerminalCost psi;
  if (cfg.task == Task::Shapes16) {
    psi = TerminalCost::classifier(assets.classifier, cfg.soc.target_label);
  } else {
    const RowVector target = assets.data.means.at(static_cast<std::size_t>(cfg.soc.target_label));
    psi = cfg.terminal == TerminalKind::Quadratic ? TerminalCost::quadratic(target)
                                                  : TerminalCost::gaussian(target, cfg.terminal_std);
  }
  if ((cfg.soc.beta_seam > 0.0 || cfg.soc.gamma_seam > 0.0) && agg.seams()) {
    psi = psi.with_seam(*agg.seams(), cfg.soc.beta_seam, cfg.soc.gamma_seam, cfg.soc.charbonnier_eps);
  }
  return psi;
}

std::vector<ControlPolicy> make_policies(const ExperimentConfig& cfg, int dim) {
  std::vector<ControlPolicy> out;
  const CounterRng root = CounterRng(cfg.seed).stream(kPolicyTag);
  for (int i = 0; i < cfg.num_agents; ++i) {
    out.emplace_back(i, cfg.policy_spec(dim), root.stream(static_cast<std::uint64_t>(i)));
  }
  return out;
}

void save_policies(const std::string& path, const std::vector<ControlPolicy>& policies) {
  std::vector<const dg::Parameter*> params;
  for (const ControlPolicy& p : policies) {
    for (const dg::Parameter* q : p.parameters()) params.push_back(q);
  }
  dg::save_checkpoint(path, params);
}

void load_policies(const std::string& path, std::vector<ControlPolicy>& policies) {
  std::vector<dg::Parameter*> params;
  for (ControlPolicy& p : policies) {
    for (dg::Parameter* q : p.parameters()) params.push_back(q);
  }
  dg::load_checkpoint(path, params);
}

std::string metrics_csv(const Metrics& m) {
  std::string out = "task,method,num_agents,samples,updates,mean_psi,accuracy,l_u,l_c,objective\n";
  out += m.task + "," + m.method + "," + std::to_string(m.num_agents) + "," + std::to_string(m.samples) + "," +
         std::to_string(m.updates) + "," + fmt(m.mean_psi) + "," + fmt(m.accuracy) + "," + fmt(m.l_u) + "," +
         fmt(m.l_c) + "," + fmt(m.objective) + "\n";
  return out;
}

std::string curve_csv(const TrainResult& r) {
  std::string out = "iteration,l_u,l_c,l_psi,J\n";
  for (const CurvePoint& p : r.curve) {
    out += std::to_string(p.update) + "," + fmt(p.l_u) + "," + fmt(p.l_c) + "," + fmt(p.l_psi) + "," +
           fmt(p.objective) + "\n";
  }
  return out;
}

std::vector<std::string> report_files() { return {"config.txt", "metrics.csv", "curve.csv", "samples.pgm"}; }

RunOutput run_experiment(const ExperimentConfig& cfg, const RunOptions& opts) {
  return run_experiment(cfg, prepare_assets(cfg), opts);
}

RunOutput run_experiment(const ExperimentConfig& cfg, const TaskAssets& assets, const RunOptions& opts) {
  cfg.validate();
  if (!assets.score) throw ConfigError("task assets carry no score model");
  RunOutput out;
  MaskAggregator agg = make_aggregator(cfg, assets);
  if (agg.dim() != assets.dim()) throw ConfigError("mask dimension does not match the task dimension");
  const TerminalCost psi = make_terminal(cfg, assets, agg);

  RolloutSetup setup;
  setup.score = assets.score.get();
  setup.agg = &agg;
  setup.psi = &psi;
  setup.cfg = cfg.soc;
  setup.schedule = cfg.schedule;
  setup.grid = cfg.grid();

  if (opts.write) {
    out.dir = resolve_output(cfg);
    std::error_code ec;
    std::filesystem::create_directories(out.dir, ec);
    if (ec) throw IoError("cannot create output directory " + out.dir.string() + ": " + ec.message());
    write_text(out.dir / "config.txt", cfg.to_text());
  }

  const bool learned = cfg.method == Method::CmadJoint || cfg.method == Method::CmadControlWise;
  if (learned) {
    out.policies = make_policies(cfg, agg.dim());
    if (opts.train) {
      const TrainPlan plan = cfg.plan();
      const std::string ckpt = opts.write ? (out.dir / "policies.ckpt").string() : std::string();
      UpdateObserver observer;
      if (!ckpt.empty() && cfg.checkpoint_every > 0) {
        observer = [&](const CurvePoint& p) {
          if ((p.update + 1) % cfg.checkpoint_every == 0) save_policies(ckpt, out.policies);
        };
      }
      out.training = plan.mode == TrainMode::Joint ? joint_ido(out.policies, agg, setup, plan, observer)
                                                   : controlwise_ido(out.policies, agg, setup, plan, observer);
      if (!ckpt.empty()) save_policies(ckpt, out.policies);
    } else {
      if (!exists(cfg.policy_checkpoint)) {
        throw IoError("policy checkpoint '" + cfg.policy_checkpoint + "' not found");
      }
      load_policies(cfg.policy_checkpoint, out.policies);
    }
  }

  // Evaluation: chunk j of every method uses the same noise stream.
  const CounterRng eval = CounterRng(cfg.seed).stream(kEvalTag);
  const int n_agents = agg.num_agents();
  out.samples.resize(cfg.eval_samples, agg.dim());
  out.agent_samples.assign(static_cast<std::size_t>(n_agents), Matrix(cfg.eval_samples, agg.dim()));
  double l_u = 0.0, l_c = 0.0, total = 0.0;
  int done = 0;
  for (int chunk = 0; done < cfg.eval_samples; ++chunk) {
    const int b = std::min(cfg.eval_batch, cfg.eval_samples - done);
    const CounterRng rng = eval.stream(static_cast<std::uint64_t>(chunk));
    if (cfg.method == Method::PoeNaive) {
      std::vector<const ScoreProvider*> scores(static_cast<std::size_t>(n_agents), assets.score.get());
      const Matrix x = sample_poe_naive(scores, cfg.schedule, setup.grid, rng, b);
      out.samples.middleRows(done, b) = x;
      for (auto& a : out.agent_samples) a.middleRows(done, b) = x;
    } else {
      const ControlMode mode = learned ? ControlMode::Learned
                               : cfg.method == Method::Cdps ? ControlMode::Cdps
                                                            : ControlMode::None;
      const RolloutRecord rec = simulate(mode, &out.policies, cfg.cdps_scale, setup, rng, b);
      out.samples.middleRows(done, b) = rec.terminal_y;
      for (int i = 0; i < n_agents; ++i) {
        out.agent_samples[static_cast<std::size_t>(i)].middleRows(done, b) = rec.final_agents[static_cast<std::size_t>(i)];
      }
      l_u += rec.objective.l_u * b;
      l_c += rec.objective.l_c * b;
      total += rec.objective.total * b;
    }
    done += b;
  }

  Metrics& m = out.metrics;
  m.task = to_string(cfg.task);
  m.method = to_string(cfg.method);
  m.num_agents = n_agents;
  m.samples = cfg.eval_samples;
  m.updates = static_cast<long>(out.training.curve.size());
  const Matrix psi_t = psi.evaluate(out.samples);
  m.mean_psi = psi_t.mean();
  std::vector<int> pred = cfg.task == Task::Shapes16 ? assets.classifier->predict(out.samples)
                                                     : assets.data.classify(out.samples);
  long hit = 0;
  for (int p : pred) hit += p == cfg.soc.target_label ? 1 : 0;
  m.accuracy = static_cast<double>(hit) / static_cast<double>(pred.size());
  m.l_u = l_u / cfg.eval_samples;
  m.l_c = l_c / cfg.eval_samples;
  m.objective = cfg.method == Method::PoeNaive ? m.mean_psi : total / cfg.eval_samples;

  if (opts.write) {
    write_text(out.dir / "metrics.csv", metrics_csv(m));
    write_text(out.dir / "curve.csv", curve_csv(out.training));
    const int shown = std::min(64, cfg.eval_samples);
    if (cfg.task == Task::Shapes16) {
      write_pgm(out.dir / "samples.pgm", make_grid(out.samples.topRows(shown), assets.height, assets.width));
      for (int i = 0; i < n_agents; ++i) {
        write_pgm(out.dir / ("agent" + std::to_string(i) + ".pgm"),
                  make_grid(out.agent_samples[static_cast<std::size_t>(i)].topRows(shown), assets.height,
                            assets.width, 1, agg.indices(i)));
      }
    } else {
      write_pgm(out.dir / "samples.pgm", scatter_image(out.samples, 64, 4.0));
    }
  }
  return out;
}

}  // namespace cmad::harness
