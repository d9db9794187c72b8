// Copyright (C) 2026 The cmad authors
// SPDX-License-Identifier: Apache-2.0

#include "cmad/harness/classifier.hpp"

#include <cstdio>

#include "cmad/diffgraph/adam.hpp"
#include "cmad/diffgraph/checkpoint.hpp"
#include "cmad/diffgraph/ops.hpp"

namespace cmad::harness {

Classifier make_classifier(int dim, const std::vector<int>& hidden, int num_classes, std::uint64_t seed) {
  dg::Mlp net({.input_dim = dim, .hidden = hidden, .output_dim = num_classes, .activation = dg::Activation::Silu},
              CounterRng(seed).stream(0xc1a5), "classifier");
  return Classifier(std::move(net), num_classes);
}

double accuracy(const Classifier& clf, const Matrix& x, const std::vector<int>& labels) {
  if (static_cast<std::size_t>(x.rows()) != labels.size() || labels.empty()) {
    throw ShapeError("accuracy: need one label per row");
  }
  const std::vector<int> pred = clf.predict(x);
  std::size_t hit = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) hit += pred[i] == labels[i] ? 1 : 0;
  return static_cast<double>(hit) / static_cast<double>(labels.size());
}

Matrix confusion_matrix(const Classifier& clf, const Matrix& x, const std::vector<int>& labels) {
  if (static_cast<std::size_t>(x.rows()) != labels.size()) throw ShapeError("confusion: need one label per row");
  const int c = clf.num_classes();
  Matrix m = Matrix::Zero(c, c);
  const std::vector<int> pred = clf.predict(x);
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (labels[i] < 0 || labels[i] >= c) throw DomainError("confusion: label out of range");
    m(labels[i], pred[i]) += 1.0;
  }
  return m;
}

ClassifierReport train_classifier(const Matrix& train_x, const std::vector<int>& train_y, const Matrix& test_x,
                                  const std::vector<int>& test_y, int num_classes,
                                  const ClassifierTrainConfig& cfg) {
  if (train_x.rows() == 0 || static_cast<std::size_t>(train_x.rows()) != train_y.size()) {
    throw ShapeError("classifier training: need one label per training row");
  }
  if (cfg.steps < 1 || cfg.batch < 1 || !(cfg.lr > 0.0)) {
    throw ConfigError("classifier training: steps, batch and lr must be positive");
  }
  for (int y : train_y) {
    if (y < 0 || y >= num_classes) throw DomainError("classifier training: label out of range");
  }
  const RowVector first = train_x.row(0);
  if (((train_x.rowwise() - first).array().abs() == 0.0).all()) {
    throw ClassifierTrainingError("classifier training: every training image is identical, labels are unlearnable",
                                  {}, 0.0);
  }

  ClassifierReport rep;
  auto clf = std::make_shared<Classifier>(make_classifier(static_cast<int>(train_x.cols()), cfg.hidden,
                                                          num_classes, cfg.seed));
  dg::Adam adam(clf->net().parameters(), {.lr = cfg.lr});
  const CounterRng root(cfg.seed);
  const Eigen::Index n = train_x.rows();
  for (int step = 0; step < cfg.steps; ++step) {
    const CounterRng rng = root.stream(static_cast<std::uint64_t>(step));
    dg::Tape tape;
    std::vector<dg::Var> losses;
    Matrix xb(cfg.batch, train_x.cols());
    std::vector<int> yb(static_cast<std::size_t>(cfg.batch));
    for (int b = 0; b < cfg.batch; ++b) {
      const auto idx = static_cast<Eigen::Index>(rng.uniform(static_cast<std::uint64_t>(b)) * static_cast<double>(n));
      xb.row(b) = train_x.row(idx);
      yb[static_cast<std::size_t>(b)] = train_y[static_cast<std::size_t>(idx)];
    }
    dg::Var logits = clf->logits(tape, tape.constant(xb));
    // Per-label cross-entropy: rows with other labels are masked out.
    dg::Var total;
    for (int c = 0; c < num_classes; ++c) {
      Matrix mask = Matrix::Zero(cfg.batch, 1);
      for (int b = 0; b < cfg.batch; ++b) mask(b, 0) = yb[static_cast<std::size_t>(b)] == c ? 1.0 : 0.0;
      if (mask.sum() == 0.0) continue;
      dg::Var term = dg::sum(dg::mul(dg::softmax_cross_entropy(logits, c), tape.constant(mask)));
      total = total.valid() ? dg::add(total, term) : term;
    }
    dg::Var loss = dg::scale(total, 1.0 / cfg.batch);
    adam.zero_grad();
    tape.backward(loss);
    adam.step();
    rep.curve.push_back(loss.value()(0, 0));
  }
  clf->net().set_trainable(false);
  rep.held_out_accuracy = accuracy(*clf, test_x, test_y);
  rep.confusion = confusion_matrix(*clf, test_x, test_y);
  if (rep.held_out_accuracy < cfg.min_accuracy) {
    char buf[160];
    std::snprintf(buf, sizeof buf, "classifier training: held-out accuracy %.4f below threshold %.4f",
                  rep.held_out_accuracy, cfg.min_accuracy);
    throw ClassifierTrainingError(buf, rep.curve, rep.held_out_accuracy);
  }
  rep.classifier = std::move(clf);
  return rep;
}

void save_classifier(const std::string& path, const Classifier& clf) {
  const auto params = clf.net().parameters();
  dg::save_checkpoint(path, params);
}

void load_classifier(const std::string& path, Classifier& clf) {
  const auto params = clf.net().parameters();
  dg::load_checkpoint(path, params);
  clf.net().set_trainable(false);
}

}  // namespace cmad::harness
