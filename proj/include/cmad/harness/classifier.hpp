// Copyright (C) 2026 The cmad authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <memory>
#include <string>
#include <vector>

#include "cmad/costs.hpp"
#include "cmad/errors.hpp"

namespace cmad::harness {

struct ClassifierTrainConfig {
  std::vector<int> hidden = {64};
  int steps = 1500;
  int batch = 64;
  double lr = 1e-3;
  double min_accuracy = 0.95;
  std::uint64_t seed = 0;
};

struct ClassifierReport {
  std::shared_ptr<Classifier> classifier;
  double held_out_accuracy = 0.0;
  std::vector<double> curve;
  /// confusion(true, predicted) counts on the held-out split.
  Matrix confusion;
};

/// Raised when the classifier misses its accuracy threshold.
class ClassifierTrainingError : public TrainingError {
 public:
  ClassifierTrainingError(const std::string& what, std::vector<double> curve, double accuracy)
      : TrainingError(what), curve_(std::move(curve)), accuracy_(accuracy) {}
  const std::vector<double>& curve() const { return curve_; }
  double accuracy() const { return accuracy_; }

 private:
  std::vector<double> curve_;
  double accuracy_;
};

/// Minibatch Adam on softmax cross-entropy. Throws ClassifierTrainingError
/// when held-out accuracy ends below cfg.min_accuracy, and immediately when
/// every training image is identical.
ClassifierReport train_classifier(const Matrix& train_x, const std::vector<int>& train_y, const Matrix& test_x,
                                  const std::vector<int>& test_y, int num_classes,
                                  const ClassifierTrainConfig& cfg);

double accuracy(const Classifier& clf, const Matrix& x, const std::vector<int>& labels);
Matrix confusion_matrix(const Classifier& clf, const Matrix& x, const std::vector<int>& labels);

/// Untrained classifier with the given architecture (for loading).
Classifier make_classifier(int dim, const std::vector<int>& hidden, int num_classes, std::uint64_t seed = 0);
void save_classifier(const std::string& path, const Classifier& clf);
void load_classifier(const std::string& path, Classifier& clf);

}  // namespace cmad::harness
