// Copyright (C) 2026 The cmad authors
// SPDX-License-Identifier: Apache-2.0

#include "cmad/harness/shapes.hpp"

#include <algorithm>
#include <cmath>

#include "cmad/errors.hpp"

namespace cmad::harness {

namespace {

const char* const kNames[kShapeClasses] = {"hbar", "vbar", "cross", "ring"};

// Uniform integer in [lo, hi].
int pick(const CounterRng& rng, std::uint64_t idx, int lo, int hi) {
  return lo + static_cast<int>(rng.uniform(idx) * (hi - lo + 1));
}

void bar(RowVector& img, bool horizontal, int center, int thickness, int from, int to) {
  const int lo = center - thickness / 2;
  for (int a = lo; a < lo + thickness; ++a) {
    for (int b = from; b <= to; ++b) {
      const int r = horizontal ? a : b;
      const int c = horizontal ? b : a;
      if (r >= 0 && r < kShapeSide && c >= 0 && c < kShapeSide) img(r * kShapeSide + c) = 1.0;
    }
  }
}

}  // namespace

std::string shape_name(int label) {
  if (label < 0 || label >= kShapeClasses) throw DomainError("shape label out of range");
  return kNames[label];
}

int shape_label(const std::string& name) {
  for (int i = 0; i < kShapeClasses; ++i) {
    if (name == kNames[i] || name == std::to_string(i)) return i;
  }
  throw ConfigError("unknown shape class '" + name + "'");
}

RowVector render_shape(int label, const CounterRng& rng) {
  if (label < 0 || label >= kShapeClasses) throw DomainError("shape label out of range");
  RowVector img = RowVector::Constant(kShapeDim, -1.0);
  const int thick = pick(rng, 0, 2, 3);
  const int from = pick(rng, 1, 1, 3);
  const int to = pick(rng, 2, 12, 14);
  switch (label) {
    case 0:
      bar(img, true, pick(rng, 3, 5, 10), thick, from, to);
      break;
    case 1:
      bar(img, false, pick(rng, 3, 5, 10), thick, from, to);
      break;
    case 2:
      bar(img, true, pick(rng, 3, 7, 8), thick, from, to);
      bar(img, false, pick(rng, 4, 7, 8), thick, pick(rng, 5, 1, 3), pick(rng, 6, 12, 14));
      break;
    default: {
      const double cr = 7.5 + (rng.uniform(7) - 0.5);
      const double cc = 7.5 + (rng.uniform(8) - 0.5);
      const double radius = 4.0 + 1.5 * rng.uniform(9);
      const double half = 0.5 + 0.25 * (thick - 2);
      for (int r = 0; r < kShapeSide; ++r) {
        for (int c = 0; c < kShapeSide; ++c) {
          if (std::abs(std::hypot(r - cr, c - cc) - radius) <= half) img(r * kShapeSide + c) = 1.0;
        }
      }
    }
  }
  return img;
}

Matrix sample_shapes(const CounterRng& rng, int n, std::vector<int>* labels) {
  if (n < 0) throw DomainError("sample count must be non-negative");
  Matrix out(n, kShapeDim);
  if (labels != nullptr) labels->assign(static_cast<std::size_t>(n), 0);
  for (int i = 0; i < n; ++i) {
    const int label = i % kShapeClasses;
    out.row(i) = render_shape(label, rng.stream(static_cast<std::uint64_t>(i)));
    if (labels != nullptr) (*labels)[static_cast<std::size_t>(i)] = label;
  }
  return out;
}

ShapesDataset make_shapes(int size, const CounterRng& rng, double held_out) {
  if (size < 2 * kShapeClasses) throw ConfigError("shapes dataset needs at least 8 images");
  if (!(held_out > 0.0 && held_out < 1.0)) throw ConfigError("held-out fraction must lie in (0, 1)");
  const int cycles = size / kShapeClasses;
  const int test_cycles = std::max(1, static_cast<int>(cycles * held_out));
  const int train_n = (cycles - test_cycles) * kShapeClasses;
  const int test_n = test_cycles * kShapeClasses;
  std::vector<int> labels;
  const Matrix all = sample_shapes(rng, train_n + test_n, &labels);
  ShapesDataset ds;
  ds.train_x = all.topRows(train_n);
  ds.test_x = all.bottomRows(test_n);
  ds.train_y.assign(labels.begin(), labels.begin() + train_n);
  ds.test_y.assign(labels.begin() + train_n, labels.end());
  return ds;
}

}  // namespace cmad::harness
