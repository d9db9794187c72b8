// Copyright (C) 2026 The cmad authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>
#include <vector>

#include "cmad/noise.hpp"
#include "cmad/types.hpp"

namespace cmad::harness {

inline constexpr int kShapeSide = 16;
inline constexpr int kShapeDim = kShapeSide * kShapeSide;
inline constexpr int kShapeClasses = 4;

/// 0 hbar, 1 vbar, 2 cross, 3 ring.
std::string shape_name(int label);
/// Accepts a class name or its index.
int shape_label(const std::string& name);

/// One 16x16 image, row-major in a 1 x 256 row, background -1 and strokes +1.
RowVector render_shape(int label, const CounterRng& rng);

/// `n` images with labels cycling through the classes.
Matrix sample_shapes(const CounterRng& rng, int n, std::vector<int>* labels = nullptr);

struct ShapesDataset {
  Matrix train_x;
  std::vector<int> train_y;
  Matrix test_x;
  std::vector<int> test_y;
};

/// Balanced dataset of `size` images; the last `held_out` fraction (rounded
/// down to whole class cycles) forms the held-out split.
ShapesDataset make_shapes(int size, const CounterRng& rng, double held_out = 0.2);

}  // namespace cmad::harness
