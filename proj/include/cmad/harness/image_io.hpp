// Copyright (C) 2026 The cmad authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <utility>
#include <vector>

#include "cmad/types.hpp"

namespace cmad::harness {

struct GrayImage {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> pixels;

  std::uint8_t at(int row, int col) const { return pixels[static_cast<std::size_t>(row * width + col)]; }
};

/// Grid rows and columns for n tiles: ceil(sqrt(n)) columns.
std::pair<int, int> grid_shape(int n);

/// Maps [-1, 1] to [0, 255] with clamping.
std::uint8_t to_gray(double v);

/// Tiles each row of `samples` (height x width, row-major) with `pad` pixels
/// of separation. When `highlight` is non-empty, pixels whose index is not in
/// it are dimmed to mark the region an agent controls.
GrayImage make_grid(const Matrix& samples, int height, int width, int pad = 1,
                    const std::vector<int>& highlight = {});

/// 2-D point cloud rendered as a density image over [-extent, extent]^2.
GrayImage scatter_image(const Matrix& points, int size, double extent);

/// Binary PGM (P5, maxval 255).
void write_pgm(const std::filesystem::path& path, const GrayImage& img);
GrayImage read_pgm(const std::filesystem::path& path);

}  // namespace cmad::harness
