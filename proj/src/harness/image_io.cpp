// Copyright (C) 2026 The cmad authors
// SPDX-License-Identifier: Apache-2.0

#include "cmad/harness/image_io.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <string>

#include "cmad/errors.hpp"

namespace cmad::harness {

std::pair<int, int> grid_shape(int n) {
  if (n < 1) throw ShapeError("grid needs at least one tile");
  const int cols = static_cast<int>(std::ceil(std::sqrt(static_cast<double>(n)) - 1e-12));
  const int rows = (n + cols - 1) / cols;
  return {rows, cols};
}

std::uint8_t to_gray(double v) {
  const double s = std::clamp((v + 1.0) * 127.5, 0.0, 255.0);
  return static_cast<std::uint8_t>(std::lround(s));
}

GrayImage make_grid(const Matrix& samples, int height, int width, int pad, const std::vector<int>& highlight) {
  if (samples.cols() != static_cast<Eigen::Index>(height) * width) {
    throw ShapeError("grid: sample width does not match the image size");
  }
  if (pad < 0) throw ShapeError("grid: negative padding");
  const auto [rows, cols] = grid_shape(static_cast<int>(samples.rows()));
  GrayImage img;
  img.width = cols * width + (cols + 1) * pad;
  img.height = rows * height + (rows + 1) * pad;
  img.pixels.assign(static_cast<std::size_t>(img.width) * static_cast<std::size_t>(img.height), 128);
  std::vector<bool> lit(static_cast<std::size_t>(height * width), highlight.empty());
  for (int i : highlight) lit.at(static_cast<std::size_t>(i)) = true;
  for (Eigen::Index s = 0; s < samples.rows(); ++s) {
    const int gr = static_cast<int>(s) / cols;
    const int gc = static_cast<int>(s) % cols;
    const int top = pad + gr * (height + pad);
    const int left = pad + gc * (width + pad);
    for (int r = 0; r < height; ++r) {
      for (int c = 0; c < width; ++c) {
        const int k = r * width + c;
        std::uint8_t g = to_gray(samples(s, k));
        if (!lit[static_cast<std::size_t>(k)]) g = static_cast<std::uint8_t>(g / 4);
        img.pixels[static_cast<std::size_t>((top + r) * img.width + left + c)] = g;
      }
    }
  }
  return img;
}

GrayImage scatter_image(const Matrix& points, int size, double extent) {
  if (points.cols() != 2) throw ShapeError("scatter: points must be 2-D");
  if (size < 1 || !(extent > 0.0)) throw ShapeError("scatter: bad canvas");
  std::vector<int> counts(static_cast<std::size_t>(size * size), 0);
  for (Eigen::Index i = 0; i < points.rows(); ++i) {
    const int c = static_cast<int>(std::floor((points(i, 0) + extent) / (2.0 * extent) * size));
    const int r = static_cast<int>(std::floor((extent - points(i, 1)) / (2.0 * extent) * size));
    if (r >= 0 && r < size && c >= 0 && c < size) ++counts[static_cast<std::size_t>(r * size + c)];
  }
  const int peak = std::max(1, *std::max_element(counts.begin(), counts.end()));
  GrayImage img{size, size, std::vector<std::uint8_t>(counts.size())};
  for (std::size_t k = 0; k < counts.size(); ++k) {
    img.pixels[k] = static_cast<std::uint8_t>(255 - (255 * counts[k]) / peak);
  }
  return img;
}

void write_pgm(const std::filesystem::path& path, const GrayImage& img) {
  if (img.pixels.size() != static_cast<std::size_t>(img.width) * static_cast<std::size_t>(img.height)) {
    throw ShapeError("pgm: pixel count does not match the image size");
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << "P5\n" << img.width << " " << img.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(img.pixels.data()), static_cast<std::streamsize>(img.pixels.size()));
  if (!out) throw IoError("failed writing " + path.string());
}

GrayImage read_pgm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  std::string magic;
  int maxval = 0;
  GrayImage img;
  in >> magic >> img.width >> img.height >> maxval;
  if (!in || magic != "P5" || maxval != 255 || img.width < 1 || img.height < 1) {
    throw IoError(path.string() + ": not an 8-bit binary PGM");
  }
  in.get();
  img.pixels.resize(static_cast<std::size_t>(img.width) * static_cast<std::size_t>(img.height));
  in.read(reinterpret_cast<char*>(img.pixels.data()), static_cast<std::streamsize>(img.pixels.size()));
  if (in.gcount() != static_cast<std::streamsize>(img.pixels.size())) {
    throw IoError(path.string() + ": truncated pixel data");
  }
  return img;
}

}  // namespace cmad::harness
