// Copyright (C) 2026 The cmad authors
// SPDX-License-Identifier: Apache-2.0

#include "cmad/noise.hpp"

#include <cmath>
#include <numbers>

namespace cmad {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

CounterRng::CounterRng(std::uint64_t seed) : key_(splitmix64(seed ^ 0x6a09e667f3bcc908ULL)) {}

CounterRng CounterRng::stream(std::uint64_t tag) const {
  CounterRng child;
  child.key_ = splitmix64(key_ ^ splitmix64(tag + 0x3c6ef372fe94f82bULL));
  return child;
}

std::uint64_t CounterRng::bits(std::uint64_t index) const {
  return splitmix64(key_ + 0xd1b54a32d192ed03ULL * (index + 1));
}

double CounterRng::uniform(std::uint64_t index) const {
  return (static_cast<double>(bits(index) >> 11) + 0.5) * 0x1.0p-53;
}

double CounterRng::normal(std::uint64_t index) const {
  // Box-Muller on two uniforms drawn from disjoint counters.
  const double u1 = uniform(2 * index);
  const double u2 = uniform(2 * index + 1);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

Matrix CounterRng::normal(Eigen::Index rows, Eigen::Index cols) const {
  Matrix out(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) {
      out(r, c) = normal(static_cast<std::uint64_t>(r * cols + c));
    }
  }
  return out;
}

Matrix CounterRng::uniform(Eigen::Index rows, Eigen::Index cols) const {
  Matrix out(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) {
      out(r, c) = uniform(static_cast<std::uint64_t>(r * cols + c));
    }
  }
  return out;
}

}  // namespace cmad
