// Copyright (C) 2026 The cmad authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>

#include "cmad/types.hpp"

namespace cmad {

/// Counter-based random source. Every draw is a pure function of the seed,
/// the chain of stream tags and the element index, so two runs that address
/// the same (stream, index) see the same number regardless of call order.
class CounterRng {
 public:
  explicit CounterRng(std::uint64_t seed = 0);

  /// Derive an independent child stream.
  CounterRng stream(std::uint64_t tag) const;

  std::uint64_t bits(std::uint64_t index) const;
  /// Uniform on the open interval (0, 1).
  double uniform(std::uint64_t index) const;
  double normal(std::uint64_t index) const;

  Matrix normal(Eigen::Index rows, Eigen::Index cols) const;
  Matrix uniform(Eigen::Index rows, Eigen::Index cols) const;

  std::uint64_t key() const { return key_; }

 private:
  std::uint64_t key_;
};

std::uint64_t splitmix64(std::uint64_t x);

}  // namespace cmad
