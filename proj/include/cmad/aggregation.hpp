// Copyright (C) 2026 The cmad authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <optional>
#include <string>
#include <vector>

#include "cmad/diffgraph/tape.hpp"
#include "cmad/sde.hpp"

namespace cmad {

/// Stripe boundaries of an image-shaped mask. Each boundary b pairs line
/// b - 1 (last line of the earlier stripe) with line b (first line of the
/// next). Lines are rows for horizontal stripes and columns otherwise.
struct SeamLayout {
  int height = 0;
  int width = 0;
  bool horizontal = true;
  std::vector<int> boundaries;
};

struct ControlEnergy {
  /// sum_i ||u^i||^2
  double total = 0.0;
  /// ||M vec(u)||^2: the part of each control on coordinates its agent supplies.
  double aggregated = 0.0;
  /// Energy on coordinates the mask discards.
  double masked_out = 0.0;
};

/// Linear non-overlapping selection Y = M vec(X^1, ..., X^N), stored as one
/// index set per agent: agent i supplies coordinates index(i) of Y from the
/// same coordinates of its own state. The sets partition {0, ..., d-1}, which
/// is exactly M M^T = I.
class MaskAggregator {
 public:
  MaskAggregator(int dim, std::vector<std::vector<int>> index_sets);

  static MaskAggregator identity(int dim);
  /// Contiguous blocks of sizes differing by at most one, larger blocks first.
  static MaskAggregator halves(int dim, int num_agents);
  /// Horizontal stripes of an image stored row-major.
  static MaskAggregator h_stripes(int height, int width, int num_agents);
  static MaskAggregator v_stripes(int height, int width, int num_agents);
  /// "h-stripes", "v-stripes", "halves", "identity" or
  /// "explicit:i,j,...;k,..." (one ';'-separated list per agent).
  static MaskAggregator from_preset(const std::string& preset, int height, int width, int num_agents);

  int dim() const { return dim_; }
  int num_agents() const { return static_cast<int>(index_.size()); }
  const std::vector<int>& indices(int agent) const { return index_.at(static_cast<std::size_t>(agent)); }
  const std::vector<std::vector<int>>& index_sets() const { return index_; }
  /// Agent supplying each coordinate of Y.
  const std::vector<int>& owner() const { return owner_; }
  const std::optional<SeamLayout>& seams() const { return seams_; }

  /// Dense d x (N d) selection matrix, for checks.
  Matrix dense() const;

  Matrix aggregate(const MultiAgentState& state) const;
  Matrix aggregate(const std::vector<Matrix>& agents) const;
  dg::Var aggregate(const std::vector<dg::Var>& agents) const;

  /// M^T grad_Y split per agent; coordinates an agent does not supply get 0.
  std::vector<Matrix> scatter_adjoint(const Matrix& grad_y) const;

  /// Energy split for per-agent controls; total == aggregated + masked_out.
  ControlEnergy control_energy(const std::vector<Matrix>& controls) const;

  /// Learnable aggregation parameters. Fixed masks have none.
  std::vector<dg::Parameter*> parameters() { return {}; }

 private:
  void check_agents(std::size_t n, Eigen::Index cols) const;

  int dim_;
  std::vector<std::vector<int>> index_;
  std::vector<int> owner_;
  std::optional<SeamLayout> seams_;
};

}  // namespace cmad
