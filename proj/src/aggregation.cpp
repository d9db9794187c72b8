// Copyright (C) 2026 The cmad authors
// SPDX-License-Identifier: Apache-2.0

#include "cmad/aggregation.hpp"

#include <sstream>

#include "cmad/diffgraph/ops.hpp"
#include "cmad/errors.hpp"

namespace cmad {

namespace {

// Line ranges [begin, end) splitting `lines` into n stripes; the first
// lines % n stripes are one line taller.
std::vector<std::pair<int, int>> split_lines(int lines, int n) {
  if (n < 1 || lines < n) {
    throw ConfigError("cannot split " + std::to_string(lines) + " lines among " + std::to_string(n) + " agents");
  }
  std::vector<std::pair<int, int>> out;
  int begin = 0;
  for (int i = 0; i < n; ++i) {
    const int len = lines / n + (i < lines % n ? 1 : 0);
    out.emplace_back(begin, begin + len);
    begin += len;
  }
  return out;
}

}  // namespace

MaskAggregator::MaskAggregator(int dim, std::vector<std::vector<int>> index_sets)
    : dim_(dim), index_(std::move(index_sets)), owner_(static_cast<std::size_t>(dim), -1) {
  if (dim < 1 || index_.empty()) {
    throw ConfigError("aggregator needs dim >= 1 and at least one agent");
  }
  // M M^T = I  <=>  every output coordinate is selected exactly once.
  for (std::size_t i = 0; i < index_.size(); ++i) {
    for (int c : index_[i]) {
      if (c < 0 || c >= dim) {
        throw ConfigError("mask index " + std::to_string(c) + " outside [0, dim)");
      }
      if (owner_[static_cast<std::size_t>(c)] != -1) {
        throw ConfigError("mask selects coordinate " + std::to_string(c) + " twice");
      }
      owner_[static_cast<std::size_t>(c)] = static_cast<int>(i);
    }
  }
  for (int c = 0; c < dim; ++c) {
    if (owner_[static_cast<std::size_t>(c)] == -1) {
      throw ConfigError("mask leaves coordinate " + std::to_string(c) + " unassigned");
    }
  }
}

MaskAggregator MaskAggregator::identity(int dim) {
  std::vector<int> all(static_cast<std::size_t>(dim));
  for (int c = 0; c < dim; ++c) all[static_cast<std::size_t>(c)] = c;
  return MaskAggregator(dim, {all});
}

MaskAggregator MaskAggregator::halves(int dim, int num_agents) {
  std::vector<std::vector<int>> sets;
  for (auto [b, e] : split_lines(dim, num_agents)) {
    std::vector<int> s;
    for (int c = b; c < e; ++c) s.push_back(c);
    sets.push_back(std::move(s));
  }
  return MaskAggregator(dim, std::move(sets));
}

MaskAggregator MaskAggregator::h_stripes(int height, int width, int num_agents) {
  std::vector<std::vector<int>> sets;
  SeamLayout seams{height, width, true, {}};
  for (auto [b, e] : split_lines(height, num_agents)) {
    std::vector<int> s;
    for (int r = b; r < e; ++r) {
      for (int c = 0; c < width; ++c) s.push_back(r * width + c);
    }
    sets.push_back(std::move(s));
    if (b > 0) seams.boundaries.push_back(b);
  }
  MaskAggregator agg(height * width, std::move(sets));
  agg.seams_ = seams;
  return agg;
}

MaskAggregator MaskAggregator::v_stripes(int height, int width, int num_agents) {
  std::vector<std::vector<int>> sets;
  SeamLayout seams{height, width, false, {}};
  for (auto [b, e] : split_lines(width, num_agents)) {
    std::vector<int> s;
    for (int r = 0; r < height; ++r) {
      for (int c = b; c < e; ++c) s.push_back(r * width + c);
    }
    sets.push_back(std::move(s));
    if (b > 0) seams.boundaries.push_back(b);
  }
  MaskAggregator agg(height * width, std::move(sets));
  agg.seams_ = seams;
  return agg;
}

MaskAggregator MaskAggregator::from_preset(const std::string& preset, int height, int width, int num_agents) {
  const int dim = height * width;
  if (preset == "h-stripes") return h_stripes(height, width, num_agents);
  if (preset == "v-stripes") return v_stripes(height, width, num_agents);
  if (preset == "halves") return halves(dim, num_agents);
  if (preset == "identity") {
    if (num_agents != 1) throw ConfigError("identity mask requires exactly one agent");
    return identity(dim);
  }
  const std::string prefix = "explicit:";
  if (preset.rfind(prefix, 0) == 0) {
    std::vector<std::vector<int>> sets;
    std::stringstream groups(preset.substr(prefix.size()));
    std::string group;
    while (std::getline(groups, group, ';')) {
      std::vector<int> s;
      std::stringstream items(group);
      std::string item;
      while (std::getline(items, item, ',')) {
        try {
          s.push_back(std::stoi(item));
        } catch (const std::exception&) {
          throw ConfigError("bad index '" + item + "' in mask preset");
        }
      }
      sets.push_back(std::move(s));
    }
    if (static_cast<int>(sets.size()) != num_agents) {
      throw ConfigError("explicit mask lists " + std::to_string(sets.size()) + " agents, expected " +
                        std::to_string(num_agents));
    }
    return MaskAggregator(dim, std::move(sets));
  }
  throw ConfigError("unknown mask preset '" + preset + "'");
}

Matrix MaskAggregator::dense() const {
  const int n = num_agents();
  Matrix m = Matrix::Zero(dim_, static_cast<Eigen::Index>(n) * dim_);
  for (int i = 0; i < n; ++i) {
    for (int c : index_[static_cast<std::size_t>(i)]) m(c, i * dim_ + c) = 1.0;
  }
  return m;
}

void MaskAggregator::check_agents(std::size_t n, Eigen::Index cols) const {
  if (n != index_.size()) {
    throw ShapeError("aggregator expects " + std::to_string(index_.size()) + " agents, got " + std::to_string(n));
  }
  if (cols != dim_) {
    throw ShapeError("agent dimension " + std::to_string(cols) + " does not match aggregator dimension " +
                     std::to_string(dim_));
  }
}

Matrix MaskAggregator::aggregate(const MultiAgentState& state) const { return aggregate(state.agents); }

Matrix MaskAggregator::aggregate(const std::vector<Matrix>& agents) const {
  check_agents(agents.size(), agents.empty() ? 0 : agents.front().cols());
  Matrix y(agents.front().rows(), dim_);
  for (std::size_t i = 0; i < agents.size(); ++i) {
    if (agents[i].cols() != dim_ || agents[i].rows() != y.rows()) {
      throw ShapeError("agent states differ in shape");
    }
    for (int c : index_[i]) y.col(c) = agents[i].col(c);
  }
  return y;
}

dg::Var MaskAggregator::aggregate(const std::vector<dg::Var>& agents) const {
  check_agents(agents.size(), agents.empty() ? 0 : agents.front().cols());
  for (const auto& a : agents) {
    if (a.cols() != dim_) throw ShapeError("agent states differ in shape");
  }
  return dg::assemble(agents, index_, dim_);
}

std::vector<Matrix> MaskAggregator::scatter_adjoint(const Matrix& grad_y) const {
  if (grad_y.cols() != dim_) {
    throw ShapeError("scatter_adjoint: gradient has wrong dimension");
  }
  std::vector<Matrix> out;
  for (const auto& set : index_) {
    Matrix g = Matrix::Zero(grad_y.rows(), dim_);
    for (int c : set) g.col(c) = grad_y.col(c);
    out.push_back(std::move(g));
  }
  return out;
}

ControlEnergy MaskAggregator::control_energy(const std::vector<Matrix>& controls) const {
  check_agents(controls.size(), controls.empty() ? 0 : controls.front().cols());
  ControlEnergy e;
  for (std::size_t i = 0; i < controls.size(); ++i) {
    e.total += controls[i].squaredNorm();
    for (int c = 0; c < dim_; ++c) {
      const double part = controls[i].col(c).squaredNorm();
      if (owner_[static_cast<std::size_t>(c)] == static_cast<int>(i)) {
        e.aggregated += part;
      } else {
        e.masked_out += part;
      }
    }
  }
  return e;
}

}  // namespace cmad
