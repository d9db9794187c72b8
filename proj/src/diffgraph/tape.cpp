// Copyright (C) 2026 The cmad authors
// SPDX-License-Identifier: Apache-2.0

#include "cmad/diffgraph/tape.hpp"

#include "cmad/errors.hpp"

namespace cmad::dg {

Parameter::Parameter(std::string n, Matrix v)
    : name(std::move(n)), value(std::move(v)), grad(Matrix::Zero(value.rows(), value.cols())) {}

void Parameter::zero_grad() { grad.setZero(value.rows(), value.cols()); }

const Matrix& Var::value() const {
  if (tape_ == nullptr) {
    throw UsageError("Var is not bound to a tape");
  }
  return tape_->value(*this);
}

bool Var::requires_grad() const { return tape_ != nullptr && tape_->requires_grad(*this); }

std::size_t Tape::idx(Var v) const {
  if (v.tape_ != this || v.id_ < 0 || static_cast<std::size_t>(v.id_) >= nodes_.size()) {
    throw UsageError("Var belongs to a different tape");
  }
  return static_cast<std::size_t>(v.id_);
}

Var Tape::push(Node node) {
  nodes_.push_back(std::move(node));
  return Var(this, static_cast<int>(nodes_.size() - 1));
}

Var Tape::constant(Matrix value) {
  Node n;
  n.value = std::move(value);
  return push(std::move(n));
}

Var Tape::input(Matrix value) {
  Node n;
  n.value = std::move(value);
  n.requires_grad = true;
  return push(std::move(n));
}

Var Tape::parameter(Parameter& p) {
  if (auto it = bound_.find(&p); it != bound_.end()) {
    return Var(this, it->second);
  }
  Node n;
  n.ref = &p.value;
  if (p.trainable && frozen_ == 0) {
    n.requires_grad = true;
    n.param = &p;
  }
  Var v = push(std::move(n));
  bound_[&p] = v.id();
  return v;
}

Var Tape::record(Matrix value, std::initializer_list<Var> parents, BackwardFn fn) {
  Node n;
  n.value = std::move(value);
  for (const Var& p : parents) {
    n.requires_grad = n.requires_grad || nodes_[idx(p)].requires_grad;
  }
  if (n.requires_grad) {
    n.fn = std::move(fn);
  }
  return push(std::move(n));
}

Var Tape::record(Matrix value, const std::vector<Var>& parents, BackwardFn fn) {
  Node n;
  n.value = std::move(value);
  for (const Var& p : parents) {
    n.requires_grad = n.requires_grad || nodes_[idx(p)].requires_grad;
  }
  if (n.requires_grad) {
    n.fn = std::move(fn);
  }
  return push(std::move(n));
}

void Tape::accumulate(Var v, const Matrix& g) {
  Node& n = nodes_[idx(v)];
  if (!n.requires_grad) {
    return;
  }
  const Matrix& val = n.ref != nullptr ? *n.ref : n.value;
  if (g.rows() != val.rows() || g.cols() != val.cols()) {
    throw ShapeError("adjoint shape does not match node value");
  }
  if (n.has_grad) {
    n.grad += g;
  } else {
    n.grad = g;
    n.has_grad = true;
  }
}

void Tape::backward(Var root) {
  const std::size_t r = idx(root);
  if (value(root).rows() != 1 || value(root).cols() != 1) {
    throw UsageError("backward requires a scalar (1x1) root");
  }
  for (auto& n : nodes_) {
    n.has_grad = false;
    n.grad.resize(0, 0);
  }
  if (!nodes_[r].requires_grad) {
    return;
  }
  nodes_[r].grad = Matrix::Ones(1, 1);
  nodes_[r].has_grad = true;
  for (std::size_t i = r + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.has_grad) {
      continue;
    }
    if (n.fn) {
      n.fn(*this, n.grad);
      // Interior adjoints are consumed; only leaves keep theirs.
      n.grad.resize(0, 0);
      n.has_grad = false;
    }
    if (n.param != nullptr) {
      if (n.param->grad.rows() != n.param->value.rows() || n.param->grad.cols() != n.param->value.cols()) {
        n.param->grad = Matrix::Zero(n.param->value.rows(), n.param->value.cols());
      }
      n.param->grad += n.grad;
    }
  }
}

Matrix Tape::grad(Var v) const {
  const Node& n = nodes_[idx(v)];
  if (!n.has_grad) {
    const Matrix& val = n.ref != nullptr ? *n.ref : n.value;
    return Matrix::Zero(val.rows(), val.cols());
  }
  return n.grad;
}

std::size_t Tape::stored_values() const {
  std::size_t total = 0;
  for (const auto& n : nodes_) {
    total += static_cast<std::size_t>(n.value.size());
  }
  return total;
}

void Tape::clear() {
  nodes_.clear();
  bound_.clear();
}

}  // namespace cmad::dg
