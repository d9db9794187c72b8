// Copyright (C) 2026 The cmad authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <deque>
#include <functional>
#include <initializer_list>
#include <map>
#include <string>
#include <vector>

#include "cmad/types.hpp"

namespace cmad::dg {

/// A named trainable tensor living outside any tape. Tapes read its value when
/// it is bound as a leaf and add into `grad` during backward.
struct Parameter {
  std::string name;
  Matrix value;
  Matrix grad;
  bool trainable = true;

  Parameter() = default;
  Parameter(std::string n, Matrix v);

  void zero_grad();
};

class Tape;

/// Handle to a node on a tape. Cheap to copy; only valid while its tape lives.
class Var {
 public:
  Var() = default;

  const Matrix& value() const;
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
  bool requires_grad() const;
  bool valid() const { return tape_ != nullptr; }
  Tape* tape() const { return tape_; }
  int id() const { return id_; }

 private:
  friend class Tape;
  Var(Tape* tape, int id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  int id_ = -1;
};

/// Receives the adjoint of the node's output and pushes adjoints to its parents
/// through Tape::accumulate.
using BackwardFn = std::function<void(Tape&, const Matrix&)>;

/// Records elementary operations in evaluation order. Nodes are stored in a
/// deque so references to values stay valid while the tape grows.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Leaf that never receives an adjoint.
  Var constant(Matrix value);
  /// Differentiable leaf; its adjoint is readable with grad() after backward.
  Var input(Matrix value);
  /// Leaf bound to a parameter. The node refers to the parameter's storage, so
  /// the parameter must outlive the tape and stay unchanged while it is in
  /// use. Binding the same parameter twice returns the same node. Frozen
  /// parameters (trainable == false) are excluded from the backward pass.
  Var parameter(Parameter& p);

  /// Appends an interior node. `fn` is dropped when no parent needs a gradient.
  Var record(Matrix value, std::initializer_list<Var> parents, BackwardFn fn);
  Var record(Matrix value, const std::vector<Var>& parents, BackwardFn fn);

  /// Reverse sweep from a 1x1 root. Adjoints of bound parameters are added to
  /// Parameter::grad. Throws UsageError for a non-scalar root.
  void backward(Var root);

  /// Adjoint of a leaf `v` from the last backward; zeros if nothing reached it.
  /// Interior adjoints are released during the sweep.
  Matrix grad(Var v) const;

  /// Adds `g` into the adjoint of `v`; no-op for nodes that need no gradient.
  void accumulate(Var v, const Matrix& g);
  bool requires_grad(Var v) const { return nodes_[idx(v)].requires_grad; }
  const Matrix& value(Var v) const {
    const Node& n = nodes_[idx(v)];
    return n.ref != nullptr ? *n.ref : n.value;
  }

  std::size_t size() const { return nodes_.size(); }
  /// Number of doubles held in node values (memory accounting).
  std::size_t stored_values() const;
  void clear();

  /// While positive, parameter() binds as a constant even for trainable
  /// parameters. See FrozenBinding.
  int frozen_depth() const { return frozen_; }

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    BackwardFn fn;
    Parameter* param = nullptr;
    const Matrix* ref = nullptr;
    bool requires_grad = false;
    bool has_grad = false;
  };

  std::size_t idx(Var v) const;
  Var push(Node node);

  std::deque<Node> nodes_;
  std::map<const Parameter*, int> bound_;
  int frozen_ = 0;

  friend class FrozenBinding;
};

/// Scope in which every parameter bound to `tape` is treated as fixed, so a
/// backward pass leaves Parameter::grad untouched.
class FrozenBinding {
 public:
  explicit FrozenBinding(Tape& tape) : tape_(tape) { ++tape_.frozen_; }
  ~FrozenBinding() { --tape_.frozen_; }
  FrozenBinding(const FrozenBinding&) = delete;
  FrozenBinding& operator=(const FrozenBinding&) = delete;

 private:
  Tape& tape_;
};

}  // namespace cmad::dg
