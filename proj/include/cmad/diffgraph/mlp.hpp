// Copyright (C) 2026 The cmad authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>
#include <vector>

#include "cmad/diffgraph/tape.hpp"
#include "cmad/noise.hpp"

namespace cmad::dg {

enum class Activation { Tanh, Silu };

struct MlpSpec {
  int input_dim = 0;
  std::vector<int> hidden;
  int output_dim = 1;
  Activation activation = Activation::Silu;
  /// Width of the sinusoidal time features appended to the input; 0 disables
  /// time conditioning. Must be even.
  int time_embed = 0;
};

/// Sinusoidal features [sin(w_j t), cos(w_j t)] with w_j = pi 2^(j-1),
/// replicated over `rows`.
Matrix time_embedding(double t, int width, Eigen::Index rows);
/// Per-row times.
Matrix time_embedding(const Vector& times, int width);

/// Fully connected network with smooth activations on hidden layers and a
/// linear head.
class Mlp {
 public:
  Mlp() = default;
  Mlp(MlpSpec spec, const CounterRng& rng, const std::string& name);

  /// Head weights and bias set to zero: the network outputs 0 everywhere.
  void zero_head();
  /// Head weights zero and every head bias set to `c`: a constant network.
  void constant_output(double c);

  /// x is B x input_dim (may have zero columns when the network only sees t).
  Var forward(Tape& tape, Var x, double t) const;
  /// One time per row of x.
  Var forward(Tape& tape, Var x, const Vector& times) const;
  Var forward(Tape& tape, Var x) const;
  Matrix eval(const Matrix& x, double t = 0.0) const;

  const MlpSpec& spec() const { return spec_; }
  int num_layers() const { return static_cast<int>(weights_.size()); }
  const Parameter& weight(int layer) const { return weights_[layer]; }
  const Parameter& bias(int layer) const { return biases_[layer]; }

  std::vector<Parameter*> parameters();
  std::vector<const Parameter*> parameters() const;
  std::size_t parameter_count() const;
  void set_trainable(bool trainable);

 private:
  MlpSpec spec_;
  // Mutable so a const network can still bind its parameters to a tape; the
  // tape only ever writes into Parameter::grad.
  mutable std::vector<Parameter> weights_;
  mutable std::vector<Parameter> biases_;
};

}  // namespace cmad::dg
