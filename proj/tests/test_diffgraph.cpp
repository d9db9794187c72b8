// Copyright (C) 2026 The cmad authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numbers>

#include "cmad/diffgraph/adam.hpp"
#include "cmad/diffgraph/checkpoint.hpp"
#include "cmad/diffgraph/mlp.hpp"
#include "cmad/diffgraph/ops.hpp"
#include "cmad/errors.hpp"
#include "support.hpp"

using namespace cmad;
using namespace cmad::dg;
using cmad::test::fd_gradient;
using cmad::test::rel_err;

namespace {

// Independent forward pass of an Mlp from its raw weights.
Matrix direct_mlp(const Mlp& net, const Matrix& x, double t) {
  const int te = net.spec().time_embed;
  Matrix h(x.rows(), x.cols() + te);
  h.leftCols(x.cols()) = x;
  for (int j = 0; j < te / 2; ++j) {
    const double w = std::numbers::pi * std::pow(2.0, j - 1);
    h.col(x.cols() + 2 * j).setConstant(std::sin(w * t));
    h.col(x.cols() + 2 * j + 1).setConstant(std::cos(w * t));
  }
  for (int l = 0; l < net.num_layers(); ++l) {
    h = (h * net.weight(l).value).rowwise() + RowVector(net.bias(l).value.row(0));
    if (l + 1 < net.num_layers()) {
      if (net.spec().activation == Activation::Tanh) {
        h = h.array().tanh().matrix();
      } else {
        h = (h.array() / (1.0 + (-h.array()).exp())).matrix();
      }
    }
  }
  return h;
}

// Checks d sum(w .* op(x)) / dx against central differences.
void check_unary(const char* name, const std::function<Var(Var)>& op, Matrix x, double tol = 1e-6) {
  INFO(std::string(name));
  Matrix w;
  {
    Tape probe;
    const Var y = op(probe.input(x));
    w = CounterRng(99).normal(y.rows(), y.cols());
  }
  auto f = [&] {
    Tape tape;
    return (op(tape.input(x)).value().array() * w.array()).sum();
  };
  Tape tape;
  Var in = tape.input(x);
  tape.backward(sum(mul(op(in), tape.constant(w))));
  const Matrix g = tape.grad(in);
  const Matrix fd = fd_gradient(x, f);
  CHECK(rel_err(g, fd) < tol);
}

}  // namespace

TEST_CASE("record_forward and backward on w^T w") {
  Parameter w("w", Matrix(1, 2));
  w.value << 3.0, 4.0;
  Tape tape;
  Var root = sum(square(tape.parameter(w)));
  CHECK(root.value()(0, 0) == 25.0);
  w.zero_grad();
  tape.backward(root);
  CHECK(w.grad(0, 0) == 6.0);
  CHECK(w.grad(0, 1) == 8.0);
}

TEST_CASE("constants") {
  Tape tape;
  Var c = tape.constant(Matrix::Constant(1, 1, 4.5));
  CHECK(c.value()(0, 0) == 4.5);
  Var in = tape.input(Matrix::Constant(1, 1, 2.0));
  Var root = add(scale(c, 2.0), mul(in, stopgrad(c)));
  tape.backward(sum(c));
  CHECK(tape.grad(in)(0, 0) == 0.0);
  tape.backward(root);
  CHECK(tape.grad(in)(0, 0) == 4.5);
}

TEST_CASE("non-scalar root is a usage error") {
  Tape tape;
  Var x = tape.input(Matrix::Ones(2, 2));
  CHECK_THROWS_AS(tape.backward(x), UsageError);
}

TEST_CASE("stopgrad blocks the adjoint") {
  Parameter w("w", Matrix::Constant(1, 1, 3.0));
  Tape tape;
  Var wv = tape.parameter(w);
  Var root = sum(mul(wv, stopgrad(wv)));
  w.zero_grad();
  tape.backward(root);
  CHECK(w.grad(0, 0) == 3.0);
  Tape t2;
  Var c = t2.constant(Matrix::Constant(2, 2, 1.5));
  CHECK(stopgrad(c).value() == c.value());
}

TEST_CASE("parameters are bound once per tape") {
  Parameter w("w", Matrix::Constant(1, 1, 2.0));
  Tape tape;
  Var a = tape.parameter(w);
  Var b = tape.parameter(w);
  CHECK(a.id() == b.id());
  w.zero_grad();
  tape.backward(sum(mul(a, b)));
  CHECK(w.grad(0, 0) == 4.0);
  w.trainable = false;
  Tape t2;
  CHECK_FALSE(t2.parameter(w).requires_grad());
}

TEST_CASE("elementwise and structural ops match finite differences") {
  const CounterRng rng(1);
  const Matrix x = rng.stream(0).normal(3, 4);
  check_unary("tanh", [](Var a) { return dg::tanh(a); }, x);
  check_unary("silu", [](Var a) { return silu(a); }, x);
  check_unary("square", [](Var a) { return square(a); }, x);
  check_unary("charbonnier", [](Var a) { return charbonnier(a, 1e-2); }, x);
  check_unary("scale", [](Var a) { return scale(a, -2.5); }, x);
  check_unary("add_scalar", [](Var a) { return add_scalar(a, 1.25); }, x);
  check_unary("row_sum", [](Var a) { return row_sum(a); }, x);
  check_unary("row_sum_squares", [](Var a) { return row_sum_squares(a); }, x);
  check_unary("mean", [](Var a) { return mean(a); }, x);
  check_unary("gather_cols", [](Var a) { return gather_cols(a, {3, 0, 0}); }, x);
  check_unary("concat_cols", [](Var a) { return concat_cols({a, square(a)}); }, x);
  check_unary("softmax_cross_entropy", [](Var a) { return softmax_cross_entropy(a, 2); }, x);
  check_unary("assemble", [](Var a) { return assemble({a, scale(a, 3.0)}, {{0, 2}, {1, 3}}, 4); }, x);
  check_unary("scale_rows", [](Var a) { return scale_rows(a, row_sum(a)); }, x);
  check_unary("scale_rows", [](Var a) { return scale_rows(a, sum(a)); }, x);
  const Matrix wm = rng.stream(1).normal(4, 5);
  const Matrix bm = rng.stream(2).normal(1, 5);
  check_unary("matmul", [&](Var a) { return matmul(a, a.tape()->constant(wm)); }, x);
  check_unary("linear", [&](Var a) { return linear(a, a.tape()->constant(wm), a.tape()->constant(bm)); }, x);
  check_unary("linear", [&](Var a) { return linear(a.tape()->constant(x), a.tape()->constant(wm.topRows(4)), gather_cols(a, {0, 1, 2, 3, 0})); }, x.topRows(1));
  check_unary("mul", [&](Var a) { return mul(a, sub(a, a.tape()->constant(x))); }, x);
}

TEST_CASE("softmax cross entropy values") {
  Tape tape;
  Var uniform = tape.constant(Matrix::Zero(2, 4));
  const Matrix v = softmax_cross_entropy(uniform, 1).value();
  CHECK(v(0, 0) == doctest::Approx(std::log(4.0)));
  Matrix confident = Matrix::Zero(1, 3);
  confident(0, 2) = 50.0;
  CHECK(softmax_cross_entropy(tape.constant(confident), 2).value()(0, 0) < 1e-12);
  CHECK_THROWS_AS(softmax_cross_entropy(uniform, 4), DomainError);
}

TEST_CASE("MLP forward equals a direct evaluation") {
  for (Activation act : {Activation::Tanh, Activation::Silu}) {
    Mlp net({.input_dim = 3, .hidden = {8, 5}, .output_dim = 2, .activation = act, .time_embed = 4},
            CounterRng(7), "m");
    const Matrix x = CounterRng(8).normal(6, 3);
    const Matrix taped = net.eval(x, 0.37);
    CHECK((taped - direct_mlp(net, x, 0.37)).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("MLP construction modes") {
  Mlp net({.input_dim = 2, .hidden = {4}, .output_dim = 3, .time_embed = 2}, CounterRng(1), "m");
  net.zero_head();
  CHECK(net.eval(CounterRng(2).normal(5, 2), 0.5).isZero(0.0));
  net.constant_output(-1.5);
  CHECK((net.eval(CounterRng(3).normal(5, 2), 0.9).array() == -1.5).all());
  CHECK_THROWS_AS(Mlp({.input_dim = 2, .hidden = {4}, .output_dim = 1, .time_embed = 3}, CounterRng(1), "m"),
                  ConfigError);
  CHECK_THROWS_AS(net.eval(Matrix::Zero(1, 3), 0.0), ShapeError);
}

TEST_CASE("random 2-16-16-2 MLP gradients match finite differences") {
  Mlp net({.input_dim = 2, .hidden = {16, 16}, .output_dim = 2, .activation = Activation::Tanh}, CounterRng(21), "m");
  const Matrix x = CounterRng(22).normal(5, 2);
  const Matrix w = CounterRng(23).normal(5, 2);
  auto loss = [&] { return (net.eval(x).array() * w.array()).sum(); };
  Tape tape;
  auto params = net.parameters();
  for (Parameter* p : params) p->zero_grad();
  tape.backward(sum(mul(net.forward(tape, tape.constant(x)), tape.constant(w))));
  double worst = 0.0;
  for (Parameter* p : params) {
    const Matrix fd = fd_gradient(p->value, loss);
    worst = std::max(worst, rel_err(p->grad, fd));
  }
  CHECK(worst < 1e-4);
}

TEST_CASE("gradients are bit-identical across repeated runs") {
  auto run = [] {
    Mlp net({.input_dim = 3, .hidden = {8}, .output_dim = 1, .time_embed = 2}, CounterRng(4), "m");
    Tape tape;
    for (Parameter* p : net.parameters()) p->zero_grad();
    tape.backward(sum(net.forward(tape, tape.constant(CounterRng(5).normal(4, 3)), 0.2)));
    return net.parameters()[0]->grad;
  };
  CHECK(run() == run());
}

TEST_CASE("gradient of a constant is zero") {
  Parameter w("w", Matrix::Ones(2, 2));
  Tape tape;
  tape.parameter(w);
  w.zero_grad();
  tape.backward(sum(tape.constant(Matrix::Ones(1, 1))));
  CHECK(w.grad.isZero());
}

TEST_CASE("adam step") {
  Parameter p("p", Matrix::Constant(1, 1, 1.0));
  std::vector<Parameter*> ps{&p};
  AdamState st(ps, AdamConfig{});
  p.grad = Matrix::Constant(1, 1, 1.0);
  adam_step(ps, st, 1e-3);
  // m_hat = g, v_hat = g^2, update = lr * g / (|g| + eps)
  CHECK(p.value(0, 0) == doctest::Approx(1.0 - 1e-3 / (1.0 + 1e-8)).epsilon(1e-14));
  CHECK(st.step == 1);

  p.grad.setZero();
  const double before = p.value(0, 0);
  const double m_before = st.m[0](0, 0);
  adam_step(ps, st, 1e-3);
  CHECK(std::abs(st.m[0](0, 0)) < std::abs(m_before));
  CHECK(p.value(0, 0) < before);

  Parameter q("q", Matrix::Constant(2, 1, 3.0));
  std::vector<Parameter*> qs{&q};
  AdamState sq(qs, AdamConfig{});
  q.grad.setZero();
  adam_step(qs, sq, 1e-3);
  CHECK(q.value(0, 0) == 3.0);
  q.grad = Matrix::Constant(2, 1, 7.0);
  adam_step(qs, sq, 0.0);
  CHECK(q.value(0, 0) == 3.0);

  Parameter r("r", Matrix::Zero(3, 1));
  std::vector<Parameter*> rs{&r};
  CHECK_THROWS_AS(adam_step(rs, sq, 1e-3), ShapeError);
}

TEST_CASE("checkpoint round trip and errors") {
  const auto dir = std::filesystem::temp_directory_path() / "cmad_ckpt_test";
  std::filesystem::create_directories(dir);
  const std::string path = (dir / "a.ckpt").string();
  Mlp a({.input_dim = 2, .hidden = {3}, .output_dim = 2, .time_embed = 2}, CounterRng(1), "net");
  Mlp b({.input_dim = 2, .hidden = {3}, .output_dim = 2, .time_embed = 2}, CounterRng(2), "net");
  save_checkpoint(path, std::as_const(a).parameters());
  load_checkpoint(path, b.parameters());
  for (int l = 0; l < a.num_layers(); ++l) {
    CHECK(a.weight(l).value == b.weight(l).value);
    CHECK(a.bias(l).value == b.bias(l).value);
  }
  const auto tensors = read_checkpoint(path);
  CHECK(tensors.size() == 4);
  CHECK(tensors.count("net.w0") == 1);

  Mlp wide({.input_dim = 2, .hidden = {4}, .output_dim = 2, .time_embed = 2}, CounterRng(1), "net");
  CHECK_THROWS_AS(load_checkpoint(path, wide.parameters()), ShapeError);
  Mlp other({.input_dim = 2, .hidden = {3}, .output_dim = 2, .time_embed = 2}, CounterRng(1), "other");
  CHECK_THROWS_AS(load_checkpoint(path, other.parameters()), IoError);
  CHECK_THROWS_AS(read_checkpoint((dir / "missing.ckpt").string()), IoError);
  std::ofstream(dir / "bad.ckpt") << "not-a-checkpoint 1\n";
  CHECK_THROWS_AS(read_checkpoint((dir / "bad.ckpt").string()), IoError);
  std::filesystem::remove_all(dir);
}
