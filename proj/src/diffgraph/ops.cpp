// Copyright (C) 2026 The cmad authors
// SPDX-License-Identifier: Apache-2.0

#include "cmad/diffgraph/ops.hpp"

#include <cmath>
#include <sstream>

#include "cmad/errors.hpp"

namespace cmad::dg {

namespace {

Tape& tape_of(Var a) {
  if (!a.valid()) {
    throw UsageError("operation on an unbound Var");
  }
  return *a.tape();
}

Tape& tape_of(Var a, Var b) {
  if (a.tape() != b.tape()) {
    throw UsageError("operands live on different tapes");
  }
  return tape_of(a);
}

void same_shape(Var a, Var b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    std::ostringstream msg;
    msg << op << ": shape mismatch " << a.rows() << "x" << a.cols() << " vs " << b.rows() << "x"
        << b.cols();
    throw ShapeError(msg.str());
  }
}

}  // namespace

Var add(Var a, Var b) {
  Tape& t = tape_of(a, b);
  same_shape(a, b, "add");
  return t.record(a.value() + b.value(), {a, b}, [a, b](Tape& tp, const Matrix& g) {
    tp.accumulate(a, g);
    tp.accumulate(b, g);
  });
}

Var sub(Var a, Var b) {
  Tape& t = tape_of(a, b);
  same_shape(a, b, "sub");
  return t.record(a.value() - b.value(), {a, b}, [a, b](Tape& tp, const Matrix& g) {
    tp.accumulate(a, g);
    tp.accumulate(b, -g);
  });
}

Var mul(Var a, Var b) {
  Tape& t = tape_of(a, b);
  same_shape(a, b, "mul");
  return t.record(a.value().cwiseProduct(b.value()), {a, b}, [a, b](Tape& tp, const Matrix& g) {
    if (tp.requires_grad(a)) tp.accumulate(a, g.cwiseProduct(b.value()));
    if (tp.requires_grad(b)) tp.accumulate(b, g.cwiseProduct(a.value()));
  });
}

Var scale(Var a, double s) {
  Tape& t = tape_of(a);
  return t.record(a.value() * s, {a}, [a, s](Tape& tp, const Matrix& g) { tp.accumulate(a, g * s); });
}

Var add_scalar(Var a, double s) {
  Tape& t = tape_of(a);
  return t.record(a.value().array() + s, {a}, [a](Tape& tp, const Matrix& g) { tp.accumulate(a, g); });
}

Var matmul(Var a, Var b) {
  Tape& t = tape_of(a, b);
  if (a.cols() != b.rows()) {
    throw ShapeError("matmul: inner dimensions differ");
  }
  return t.record(a.value() * b.value(), {a, b}, [a, b](Tape& tp, const Matrix& g) {
    if (tp.requires_grad(a)) tp.accumulate(a, g * b.value().transpose());
    if (tp.requires_grad(b)) tp.accumulate(b, a.value().transpose() * g);
  });
}

Var linear(Var x, Var weight, Var bias) {
  Tape& t = tape_of(x, weight);
  tape_of(x, bias);
  if (x.cols() != weight.rows() || bias.rows() != 1 || bias.cols() != weight.cols()) {
    std::ostringstream msg;
    msg << "linear: input " << x.rows() << "x" << x.cols() << ", weight " << weight.rows() << "x"
        << weight.cols() << ", bias " << bias.rows() << "x" << bias.cols();
    throw ShapeError(msg.str());
  }
  Matrix out = x.value() * weight.value();
  out.rowwise() += bias.value().row(0);
  return t.record(std::move(out), {x, weight, bias}, [x, weight, bias](Tape& tp, const Matrix& g) {
    if (tp.requires_grad(x)) tp.accumulate(x, g * weight.value().transpose());
    if (tp.requires_grad(weight)) tp.accumulate(weight, x.value().transpose() * g);
    if (tp.requires_grad(bias)) tp.accumulate(bias, g.colwise().sum());
  });
}

Var tanh(Var a) {
  Tape& t = tape_of(a);
  Matrix y = a.value().array().tanh();
  return t.record(y, {a}, [a, y](Tape& tp, const Matrix& g) {
    tp.accumulate(a, (g.array() * (1.0 - y.array().square())).matrix());
  });
}

Var silu(Var a) {
  Tape& t = tape_of(a);
  const Matrix sig = (1.0 + (-a.value().array()).exp()).inverse();
  Matrix y = a.value().cwiseProduct(sig);
  return t.record(std::move(y), {a}, [a, sig](Tape& tp, const Matrix& g) {
    const auto& x = a.value().array();
    tp.accumulate(a, (g.array() * sig.array() * (1.0 + x * (1.0 - sig.array()))).matrix());
  });
}

Var square(Var a) {
  Tape& t = tape_of(a);
  return t.record(a.value().array().square(), {a}, [a](Tape& tp, const Matrix& g) {
    tp.accumulate(a, 2.0 * g.cwiseProduct(a.value()));
  });
}

Var charbonnier(Var a, double eps) {
  Tape& t = tape_of(a);
  Matrix rho = (a.value().array().square() + eps * eps).sqrt();
  return t.record(rho, {a}, [a, rho](Tape& tp, const Matrix& g) {
    tp.accumulate(a, (g.array() * a.value().array() / rho.array()).matrix());
  });
}

Var sum(Var a) {
  Tape& t = tape_of(a);
  return t.record(Matrix::Constant(1, 1, a.value().sum()), {a}, [a](Tape& tp, const Matrix& g) {
    tp.accumulate(a, Matrix::Constant(a.rows(), a.cols(), g(0, 0)));
  });
}

Var mean(Var a) {
  const double n = static_cast<double>(a.value().size());
  if (n == 0) {
    throw ShapeError("mean of an empty matrix");
  }
  return scale(sum(a), 1.0 / n);
}

Var row_sum(Var a) {
  Tape& t = tape_of(a);
  return t.record(a.value().rowwise().sum(), {a}, [a](Tape& tp, const Matrix& g) {
    tp.accumulate(a, g.col(0).replicate(1, a.cols()));
  });
}

Var row_sum_squares(Var a) {
  Tape& t = tape_of(a);
  return t.record(a.value().rowwise().squaredNorm(), {a}, [a](Tape& tp, const Matrix& g) {
    tp.accumulate(a, 2.0 * (a.value().array().colwise() * g.col(0).array()).matrix());
  });
}

Var scale_rows(Var a, Var s) {
  Tape& t = tape_of(a, s);
  if (s.cols() != 1 || (s.rows() != 1 && s.rows() != a.rows())) {
    throw ShapeError("scale_rows: scale must be 1x1 or B x 1");
  }
  if (s.rows() == 1) {
    const double c = s.value()(0, 0);
    return t.record(a.value() * c, {a, s}, [a, s, c](Tape& tp, const Matrix& g) {
      if (tp.requires_grad(a)) tp.accumulate(a, g * c);
      if (tp.requires_grad(s)) tp.accumulate(s, Matrix::Constant(1, 1, g.cwiseProduct(a.value()).sum()));
    });
  }
  Matrix out = (a.value().array().colwise() * s.value().col(0).array()).matrix();
  return t.record(std::move(out), {a, s}, [a, s](Tape& tp, const Matrix& g) {
    if (tp.requires_grad(a)) {
      tp.accumulate(a, (g.array().colwise() * s.value().col(0).array()).matrix());
    }
    if (tp.requires_grad(s)) tp.accumulate(s, g.cwiseProduct(a.value()).rowwise().sum());
  });
}

Var concat_cols(const std::vector<Var>& parts) {
  if (parts.empty()) {
    throw ShapeError("concat_cols: no parts");
  }
  Tape& t = tape_of(parts.front());
  Eigen::Index cols = 0;
  for (const Var& p : parts) {
    tape_of(parts.front(), p);
    if (p.rows() != parts.front().rows()) {
      throw ShapeError("concat_cols: row counts differ");
    }
    cols += p.cols();
  }
  Matrix out(parts.front().rows(), cols);
  Eigen::Index offset = 0;
  for (const Var& p : parts) {
    out.middleCols(offset, p.cols()) = p.value();
    offset += p.cols();
  }
  return t.record(std::move(out), parts, [parts](Tape& tp, const Matrix& g) {
    Eigen::Index off = 0;
    for (const Var& p : parts) {
      if (tp.requires_grad(p)) tp.accumulate(p, g.middleCols(off, p.cols()));
      off += p.cols();
    }
  });
}

Var gather_cols(Var a, const std::vector<int>& index) {
  Tape& t = tape_of(a);
  Matrix out(a.rows(), static_cast<Eigen::Index>(index.size()));
  for (std::size_t j = 0; j < index.size(); ++j) {
    if (index[j] < 0 || index[j] >= a.cols()) {
      throw ShapeError("gather_cols: index out of range");
    }
    out.col(static_cast<Eigen::Index>(j)) = a.value().col(index[j]);
  }
  return t.record(std::move(out), {a}, [a, index](Tape& tp, const Matrix& g) {
    Matrix ga = Matrix::Zero(a.rows(), a.cols());
    for (std::size_t j = 0; j < index.size(); ++j) {
      ga.col(index[j]) += g.col(static_cast<Eigen::Index>(j));
    }
    tp.accumulate(a, ga);
  });
}

Var assemble(const std::vector<Var>& parts, const std::vector<std::vector<int>>& index, int dim) {
  if (parts.empty() || parts.size() != index.size()) {
    throw ShapeError("assemble: need one index set per part");
  }
  Tape& t = tape_of(parts.front());
  const Eigen::Index rows = parts.front().rows();
  Matrix out = Matrix::Zero(rows, dim);
  for (std::size_t i = 0; i < parts.size(); ++i) {
    tape_of(parts.front(), parts[i]);
    if (parts[i].rows() != rows) {
      throw ShapeError("assemble: row counts differ");
    }
    for (int c : index[i]) {
      if (c < 0 || c >= dim || c >= parts[i].cols()) {
        throw ShapeError("assemble: index out of range");
      }
      out.col(c) = parts[i].value().col(c);
    }
  }
  return t.record(std::move(out), parts, [parts, index](Tape& tp, const Matrix& g) {
    for (std::size_t i = 0; i < parts.size(); ++i) {
      if (!tp.requires_grad(parts[i])) continue;
      Matrix gi = Matrix::Zero(parts[i].rows(), parts[i].cols());
      for (int c : index[i]) gi.col(c) = g.col(c);
      tp.accumulate(parts[i], gi);
    }
  });
}

Var softmax_cross_entropy(Var logits, int label) {
  Tape& t = tape_of(logits);
  if (label < 0 || label >= logits.cols()) {
    throw DomainError("softmax_cross_entropy: label out of range");
  }
  const Matrix& z = logits.value();
  const Vector zmax = z.rowwise().maxCoeff();
  const Matrix shifted = z.colwise() - zmax;
  const Vector lse = shifted.array().exp().rowwise().sum().log();
  Matrix prob = (shifted.colwise() - lse).array().exp();
  Matrix loss = lse - shifted.col(label);
  return t.record(std::move(loss), {logits}, [logits, label, prob](Tape& tp, const Matrix& g) {
    Matrix d = prob;
    d.col(label).array() -= 1.0;
    tp.accumulate(logits, (d.array().colwise() * g.col(0).array()).matrix());
  });
}

Var stopgrad(Var a) { return tape_of(a).constant(a.value()); }

}  // namespace cmad::dg
