// Copyright (C) 2026 The cmad authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <vector>

#include "cmad/diffgraph/tape.hpp"

namespace cmad::dg {

// Elementary differentiable operations. All operands must live on the same
// tape; shapes are checked and mismatches throw ShapeError.

Var add(Var a, Var b);
Var sub(Var a, Var b);
/// Elementwise product.
Var mul(Var a, Var b);
Var scale(Var a, double s);
Var add_scalar(Var a, double s);
Var matmul(Var a, Var b);
/// x W + 1 b, with b a 1 x out row broadcast over the batch.
Var linear(Var x, Var weight, Var bias);

Var tanh(Var a);
/// x * sigmoid(x), smooth.
Var silu(Var a);
Var square(Var a);
/// Charbonnier penalty sqrt(x^2 + eps^2), elementwise.
Var charbonnier(Var a, double eps);

/// Sum of all entries, 1x1.
Var sum(Var a);
Var mean(Var a);
/// Per-row sums, B x 1.
Var row_sum(Var a);
/// Per-row squared norms, B x 1.
Var row_sum_squares(Var a);

/// Multiplies each row of `a` by the matching entry of `s` (B x 1), or every
/// entry by `s` when it is 1x1.
Var scale_rows(Var a, Var s);

Var concat_cols(const std::vector<Var>& parts);
/// Columns of `a` at `index`, in order.
Var gather_cols(Var a, const std::vector<int>& index);
/// Builds a B x dim matrix whose column index[i][j] is column index[i][j] of
/// parts[i]. Index sets must be disjoint; unreferenced columns are zero.
Var assemble(const std::vector<Var>& parts, const std::vector<std::vector<int>>& index, int dim);

/// Per-row softmax cross-entropy -log softmax(logits)[label], B x 1.
Var softmax_cross_entropy(Var logits, int label);

/// Forward value unchanged; no adjoint flows to `a`.
Var stopgrad(Var a);

}  // namespace cmad::dg
