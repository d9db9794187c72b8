// Copyright (C) 2026 The cmad authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <map>
#include <span>
#include <string>

#include "cmad/diffgraph/tape.hpp"

namespace cmad::dg {

// Text checkpoint, version 1:
//
//   cmad-checkpoint 1
//   <tensor count>
//   <name> <rows> <cols>
//   <rows*cols values, row-major, printed with 17 significant digits>
//   ... repeated per tensor
//
// Names contain no whitespace. Values round-trip exactly.

inline constexpr int kCheckpointVersion = 1;

void save_checkpoint(const std::string& path, std::span<const Parameter* const> params);
std::map<std::string, Matrix> read_checkpoint(const std::string& path);
/// Loads every parameter by name. Throws IoError for a missing tensor and
/// ShapeError for a shape mismatch.
void load_checkpoint(const std::string& path, std::span<Parameter* const> params);

}  // namespace cmad::dg
