// Copyright (C) 2026 The cmad authors
// SPDX-License-Identifier: Apache-2.0

#include "cmad/diffgraph/checkpoint.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include "cmad/errors.hpp"

namespace cmad::dg {

void save_checkpoint(const std::string& path, std::span<const Parameter* const> params) {
  std::ofstream out(path);
  if (!out) {
    throw IoError("cannot open checkpoint for writing: " + path);
  }
  out << "cmad-checkpoint " << kCheckpointVersion << "\n" << params.size() << "\n";
  char buf[32];
  for (const Parameter* p : params) {
    out << p->name << " " << p->value.rows() << " " << p->value.cols() << "\n";
    for (Eigen::Index r = 0; r < p->value.rows(); ++r) {
      for (Eigen::Index c = 0; c < p->value.cols(); ++c) {
        std::snprintf(buf, sizeof(buf), "%.17g", p->value(r, c));
        out << (r == 0 && c == 0 ? "" : " ") << buf;
      }
    }
    out << "\n";
  }
  if (!out) {
    throw IoError("failed writing checkpoint: " + path);
  }
}

std::map<std::string, Matrix> read_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    throw IoError("cannot open checkpoint: " + path);
  }
  std::string magic;
  int version = 0;
  std::size_t count = 0;
  if (!(in >> magic >> version >> count) || magic != "cmad-checkpoint") {
    throw IoError("not a cmad checkpoint: " + path);
  }
  if (version != kCheckpointVersion) {
    throw IoError("unsupported checkpoint version " + std::to_string(version));
  }
  std::map<std::string, Matrix> tensors;
  for (std::size_t i = 0; i < count; ++i) {
    std::string name;
    Eigen::Index rows = 0;
    Eigen::Index cols = 0;
    if (!(in >> name >> rows >> cols) || rows < 0 || cols < 0) {
      throw IoError("corrupt tensor header in " + path);
    }
    Matrix m(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r) {
      for (Eigen::Index c = 0; c < cols; ++c) {
        // operator>> rejects "inf"/"nan"; parse through strtod instead.
        std::string tok;
        if (!(in >> tok)) throw IoError("truncated tensor " + name + " in " + path);
        m(r, c) = std::strtod(tok.c_str(), nullptr);
      }
    }
    tensors.emplace(std::move(name), std::move(m));
  }
  return tensors;
}

void load_checkpoint(const std::string& path, std::span<Parameter* const> params) {
  const auto tensors = read_checkpoint(path);
  for (Parameter* p : params) {
    auto it = tensors.find(p->name);
    if (it == tensors.end()) {
      throw IoError("checkpoint " + path + " has no tensor " + p->name);
    }
    if (it->second.rows() != p->value.rows() || it->second.cols() != p->value.cols()) {
      std::ostringstream msg;
      msg << "tensor " << p->name << " has shape " << it->second.rows() << "x" << it->second.cols()
          << ", expected " << p->value.rows() << "x" << p->value.cols();
      throw ShapeError(msg.str());
    }
    p->value = it->second;
    p->zero_grad();
  }
}

}  // namespace cmad::dg
