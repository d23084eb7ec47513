/*
 * Copyright 2026 The DRIM Authors.
 *
 * This source code is licensed under the Apache License, Version 2.0 license
 * found in the LICENSE file in the root directory of this source tree.
 */

#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace drim {

/// Row-major dense matrix of 64-bit reals with value semantics.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), values_(rows * cols, fill) {}
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> values);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return values_.size(); }
  bool empty() const { return values_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return values_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return values_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {values_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const {
    return {values_.data() + r * cols_, cols_};
  }

  std::span<double> values() { return values_; }
  std::span<const double> values() const { return values_; }

  void fill(double v);
  bool all_finite() const;

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> values_;
};

using Vector = std::vector<double>;

double dot(std::span<const double> a, std::span<const double> b);
double norm(std::span<const double> a);

/// out = m * x
void matvec(const Matrix& m, std::span<const double> x, std::span<double> out);
/// out += m^T * y
void matvec_transposed_add(const Matrix& m, std::span<const double> y, std::span<double> out);
/// m += alpha * x * y^T
void rank1_add(Matrix& m, double alpha, std::span<const double> x, std::span<const double> y);
/// y += alpha * x
void axpy(double alpha, std::span<const double> x, std::span<double> y);

inline constexpr double kSquashEpsilon = 1e-12;

/// Norm-bounding nonlinearity: (|z|^2 / (1 + |z|^2)) * z / |z|.
/// Inputs with |z| < kSquashEpsilon map to the zero vector.
Vector squash(std::span<const double> z);

/// Vector-Jacobian product of squash at z: returns J(z)^T * upstream.
/// J is symmetric, so this is also J * upstream. Zero below kSquashEpsilon.
Vector squash_backward(std::span<const double> z, std::span<const double> upstream);

/// Max-subtracted softmax.
Vector softmax(std::span<const double> logits);

struct AdamConfig {
  double lr = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// A trainable parameter: value, accumulated gradient, and Adam moments.
struct ParamSlot {
  std::string name;
  Matrix value;
  Matrix grad;
  Matrix first_moment;
  Matrix second_moment;
  std::uint64_t step = 0;

  ParamSlot() = default;
  ParamSlot(std::string slot_name, Matrix initial);

  void zero_grad() { grad.fill(0.0); }
};

/// Bias-corrected Adam update followed by zeroing the gradient. Throws
/// NumericError naming the slot if any gradient entry is non-finite.
void adam_step(ParamSlot& slot, const AdamConfig& config);

struct GradCheckEntry {
  std::size_t slot = 0;
  std::size_t index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  double rel_error = 0.0;
};

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::size_t checked = 0;
  std::vector<GradCheckEntry> flagged;
  bool passed() const { return flagged.empty(); }
};

struct GradCheckOptions {
  double step = 1e-5;
  double rel_tol = 1e-4;
  /// 0 checks every coordinate; otherwise a seeded sample of this many per slot.
  std::size_t max_per_slot = 0;
  std::uint64_t seed = 0;
  /// Floor on the relative-error denominator |analytic| + |numeric|, so
  /// near-zero gradients are compared absolutely.
  double abs_floor = 1e-5;
};

/// Central finite differences against the gradients stored in each slot.
/// `loss` must read only `value` fields and be deterministic.
GradCheckReport check_gradient(const std::function<double()>& loss,
                               std::span<ParamSlot*> params,
                               const GradCheckOptions& options = {});

}  // namespace drim
