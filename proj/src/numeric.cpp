/*
 * Copyright 2026 The DRIM Authors.
 *
 * This source code is licensed under the Apache License, Version 2.0 license
 * found in the LICENSE file in the root directory of this source tree.
 */

#include "drim/numeric.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

#include "drim/error.hpp"

namespace drim {

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> values)
    : rows_(rows), cols_(cols), values_(std::move(values)) {
  if (values_.size() != rows_ * cols_) {
    throw std::invalid_argument("Matrix: value count does not match shape");
  }
}

void Matrix::fill(double v) { std::fill(values_.begin(), values_.end(), v); }

bool Matrix::all_finite() const {
  return std::all_of(values_.begin(), values_.end(), [](double v) { return std::isfinite(v); });
}

double dot(std::span<const double> a, std::span<const double> b) {
  assert(a.size() == b.size());
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double norm(std::span<const double> a) { return std::sqrt(dot(a, a)); }

void matvec(const Matrix& m, std::span<const double> x, std::span<double> out) {
  assert(x.size() == m.cols() && out.size() == m.rows());
  for (std::size_t r = 0; r < m.rows(); ++r) out[r] = dot(m.row(r), x);
}

void matvec_transposed_add(const Matrix& m, std::span<const double> y, std::span<double> out) {
  assert(y.size() == m.rows() && out.size() == m.cols());
  for (std::size_t r = 0; r < m.rows(); ++r) axpy(y[r], m.row(r), out);
}

void rank1_add(Matrix& m, double alpha, std::span<const double> x, std::span<const double> y) {
  assert(x.size() == m.rows() && y.size() == m.cols());
  for (std::size_t r = 0; r < m.rows(); ++r) axpy(alpha * x[r], y, m.row(r));
}

void axpy(double alpha, std::span<const double> x, std::span<double> y) {
  assert(x.size() == y.size());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] += alpha * x[i];
}

Vector squash(std::span<const double> z) {
  Vector out(z.size(), 0.0);
  const double sq = dot(z, z);
  const double r = std::sqrt(sq);
  if (r < kSquashEpsilon) return out;
  // sq / (1 + sq) / r == r / (1 + sq)
  const double scale = r / (1.0 + sq);
  for (std::size_t i = 0; i < z.size(); ++i) out[i] = scale * z[i];
  return out;
}

Vector squash_backward(std::span<const double> z, std::span<const double> upstream) {
  // v = g(r) z with g(r) = r / (1 + r^2); J = g I + (g'(r) / r) z z^T.
  Vector out(z.size(), 0.0);
  const double sq = dot(z, z);
  const double r = std::sqrt(sq);
  if (r < kSquashEpsilon) return out;
  const double denom = 1.0 + sq;
  const double g = r / denom;
  const double dg_over_r = (1.0 - sq) / (denom * denom) / r;
  const double zu = dot(z, upstream);
  for (std::size_t i = 0; i < z.size(); ++i) out[i] = g * upstream[i] + dg_over_r * zu * z[i];
  return out;
}

Vector softmax(std::span<const double> logits) {
  Vector out(logits.size());
  if (logits.empty()) return out;
  const double mx = *std::max_element(logits.begin(), logits.end());
  double total = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp(logits[i] - mx);
    total += out[i];
  }
  for (double& v : out) v /= total;
  return out;
}

ParamSlot::ParamSlot(std::string slot_name, Matrix initial)
    : name(std::move(slot_name)),
      value(std::move(initial)),
      grad(value.rows(), value.cols()),
      first_moment(value.rows(), value.cols()),
      second_moment(value.rows(), value.cols()) {}

void adam_step(ParamSlot& slot, const AdamConfig& config) {
  auto g = slot.grad.values();
  for (std::size_t i = 0; i < g.size(); ++i) {
    if (!std::isfinite(g[i])) {
      std::ostringstream msg;
      msg << "non-finite gradient in parameter '" << slot.name << "' at flat index " << i
          << " (row " << i / slot.grad.cols() << ", col " << i % slot.grad.cols() << ")";
      throw NumericError(msg.str());
    }
  }
  ++slot.step;
  const double t = static_cast<double>(slot.step);
  const double c1 = 1.0 - std::pow(config.beta1, t);
  const double c2 = 1.0 - std::pow(config.beta2, t);
  auto x = slot.value.values();
  auto m = slot.first_moment.values();
  auto v = slot.second_moment.values();
  for (std::size_t i = 0; i < x.size(); ++i) {
    m[i] = config.beta1 * m[i] + (1.0 - config.beta1) * g[i];
    v[i] = config.beta2 * v[i] + (1.0 - config.beta2) * g[i] * g[i];
    const double m_hat = m[i] / c1;
    const double v_hat = v[i] / c2;
    x[i] -= config.lr * m_hat / (std::sqrt(v_hat) + config.eps);
  }
  slot.zero_grad();
}

GradCheckReport check_gradient(const std::function<double()>& loss,
                               std::span<ParamSlot*> params,
                               const GradCheckOptions& options) {
  GradCheckReport report;
  std::mt19937_64 rng(options.seed);
  for (std::size_t s = 0; s < params.size(); ++s) {
    ParamSlot& slot = *params[s];
    auto x = slot.value.values();
    std::vector<std::size_t> coords(x.size());
    std::iota(coords.begin(), coords.end(), std::size_t{0});
    if (options.max_per_slot != 0 && coords.size() > options.max_per_slot) {
      std::shuffle(coords.begin(), coords.end(), rng);
      coords.resize(options.max_per_slot);
      std::sort(coords.begin(), coords.end());
    }
    for (std::size_t idx : coords) {
      const double saved = x[idx];
      x[idx] = saved + options.step;
      const double up = loss();
      x[idx] = saved - options.step;
      const double down = loss();
      x[idx] = saved;
      const double numeric = (up - down) / (2.0 * options.step);
      const double analytic = slot.grad.values()[idx];
      const double denom =
          std::max(std::abs(analytic) + std::abs(numeric), options.abs_floor);
      const double rel = std::abs(analytic - numeric) / denom;
      report.max_rel_error = std::max(report.max_rel_error, rel);
      ++report.checked;
      if (!(rel < options.rel_tol)) report.flagged.push_back({s, idx, analytic, numeric, rel});
    }
  }
  return report;
}

}  // namespace drim
