/*
 * Copyright 2026 The DRIM Authors.
 *
 * This source code is licensed under the Apache License, Version 2.0 license
 * found in the LICENSE file in the root directory of this source tree.
 */

#include "drim/regularizers.hpp"

#include <cmath>

#include "drim/error.hpp"

namespace drim {

std::string_view to_string(Separator s) {
  switch (s) {
    case Separator::none:
      return "none";
    case Separator::entropy:
      return "entropy";
    case Separator::mean_square:
      return "mean";
    case Separator::diverse:
      return "div";
  }
  return "none";
}

std::optional<Separator> parse_separator(std::string_view s) {
  if (s == "none") return Separator::none;
  if (s == "entropy") return Separator::entropy;
  if (s == "mean" || s == "mean_square") return Separator::mean_square;
  if (s == "div" || s == "diverse") return Separator::diverse;
  return std::nullopt;
}

LossAndGrad entropy_loss(const Matrix& interests) {
  LossAndGrad out{0.0, Matrix(interests.rows(), interests.cols())};
  for (std::size_t k = 0; k < interests.rows(); ++k) {
    const Vector p = softmax(interests.row(k));
    double entropy = 0.0;
    for (double pm : p) {
      if (pm > 0.0) entropy -= pm * std::log(pm);
    }
    out.loss -= entropy;
    // d(-H)/dv_m = p_m (ln p_m + H)
    auto g = out.grad.row(k);
    for (std::size_t m = 0; m < p.size(); ++m) {
      g[m] = p[m] > 0.0 ? p[m] * (std::log(p[m]) + entropy) : 0.0;
    }
  }
  return out;
}

LossAndGrad mean_square_loss(const Matrix& interests) {
  const std::size_t k_count = interests.rows();
  const std::size_t d = interests.cols();
  LossAndGrad out{0.0, Matrix(k_count, d)};
  if (k_count == 0) return out;
  Vector mean(d, 0.0);
  for (std::size_t k = 0; k < k_count; ++k) axpy(1.0 / static_cast<double>(k_count), interests.row(k), mean);
  for (std::size_t k = 0; k < k_count; ++k) {
    auto v = interests.row(k);
    auto g = out.grad.row(k);
    for (std::size_t m = 0; m < d; ++m) {
      const double diff = v[m] - mean[m];
      out.loss -= diff * diff;
      // The mean's own dependence cancels because the deviations sum to zero.
      g[m] = -2.0 * diff;
    }
  }
  return out;
}

LossAndGrad diverse_loss(const Matrix& interests, DiverseSign sign) {
  const std::size_t k_count = interests.rows();
  const std::size_t d = interests.cols();
  if (k_count < 2) throw NumericError("diverse loss needs at least 2 interest vectors");
  LossAndGrad out{0.0, Matrix(k_count, d)};
  Vector norms(k_count);
  for (std::size_t k = 0; k < k_count; ++k) {
    norms[k] = norm(interests.row(k));
    if (norms[k] < kDegenerateNorm) {
      throw NumericError("diverse loss: interest vector " + std::to_string(k) +
                         " has near-zero norm");
    }
  }
  // loss = scale * sum_{i<j} (1 - cos_ij); scale is negative for the
  // diversity-rewarding sign.
  const double pairs = static_cast<double>(k_count * (k_count - 1)) / 2.0;
  const double scale = (sign == DiverseSign::corrected ? -1.0 : 1.0) / pairs;
  for (std::size_t i = 0; i < k_count; ++i) {
    for (std::size_t j = i + 1; j < k_count; ++j) {
      auto vi = interests.row(i);
      auto vj = interests.row(j);
      const double ninj = norms[i] * norms[j];
      const double cos = dot(vi, vj) / ninj;
      out.loss += scale * (1.0 - cos);
      // d cos / d v_i = v_j / (|v_i||v_j|) - cos * v_i / |v_i|^2
      auto gi = out.grad.row(i);
      auto gj = out.grad.row(j);
      for (std::size_t m = 0; m < d; ++m) {
        const double dcos_i = vj[m] / ninj - cos * vi[m] / (norms[i] * norms[i]);
        const double dcos_j = vi[m] / ninj - cos * vj[m] / (norms[j] * norms[j]);
        gi[m] -= scale * dcos_i;
        gj[m] -= scale * dcos_j;
      }
    }
  }
  return out;
}

LossAndGrad separator_loss(const Matrix& interests, const SeparatorConfig& config) {
  switch (config.kind) {
    case Separator::entropy:
      return entropy_loss(interests);
    case Separator::mean_square:
      return mean_square_loss(interests);
    case Separator::diverse:
      return diverse_loss(interests, config.div_sign);
    case Separator::none:
      break;
  }
  return {0.0, Matrix(interests.rows(), interests.cols())};
}

}  // namespace drim
