/*
 * Copyright 2026 The DRIM Authors.
 *
 * This source code is licensed under the Apache License, Version 2.0 license
 * found in the LICENSE file in the root directory of this source tree.
 */

#pragma once

#include <optional>
#include <string>
#include <string_view>

#include "drim/numeric.hpp"

namespace drim {

enum class Separator { none, entropy, mean_square, diverse };

/// Sign convention for the pairwise-angle separator. `corrected` rewards
/// diversity (the default); `paper` keeps the literal +(1 - cos) term.
enum class DiverseSign { corrected, paper };

std::string_view to_string(Separator s);
/// Accepts none|entropy|mean|div (and the long forms mean_square|diverse).
std::optional<Separator> parse_separator(std::string_view s);

struct SeparatorConfig {
  Separator kind = Separator::none;
  double lambda = 0.1;
  DiverseSign div_sign = DiverseSign::corrected;
};

struct LossAndGrad {
  double loss = 0.0;
  Matrix grad;  // same shape as the input
};

/// -sum_k H(softmax(v_k)). Lies in [-K ln d, 0].
LossAndGrad entropy_loss(const Matrix& interests);

/// -sum_k |v_k - mean_k v_k|^2.
LossAndGrad mean_square_loss(const Matrix& interests);

inline constexpr double kDegenerateNorm = 1e-12;

/// -(2 / (K (K - 1))) * sum_{i<j} (1 - cos(v_i, v_j)), or its negation under
/// DiverseSign::paper. Requires K >= 2; throws NumericError on rows with norm
/// below kDegenerateNorm.
LossAndGrad diverse_loss(const Matrix& interests, DiverseSign sign = DiverseSign::corrected);

/// Dispatches on config.kind. Returns the unscaled separator loss; callers
/// apply lambda. Separator::none yields zero loss and gradient.
LossAndGrad separator_loss(const Matrix& interests, const SeparatorConfig& config);

}  // namespace drim
