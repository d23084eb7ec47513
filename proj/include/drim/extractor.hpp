/*
 * Copyright 2026 The DRIM Authors.
 *
 * This source code is licensed under the Apache License, Version 2.0 license
 * found in the LICENSE file in the root directory of this source tree.
 */

#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "drim/ingest.hpp"
#include "drim/numeric.hpp"

namespace drim {

/// All trainable parameters of the extractor. Profile and fusion slots are
/// empty (0 rows) when profiles are not configured; fusion is then the
/// identity.
struct ModelParams {
  ParamSlot item_embeddings;     // (items + 1) x d, row 0 = padding (kept zero)
  ParamSlot profile_embeddings;  // features x d
  ParamSlot bilinear;            // d x d, shared across history/interest pairs
  ParamSlot fusion_w1;           // 4d x 2d
  ParamSlot fusion_b1;           // 4d x 1
  ParamSlot fusion_w2;           // d x 4d
  ParamSlot fusion_b2;           // d x 1

  std::size_t dim() const { return bilinear.value.rows(); }
  bool has_profile() const { return profile_embeddings.value.rows() > 0; }

  /// Slots that participate in training (fusion/profile only when enabled).
  std::vector<ParamSlot*> trainable();
  std::vector<const ParamSlot*> trainable() const;
};

/// Gradient buffers shaped like ModelParams' values. One per worker during
/// batch-parallel training.
struct ModelGrads {
  Matrix item_embeddings;
  Matrix profile_embeddings;
  Matrix bilinear;
  Matrix fusion_w1;
  Matrix fusion_b1;
  Matrix fusion_w2;
  Matrix fusion_b2;

  static ModelGrads zeros_like(const ModelParams& params);
  void zero();
  void add(const ModelGrads& other);
  void scale(double factor);
  /// Copies into each slot's grad (padding row forced to zero).
  void store_into(ModelParams& params) const;
};

/// Gaussian initialization: embeddings and bilinear map with sigma 1/sqrt(d),
/// fusion layers with fan-in scaling and zero biases. Padding row is zero.
ModelParams init_params(std::size_t item_rows, std::size_t profile_rows, std::size_t dim,
                        std::uint64_t seed);

enum class LogitInit { zeros, gaussian };

struct RoutingConfig {
  std::size_t num_interests = 4;
  std::size_t iterations = 3;
  LogitInit init = LogitInit::gaussian;
  double init_sigma = 1.0;
};

struct InterestCapsules {
  Matrix interests;   // K x d, v_j = squash(z_j)
  Matrix coupling;    // n x K, softmax over K per unmasked row; zero rows when masked
  Matrix logits;      // n x K, the logits that produced `coupling`
  Matrix candidates;  // K x d, z_j of the final iteration
};

struct EmbeddedHistory {
  Matrix rows;                 // n x d
  std::vector<std::uint8_t> mask;  // 1 = padding (excluded from routing)
};

/// Row lookup; padding index maps to a zero row and is masked. Throws
/// DataError on out-of-range indices.
EmbeddedHistory embed_history(std::span<const ItemIndex> history, const Matrix& item_table);

/// Mixes a base seed and a user index into a per-user routing seed.
std::uint64_t routing_seed(std::uint64_t base_seed, UserIndex user);

/// Initial routing logits, one row per history entry. Gaussian draws are keyed
/// on (seed, row_keys[i], j), so rows carrying the same key start identically
/// regardless of position.
Matrix initial_logits(std::span<const std::uint64_t> row_keys, const RoutingConfig& config,
                      std::uint64_t seed);

/// Runs `iterations` rounds of routing from the given logits: softmax over
/// interests per unmasked row, z_j = sum_i b_ij S h_i, v_j = squash(z_j), and
/// c_ij = v_j^T S h_i between rounds. Throws DataError when every row is
/// masked.
InterestCapsules route_from_logits(const Matrix& history, std::span<const std::uint8_t> mask,
                                   const Matrix& bilinear, Matrix logits, std::size_t iterations);

/// initial_logits + route_from_logits.
InterestCapsules dynamic_route(const Matrix& history, std::span<const std::uint8_t> mask,
                               const Matrix& bilinear, const RoutingConfig& config,
                               std::uint64_t seed, std::span<const std::uint64_t> row_keys);

/// The final-iteration composition with coupling coefficients held fixed:
/// V = squash(B^T (H S^T)). Used as the differentiable surrogate of routing.
InterestCapsules route_with_fixed_coupling(const Matrix& history,
                                           std::span<const std::uint8_t> mask,
                                           const Matrix& bilinear, const Matrix& coupling);

/// Backward through the final routing iteration with coupling treated as a
/// constant. Accumulates into d_bilinear (d x d) and d_history (n x d).
void route_backward(const Matrix& history, std::span<const std::uint8_t> mask,
                    const Matrix& bilinear, const InterestCapsules& caps,
                    const Matrix& d_interests, Matrix& d_bilinear, Matrix& d_history);

struct FusionResult {
  Matrix output;      // K x d
  Vector profile;     // summed profile embedding (empty when identity)
  Matrix hidden_pre;  // K x 4d, pre-activation
};

/// Concatenates each capsule with the summed profile embedding and applies
/// the shared two-layer ReLU MLP. Identity when params has no profile.
FusionResult fuse_profile(const Matrix& interests, std::span<const std::uint32_t> profile,
                          const ModelParams& params);

/// Backward through fuse_profile. Returns d_interests; accumulates fusion and
/// profile-embedding gradients into `grads`.
Matrix fuse_backward(const Matrix& interests, std::span<const std::uint32_t> profile,
                     const ModelParams& params, const FusionResult& fwd,
                     const Matrix& d_output, ModelGrads& grads);

/// argmax_j v_j^T target, ties to the lowest index.
std::size_t select_interest(const Matrix& interests, std::span<const double> target);

/// Full user-side forward pass: embed -> route -> fuse.
struct UserForward {
  EmbeddedHistory embedded;
  std::vector<ItemIndex> history;
  InterestCapsules capsules;
  FusionResult fused;
};

/// `seed` is the per-user routing seed (see routing_seed). When
/// `fixed_coupling` is given, routing is replaced by route_with_fixed_coupling.
UserForward user_forward(std::span<const ItemIndex> history, std::span<const std::uint32_t> profile,
                         const ModelParams& params, const RoutingConfig& config,
                         std::uint64_t seed, const Matrix* fixed_coupling = nullptr);

}  // namespace drim
