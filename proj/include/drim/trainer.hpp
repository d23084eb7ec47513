/*
 * Copyright 2026 The DRIM Authors.
 *
 * This source code is licensed under the Apache License, Version 2.0 license
 * found in the LICENSE file in the root directory of this source tree.
 */

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "drim/checkpoint.hpp"
#include "drim/extractor.hpp"
#include "drim/ingest.hpp"
#include "drim/numeric.hpp"
#include "drim/regularizers.hpp"

namespace drim {

struct TrainConfig {
  std::size_t dim = 36;
  std::size_t max_len = 10;
  std::size_t negatives = 5;
  std::size_t batch_size = 128;
  std::size_t epochs = 10;
  std::size_t threads = 1;
  std::uint64_t seed = 0;
  RoutingConfig routing;
  SeparatorConfig separator{Separator::diverse, 0.1, DiverseSign::corrected};
  AdamConfig adam;
  NegativeDistribution negative_dist = NegativeDistribution::popularity_pow;

  /// Throws UsageError on invalid combinations.
  void validate() const;

  /// Flat key=value view; keys are the config-file keys.
  std::map<std::string, std::string> to_map() const;
  /// Applies overrides; unknown keys or bad values throw UsageError.
  void apply(const std::map<std::string, std::string>& values);
};

/// Reads a flat `key = value` file; `#` starts a comment.
std::map<std::string, std::string> read_config_file(const std::filesystem::path& path);

struct SampledSoftmax {
  double loss = 0.0;
  Vector d_user;             // d
  Vector d_target;           // d
  std::vector<Vector> d_negatives;
};

/// Cross-entropy of the target among {target} + negatives with logits
/// v^T e.
SampledSoftmax sampled_softmax_loss(std::span<const double> user_vector,
                                    std::span<const double> target,
                                    const std::vector<std::span<const double>>& negatives);

struct JointLossOptions {
  /// Hold routing coefficients and interest selection at these values. Makes
  /// the loss the exact function whose gradient joint_loss returns.
  const Matrix* fixed_coupling = nullptr;
  std::optional<std::size_t> fixed_selection;
};

struct JointLoss {
  double total = 0.0;
  double softmax = 0.0;
  double separator = 0.0;  // unscaled; 0 when not evaluated
  bool separator_evaluated = false;
  std::size_t selected = 0;
  Matrix coupling;
  Matrix user_vectors;  // post-fusion K x d
};

/// total = softmax + lambda * separator. When `grads` is non-null the
/// gradient of grad_scale * total is accumulated into it. The separator is
/// never evaluated when lambda == 0 or kind == none.
JointLoss joint_loss(const TrainSample& sample, std::span<const ItemIndex> negatives,
                     const ModelParams& params, const TrainConfig& config,
                     ModelGrads* grads = nullptr, double grad_scale = 1.0,
                     const JointLossOptions& options = {});

/// Finite-difference check of joint_loss over every trainable coordinate.
GradCheckReport check_joint_gradient(const TrainSample& sample,
                                     std::span<const ItemIndex> negatives, ModelParams& params,
                                     const TrainConfig& config,
                                     const GradCheckOptions& options = {});

struct GradSuiteCase {
  std::string label;
  GradCheckReport report;
};

/// Joint-loss gradient checks on small random instances (d=4, K=2, history
/// 3, 2 negatives) for every separator, lambda in {0, 0.5}, with and without
/// profile fusion.
std::vector<GradSuiteCase> joint_gradient_suite(std::uint64_t seed, double rel_tol = 1e-4);

struct EpochStats {
  std::size_t epoch = 0;
  double joint = 0.0;
  double softmax = 0.0;
  double separator = 0.0;
  double seconds = 0.0;
};

struct TrainReport {
  std::vector<EpochStats> epochs;
  std::filesystem::path checkpoint;
};

struct Model {
  ModelParams params;
  TrainConfig config;
};

Checkpoint to_checkpoint(const Model& model);
/// Throws DataError if matrices are missing or shapes disagree with the header.
Model from_checkpoint(const Checkpoint& ckpt);
Model load_model(const std::filesystem::path& path);

/// Fresh model for the dataset's catalog and profile features.
Model init_model(const Dataset& dataset, const TrainConfig& config);

using EpochCallback = std::function<void(const EpochStats&)>;

/// Seeded shuffled mini-batches, mean gradient per batch, one Adam step per
/// slot per batch. Writes the checkpoint after every epoch (and once for zero
/// epochs) when `checkpoint` is non-empty. Throws NumericError on a
/// non-finite loss.
TrainReport train(const Dataset& dataset, const TrainConfig& config,
                  const std::filesystem::path& checkpoint = {}, Model* trained = nullptr,
                  const EpochCallback& on_epoch = {});

}  // namespace drim
