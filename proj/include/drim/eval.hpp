/*
 * Copyright 2026 The DRIM Authors.
 *
 * This source code is licensed under the Apache License, Version 2.0 license
 * found in the LICENSE file in the root directory of this source tree.
 */

#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "drim/ingest.hpp"
#include "drim/serving.hpp"
#include "drim/trainer.hpp"

namespace drim {

/// Fraction of users whose first N recommendations contain at least one
/// test-suffix item. Users with an empty test suffix are skipped; users
/// without a recommendation list count as misses. Throws DataError when no
/// user is evaluated.
double hit_rate(std::span<const Recommendation> recs, std::span<const UserSequence> sequences,
                std::size_t n);

/// Global top-N by train-prefix frequency (ties to the lower index), with the
/// user's own history removed when exclude_history is set.
std::vector<Recommendation> most_popular(const Dataset& dataset,
                                         std::span<const UserSequence> users, std::size_t n,
                                         bool exclude_history);

struct PairwiseDiversity {
  double mean_cosine = 0.0;
  double mean_angle_degrees = 0.0;
  bool degenerate = false;  // some row had near-zero norm
};

/// Mean over the K(K-1)/2 row pairs. Requires K >= 2.
PairwiseDiversity pairwise_diversity(const Matrix& interests);

struct DiversityStats {
  double mean_cosine = 0.0;
  double mean_angle_degrees = 0.0;
  std::size_t users = 0;
  std::size_t degenerate = 0;
  std::vector<double> per_user_cosine;
};

/// Post-fusion interest vectors of each user (train prefix as history);
/// degenerate users are excluded and counted.
DiversityStats diversity_stats(const Model& model, const Dataset& dataset,
                               std::span<const UserSequence> users);

/// How often each interest wins the argmax against the user's test items.
std::vector<std::size_t> interest_utilization(const Model& model, const Dataset& dataset,
                                              std::span<const UserSequence> users);

/// `user_id \t interest_k \t c1,c2,...,cd` per user and interest, shortest
/// round-trip decimal formatting.
void export_embeddings(const Model& model, const Dataset& dataset,
                       std::span<const UserSequence> users, const std::filesystem::path& path);

struct EvalOptions {
  std::vector<std::size_t> cutoffs{50, 100};
  bool exclude_history = true;
  IndexBackend backend = IndexBackend::exact;
  std::size_t threads = 1;
};

struct EvalReport {
  std::map<std::size_t, double> hit_rate;
  std::map<std::size_t, double> most_popular_hit_rate;
  std::size_t users = 0;
  double mean_cosine = 0.0;
  double mean_angle_degrees = 0.0;
  std::size_t degenerate_users = 0;
  std::vector<std::size_t> utilization;
  bool exclude_history = true;
};

EvalReport evaluate(const Model& model, const Dataset& dataset, const EvalOptions& options);

/// `key: value` lines.
void write_report_text(std::ostream& out, const EvalReport& report);
/// One JSON object per line.
void write_report_jsonl(std::ostream& out, const EvalReport& report);

}  // namespace drim
