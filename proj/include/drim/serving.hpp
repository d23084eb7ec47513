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
#include <span>
#include <string>
#include <unordered_set>
#include <vector>

#include "drim/ingest.hpp"
#include "drim/numeric.hpp"
#include "drim/trainer.hpp"

namespace drim {

struct ScoredItem {
  ItemIndex item = kPaddingItem;
  double score = 0.0;
  std::uint32_t interest = 0;  // source interest vector for merged results

  friend bool operator==(const ScoredItem&, const ScoredItem&) = default;
};

/// Descending score, ascending item index on ties.
inline bool ranks_before(const ScoredItem& a, const ScoredItem& b) {
  return a.score > b.score || (a.score == b.score && a.item < b.item);
}

enum class IndexBackend { exact, approximate };

struct IvfOptions {
  /// 0 picks round(sqrt(n)).
  std::size_t lists = 0;
  std::size_t kmeans_iterations = 12;
  /// nprobe is calibrated at build time until sampled recall@calibration_n
  /// reaches this value.
  double target_recall = 0.98;
  std::size_t calibration_n = 50;
  std::size_t calibration_queries = 64;
  std::uint64_t seed = 0;
};

using ItemFilter = std::unordered_set<ItemIndex>;

/// Immutable store of item vectors answering top-N inner-product queries.
/// Row r of the store is item r + 1 (the padding row is not indexed).
class RetrievalIndex {
 public:
  /// `item_table` includes the padding row 0. Throws DataError on an empty
  /// catalog.
  static RetrievalIndex build(const Matrix& item_table, IndexBackend backend,
                              const IvfOptions& options = {});

  /// Top-n by inner product, skipping items in `exclude`.
  std::vector<ScoredItem> search(std::span<const double> query, std::size_t n,
                                 const ItemFilter* exclude = nullptr) const;

  IndexBackend backend() const { return backend_; }
  std::size_t size() const { return vectors_.rows(); }
  std::size_t dim() const { return vectors_.cols(); }
  std::size_t lists() const { return lists_.size(); }
  std::size_t nprobe() const { return nprobe_; }

 private:
  std::vector<ScoredItem> search_exact(std::span<const double> query, std::size_t n,
                                       const ItemFilter* exclude) const;
  std::vector<ScoredItem> search_ivf(std::span<const double> query, std::size_t n,
                                     const ItemFilter* exclude, std::size_t nprobe) const;

  IndexBackend backend_ = IndexBackend::exact;
  Matrix vectors_;
  Matrix centroids_;
  std::vector<std::vector<std::uint32_t>> lists_;
  std::size_t nprobe_ = 0;
};

/// Recall of `approx` against `exact` (fraction of exact items recovered).
double recall_at(std::span<const ScoredItem> exact, std::span<const ScoredItem> approx);

/// Keeps the most recent max_len known items (unknown = padding entries are
/// dropped) and runs embed -> route -> fuse with the model's routing seed for
/// `user`. Throws DataError when no known item remains.
Matrix user_vectors(std::span<const ItemIndex> history, std::span<const std::uint32_t> profile,
                    const Model& model, UserIndex user);

/// Maps raw item ids to indices; unknown ids become the padding index.
std::vector<ItemIndex> lookup_items(const Vocab& vocab, std::span<const std::string> ids);

struct Recommendation {
  UserIndex user = 0;
  std::vector<ScoredItem> items;
};

/// Per interest top-N, pool the K*N hits, keep each item's best score,
/// order by ranks_before and truncate to N.
Recommendation retrieve(const Matrix& interests, const RetrievalIndex& index, std::size_t n,
                        const ItemFilter* exclude = nullptr, UserIndex user = 0);

/// Scores every indexed item against every interest and applies the same
/// dedup and ordering as retrieve. Reference for the exact backend.
Recommendation brute_force_retrieve(const Matrix& interests, const Matrix& item_table,
                                    std::size_t n, const ItemFilter* exclude = nullptr,
                                    UserIndex user = 0);

struct ServeOptions {
  std::size_t n = 50;
  bool exclude_history = true;
  IndexBackend backend = IndexBackend::exact;
  std::size_t threads = 1;
};

/// Recommendations for each sequence, using its train prefix as history.
std::vector<Recommendation> recommend_all(const Model& model, const Dataset& dataset,
                                          std::span<const UserSequence> users,
                                          const RetrievalIndex& index, const ServeOptions& options);

/// `user_id \t item_id \t rank \t score`, rank starting at 1.
void write_recommendations(const std::filesystem::path& path, const Dataset& dataset,
                           std::span<const Recommendation> recs);

}  // namespace drim
