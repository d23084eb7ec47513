/*
 * Copyright 2026 The DRIM Authors.
 *
 * This source code is licensed under the Apache License, Version 2.0 license
 * found in the LICENSE file in the root directory of this source tree.
 */

#include "drim/serving.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>
#include <unordered_map>

#include "drim/error.hpp"
#include "drim/parallel.hpp"
#include "drim/extractor.hpp"

namespace drim {

namespace {

// Bounded selection keeping the n best under ranks_before.
class TopN {
 public:
  explicit TopN(std::size_t n) : n_(n) { heap_.reserve(n + 1); }

  void push(const ScoredItem& s) {
    if (n_ == 0) return;
    if (heap_.size() < n_) {
      heap_.push_back(s);
      std::push_heap(heap_.begin(), heap_.end(), ranks_before);
    } else if (ranks_before(s, heap_.front())) {
      std::pop_heap(heap_.begin(), heap_.end(), ranks_before);
      heap_.back() = s;
      std::push_heap(heap_.begin(), heap_.end(), ranks_before);
    }
  }

  std::vector<ScoredItem> take() {
    std::sort(heap_.begin(), heap_.end(), ranks_before);
    return std::move(heap_);
  }

 private:
  std::size_t n_;
  // Max-heap under ranks_before: front is the worst retained entry.
  std::vector<ScoredItem> heap_;
};

std::vector<ScoredItem> merge_candidates(std::vector<ScoredItem> pool, std::size_t n) {
  std::sort(pool.begin(), pool.end(), ranks_before);
  std::vector<ScoredItem> out;
  out.reserve(std::min(n, pool.size()));
  std::unordered_set<ItemIndex> seen;
  for (const auto& s : pool) {
    if (out.size() == n) break;
    // First occurrence after sorting is the item's best score.
    if (seen.insert(s.item).second) out.push_back(s);
  }
  return out;
}

std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

}  // namespace

RetrievalIndex RetrievalIndex::build(const Matrix& item_table, IndexBackend backend,
                                     const IvfOptions& options) {
  if (item_table.rows() < 2 || item_table.cols() == 0) {
    throw DataError("cannot build a retrieval index over an empty item set");
  }
  RetrievalIndex index;
  index.backend_ = backend;
  const std::size_t n = item_table.rows() - 1;
  const std::size_t d = item_table.cols();
  index.vectors_ = Matrix(n, d);
  for (std::size_t r = 0; r < n; ++r) {
    std::copy_n(item_table.row(r + 1).begin(), d, index.vectors_.row(r).begin());
  }
  if (backend == IndexBackend::exact) return index;

  // k-means (Lloyd) over item vectors; lists hold row ids.
  std::size_t lists = options.lists != 0
                          ? options.lists
                          : static_cast<std::size_t>(std::lround(std::sqrt(static_cast<double>(n))));
  lists = std::clamp<std::size_t>(lists, 1, n);
  std::mt19937_64 rng(options.seed);
  std::vector<std::size_t> rows(n);
  std::iota(rows.begin(), rows.end(), std::size_t{0});
  std::shuffle(rows.begin(), rows.end(), rng);
  index.centroids_ = Matrix(lists, d);
  for (std::size_t c = 0; c < lists; ++c) {
    std::copy_n(index.vectors_.row(rows[c]).begin(), d, index.centroids_.row(c).begin());
  }
  std::vector<std::uint32_t> assign(n, 0);
  for (std::size_t it = 0; it < options.kmeans_iterations; ++it) {
    for (std::size_t r = 0; r < n; ++r) {
      double best = std::numeric_limits<double>::infinity();
      for (std::size_t c = 0; c < lists; ++c) {
        double dist = 0.0;
        auto x = index.vectors_.row(r);
        auto y = index.centroids_.row(c);
        for (std::size_t m = 0; m < d; ++m) dist += (x[m] - y[m]) * (x[m] - y[m]);
        if (dist < best) {
          best = dist;
          assign[r] = static_cast<std::uint32_t>(c);
        }
      }
    }
    Matrix sums(lists, d);
    std::vector<std::size_t> counts(lists, 0);
    for (std::size_t r = 0; r < n; ++r) {
      axpy(1.0, index.vectors_.row(r), sums.row(assign[r]));
      ++counts[assign[r]];
    }
    for (std::size_t c = 0; c < lists; ++c) {
      if (counts[c] == 0) continue;  // keep the previous centroid
      for (std::size_t m = 0; m < d; ++m) {
        index.centroids_(c, m) = sums(c, m) / static_cast<double>(counts[c]);
      }
    }
  }
  index.lists_.assign(lists, {});
  for (std::size_t r = 0; r < n; ++r) index.lists_[assign[r]].push_back(static_cast<std::uint32_t>(r));

  // Calibrate nprobe on synthetic queries: sums of a few random item vectors.
  std::uniform_int_distribution<std::size_t> pick(0, n - 1);
  std::vector<Vector> queries(options.calibration_queries, Vector(d, 0.0));
  for (auto& q : queries) {
    for (int t = 0; t < 3; ++t) axpy(1.0, index.vectors_.row(pick(rng)), q);
  }
  std::vector<std::vector<ScoredItem>> truth;
  truth.reserve(queries.size());
  for (const auto& q : queries) truth.push_back(index.search_exact(q, options.calibration_n, nullptr));
  index.nprobe_ = lists;
  for (std::size_t probe = 1; probe <= lists; ++probe) {
    double total = 0.0;
    for (std::size_t i = 0; i < queries.size(); ++i) {
      total += recall_at(truth[i], index.search_ivf(queries[i], options.calibration_n, nullptr, probe));
    }
    if (queries.empty() || total / static_cast<double>(queries.size()) >= options.target_recall) {
      index.nprobe_ = probe;
      break;
    }
  }
  return index;
}

std::vector<ScoredItem> RetrievalIndex::search(std::span<const double> query, std::size_t n,
                                               const ItemFilter* exclude) const {
  if (query.size() != dim()) throw DataError("query dimension does not match the index");
  if (backend_ == IndexBackend::exact) return search_exact(query, n, exclude);
  return search_ivf(query, n, exclude, nprobe_);
}

std::vector<ScoredItem> RetrievalIndex::search_exact(std::span<const double> query, std::size_t n,
                                                     const ItemFilter* exclude) const {
  TopN top(n);
  for (std::size_t r = 0; r < vectors_.rows(); ++r) {
    const auto item = static_cast<ItemIndex>(r + 1);
    if (exclude != nullptr && exclude->contains(item)) continue;
    top.push({item, dot(vectors_.row(r), query), 0});
  }
  return top.take();
}

std::vector<ScoredItem> RetrievalIndex::search_ivf(std::span<const double> query, std::size_t n,
                                                   const ItemFilter* exclude,
                                                   std::size_t nprobe) const {
  std::vector<std::pair<double, std::size_t>> ranked(lists_.size());
  for (std::size_t c = 0; c < lists_.size(); ++c) ranked[c] = {-dot(centroids_.row(c), query), c};
  nprobe = std::min(nprobe, ranked.size());
  std::partial_sort(ranked.begin(), ranked.begin() + static_cast<std::ptrdiff_t>(nprobe), ranked.end());
  TopN top(n);
  for (std::size_t p = 0; p < nprobe; ++p) {
    for (std::uint32_t r : lists_[ranked[p].second]) {
      const auto item = static_cast<ItemIndex>(r + 1);
      if (exclude != nullptr && exclude->contains(item)) continue;
      top.push({item, dot(vectors_.row(r), query), 0});
    }
  }
  return top.take();
}

double recall_at(std::span<const ScoredItem> exact, std::span<const ScoredItem> approx) {
  if (exact.empty()) return 1.0;
  std::unordered_set<ItemIndex> found;
  for (const auto& s : approx) found.insert(s.item);
  std::size_t hits = 0;
  for (const auto& s : exact) hits += found.contains(s.item) ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(exact.size());
}

Matrix user_vectors(std::span<const ItemIndex> history, std::span<const std::uint32_t> profile,
                    const Model& model, UserIndex user) {
  std::vector<ItemIndex> known;
  for (ItemIndex i : history) {
    if (i != kPaddingItem) known.push_back(i);
  }
  if (known.empty()) throw DataError("user history has no known items");
  const std::size_t max_len = model.config.max_len;
  if (known.size() > max_len) {
    known.erase(known.begin(), known.end() - static_cast<std::ptrdiff_t>(max_len));
  }
  return user_forward(known, profile, model.params, model.config.routing,
                      routing_seed(model.config.seed, user))
      .fused.output;
}

std::vector<ItemIndex> lookup_items(const Vocab& vocab, std::span<const std::string> ids) {
  std::vector<ItemIndex> out;
  out.reserve(ids.size());
  for (const auto& id : ids) out.push_back(vocab.find(id).value_or(kPaddingItem));
  return out;
}

Recommendation retrieve(const Matrix& interests, const RetrievalIndex& index, std::size_t n,
                        const ItemFilter* exclude, UserIndex user) {
  if (n < 1) throw UsageError("retrieval size N must be >= 1");
  std::vector<ScoredItem> pool;
  pool.reserve(interests.rows() * n);
  for (std::size_t k = 0; k < interests.rows(); ++k) {
    for (ScoredItem s : index.search(interests.row(k), n, exclude)) {
      s.interest = static_cast<std::uint32_t>(k);
      pool.push_back(s);
    }
  }
  return {user, merge_candidates(std::move(pool), n)};
}

Recommendation brute_force_retrieve(const Matrix& interests, const Matrix& item_table,
                                    std::size_t n, const ItemFilter* exclude, UserIndex user) {
  std::vector<ScoredItem> all;
  for (ItemIndex item = 1; item < item_table.rows(); ++item) {
    if (exclude != nullptr && exclude->contains(item)) continue;
    ScoredItem best{item, -std::numeric_limits<double>::infinity(), 0};
    for (std::size_t k = 0; k < interests.rows(); ++k) {
      const double s = dot(interests.row(k), item_table.row(item));
      if (s > best.score) best = {item, s, static_cast<std::uint32_t>(k)};
    }
    all.push_back(best);
  }
  std::sort(all.begin(), all.end(), ranks_before);
  if (all.size() > n) all.resize(n);
  return {user, std::move(all)};
}

std::vector<Recommendation> recommend_all(const Model& model, const Dataset& dataset,
                                          std::span<const UserSequence> users,
                                          const RetrievalIndex& index,
                                          const ServeOptions& options) {
  std::vector<Recommendation> recs(users.size());
  auto run = [&](std::size_t lo, std::size_t hi) {
    for (std::size_t u = lo; u < hi; ++u) {
      const auto& seq = users[u];
      const auto history = seq.train();
      std::span<const std::uint32_t> profile;
      if (dataset.has_profiles()) profile = dataset.profiles[seq.user_index];
      const Matrix v = user_vectors(history, profile, model, seq.user_index);
      ItemFilter exclude;
      if (options.exclude_history) exclude.insert(history.begin(), history.end());
      recs[u] = retrieve(v, index, options.n, options.exclude_history ? &exclude : nullptr,
                         seq.user_index);
    }
  };
  parallel_chunks(users.size(), options.threads,
                  [&](std::size_t, std::size_t lo, std::size_t hi) { run(lo, hi); });
  return recs;
}

void write_recommendations(const std::filesystem::path& path, const Dataset& dataset,
                           std::span<const Recommendation> recs) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot open for writing: " + path.string());
  for (const auto& rec : recs) {
    for (std::size_t r = 0; r < rec.items.size(); ++r) {
      out << dataset.user_ids.at(rec.user) << '\t' << dataset.vocab.id(rec.items[r].item) << '\t'
          << r + 1 << '\t' << format_double(rec.items[r].score) << '\n';
    }
  }
  if (!out) throw DataError("failed writing " + path.string());
}

}  // namespace drim
