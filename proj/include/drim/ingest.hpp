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
#include <optional>
#include <random>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace drim {

using ItemIndex = std::uint32_t;
using UserIndex = std::uint32_t;

/// Item index reserved for padding; real items are numbered from 1.
inline constexpr ItemIndex kPaddingItem = 0;

struct Interaction {
  std::string user_id;
  std::string item_id;
  std::int64_t timestamp = 0;

  friend bool operator==(const Interaction&, const Interaction&) = default;
};

enum class TableFormat { tsv, csv };

/// Parses `user_id, item_id, timestamp` rows. A first line starting with
/// "user_id" is treated as a header. Throws DataError naming the line on
/// malformed rows and on missing files.
std::vector<Interaction> load_interactions(const std::filesystem::path& path, TableFormat format);
void write_interactions(const std::filesystem::path& path, std::span<const Interaction> rows,
                        TableFormat format = TableFormat::tsv);

/// Bidirectional item id <-> dense index map with per-item event counts.
/// Index 0 is the padding slot and has no id.
class Vocab {
 public:
  Vocab();

  /// Returns the index for `id`, inserting it if new.
  ItemIndex add(const std::string& id);
  std::optional<ItemIndex> find(const std::string& id) const;
  const std::string& id(ItemIndex index) const { return ids_.at(index); }

  std::uint64_t frequency(ItemIndex index) const { return freq_.at(index); }
  void set_frequency(ItemIndex index, std::uint64_t f) { freq_.at(index) = f; }
  void increment(ItemIndex index) { ++freq_.at(index); }

  /// Number of real items (padding excluded).
  std::size_t size() const { return ids_.size() - 1; }
  /// Embedding table rows: size() + 1.
  std::size_t rows() const { return ids_.size(); }

 private:
  std::vector<std::string> ids_;
  std::vector<std::uint64_t> freq_;
  std::unordered_map<std::string, ItemIndex> index_;
};

struct FilterResult {
  std::vector<Interaction> interactions;
  Vocab vocab;
};

/// Alternates item-count and user-count filtering until neither removes
/// anything. Vocab indices follow first appearance in the surviving rows.
/// Throws DataError when nothing survives.
FilterResult filter_min_counts(std::span<const Interaction> data, std::size_t min_item,
                               std::size_t min_user);

struct UserSequence {
  UserIndex user_index = 0;
  std::vector<ItemIndex> items;
  std::size_t split_point = 0;

  std::span<const ItemIndex> train() const { return {items.data(), split_point}; }
  std::span<const ItemIndex> test() const {
    return {items.data() + split_point, items.size() - split_point};
  }
};

struct SequenceSet {
  std::vector<std::string> user_ids;
  std::vector<UserSequence> sequences;
};

/// Groups by user (first-appearance order) and stable-sorts each user's
/// events by timestamp. split_point is set to the full length. Interactions
/// with ids missing from `vocab` are skipped.
SequenceSet build_sequences(std::span<const Interaction> data, const Vocab& vocab);

struct SplitResult {
  std::vector<UserSequence> sequences;
  std::size_t dropped = 0;
};

/// split_point = floor(train_frac * length). Users with an empty train or
/// test part are dropped and counted.
SplitResult chronological_split(std::span<const UserSequence> sequences, double train_frac);

struct TrainSample {
  UserIndex user_index = 0;
  std::vector<ItemIndex> history;
  ItemIndex target = kPaddingItem;
  std::vector<std::uint32_t> profile;
};

/// One sample per position t in [1, split_point): target = items[t], history
/// = up to max_len items immediately before t. `profiles`, when non-empty, is
/// indexed by user_index.
std::vector<TrainSample> make_train_samples(
    std::span<const UserSequence> sequences, std::size_t max_len,
    std::span<const std::vector<std::uint32_t>> profiles = {});

enum class NegativeDistribution { uniform, popularity_pow };

/// Draws negative items over [1, vocab.size()], rejecting the target.
/// popularity_pow weights items by frequency^0.75.
class NegativeSampler {
 public:
  static constexpr double kPopularityExponent = 0.75;

  NegativeSampler(const Vocab& vocab, NegativeDistribution dist);
  /// `frequencies` is indexed by item (entry 0 is the padding slot and ignored).
  NegativeSampler(std::span<const std::uint64_t> frequencies, NegativeDistribution dist);

  /// Throws UsageError when the catalog cannot supply n negatives.
  std::vector<ItemIndex> sample(ItemIndex target, std::size_t n, std::mt19937_64& rng) const;

  /// Normalized draw probability of `item` before target rejection.
  double probability(ItemIndex item) const;

 private:
  std::size_t catalog_size_;
  NegativeDistribution dist_;
  std::vector<double> weights_;
  // Inclusive prefix sums of weights_ over items 1..n.
  std::vector<double> cumulative_;
};

std::vector<ItemIndex> sample_negatives(const Vocab& vocab, ItemIndex target, std::size_t n,
                                        NegativeDistribution dist, std::uint64_t rng_seed);

struct SynthConfig {
  std::size_t n_users = 1000;
  std::size_t n_clusters = 2;
  std::size_t items_per_cluster = 100;
  std::size_t seq_len = 20;
  /// Share of events drawn from the primary cluster; the rest come from the
  /// secondary cluster.
  double primary_share = 0.7;
  /// Width of each user's taste window (contiguous on the cluster's item
  /// ring). Items are drawn from the window with replacement.
  std::size_t window = 10;
  std::uint64_t seed = 0;
};

struct SyntheticData {
  std::vector<Interaction> interactions;
  /// item_id -> cluster, in item-id order.
  std::vector<std::pair<std::string, std::size_t>> item_clusters;
  /// Per user: (primary cluster, secondary cluster).
  std::vector<std::pair<std::size_t, std::size_t>> user_clusters;
};

/// Each user gets two distinct clusters and a taste window in each; events
/// follow the primary/secondary mixture. Deterministic given the seed.
SyntheticData generate_synthetic(const SynthConfig& config);
void write_cluster_labels(const std::filesystem::path& path, const SyntheticData& data);

/// A prepared dataset: filtered vocab, split sequences, optional profiles.
struct Dataset {
  Vocab vocab;
  std::vector<std::string> user_ids;
  std::vector<UserSequence> sequences;
  /// Optional per-user profile feature indices (indexed by user_index).
  std::vector<std::string> profile_features;
  std::vector<std::vector<std::uint32_t>> profiles;

  bool has_profiles() const { return !profile_features.empty(); }
};

struct PrepareConfig {
  std::size_t min_item = 20;
  std::size_t min_user = 20;
  double train_frac = 0.8;
};

/// filter -> sequence -> split. Frequencies in the returned vocab count all
/// surviving events.
Dataset prepare_dataset(std::span<const Interaction> data, const PrepareConfig& config);

/// Reads `user_id \t feature` rows and attaches them to the dataset. Users
/// not in the dataset are ignored.
void attach_profiles(Dataset& dataset, const std::filesystem::path& path);

/// Directory layout: items.tsv, users.tsv, sequences.tsv, optional profiles.tsv.
void save_dataset(const std::filesystem::path& dir, const Dataset& dataset);
Dataset load_dataset(const std::filesystem::path& dir);

/// Item-event counts restricted to each user's train prefix.
std::vector<std::uint64_t> train_frequencies(const Dataset& dataset);

}  // namespace drim
