/*
 * Copyright 2026 The DRIM Authors.
 *
 * This source code is licensed under the Apache License, Version 2.0 license
 * found in the LICENSE file in the root directory of this source tree.
 */

#include "drim/ingest.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "drim/error.hpp"

namespace drim {

namespace {

std::vector<std::string_view> split_fields(std::string_view line, char sep) {
  std::vector<std::string_view> fields;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(sep, start);
    if (pos == std::string_view::npos) {
      fields.push_back(line.substr(start));
      break;
    }
    fields.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
  return fields;
}

template <typename T>
bool parse_integer(std::string_view s, T& out) {
  if (s.empty()) return false;
  const auto* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, out);
  return ec == std::errc() && ptr == end;
}

std::string_view strip_cr(std::string_view line) {
  if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
  return line;
}

std::ifstream open_input(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  return in;
}

std::ofstream open_output(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot open for writing: " + path.string());
  return out;
}

[[noreturn]] void parse_error(const std::filesystem::path& path, std::size_t line_no,
                              const std::string& what) {
  throw DataError(path.string() + ":" + std::to_string(line_no) + ": " + what);
}

}  // namespace

std::vector<Interaction> load_interactions(const std::filesystem::path& path, TableFormat format) {
  auto in = open_input(path);
  const char sep = format == TableFormat::tsv ? '\t' : ',';
  std::vector<Interaction> rows;
  std::string raw;
  std::size_t line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    const auto line = strip_cr(raw);
    if (line.empty()) continue;
    if (line_no == 1 && line.starts_with("user_id")) continue;
    const auto fields = split_fields(line, sep);
    if (fields.size() < 3) parse_error(path, line_no, "expected 3 columns");
    Interaction row{std::string(fields[0]), std::string(fields[1]), 0};
    if (row.user_id.empty() || row.item_id.empty()) parse_error(path, line_no, "empty id");
    if (!parse_integer(fields[2], row.timestamp) || row.timestamp < 0) {
      parse_error(path, line_no, "timestamp is not a non-negative integer: '" +
                                     std::string(fields[2]) + "'");
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

void write_interactions(const std::filesystem::path& path, std::span<const Interaction> rows,
                        TableFormat format) {
  auto out = open_output(path);
  const char sep = format == TableFormat::tsv ? '\t' : ',';
  for (const auto& r : rows) out << r.user_id << sep << r.item_id << sep << r.timestamp << '\n';
  if (!out) throw DataError("failed writing " + path.string());
}

Vocab::Vocab() : ids_{std::string()}, freq_{0} {}

ItemIndex Vocab::add(const std::string& id) {
  auto [it, inserted] = index_.try_emplace(id, static_cast<ItemIndex>(ids_.size()));
  if (inserted) {
    ids_.push_back(id);
    freq_.push_back(0);
  }
  return it->second;
}

std::optional<ItemIndex> Vocab::find(const std::string& id) const {
  const auto it = index_.find(id);
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

FilterResult filter_min_counts(std::span<const Interaction> data, std::size_t min_item,
                               std::size_t min_user) {
  if (min_item < 1 || min_user < 1) throw UsageError("min counts must be >= 1");
  std::vector<bool> alive(data.size(), true);
  bool changed = true;
  while (changed) {
    changed = false;
    std::unordered_map<std::string_view, std::size_t> item_counts;
    for (std::size_t i = 0; i < data.size(); ++i) {
      if (alive[i]) ++item_counts[data[i].item_id];
    }
    for (std::size_t i = 0; i < data.size(); ++i) {
      if (alive[i] && item_counts[data[i].item_id] < min_item) {
        alive[i] = false;
        changed = true;
      }
    }
    std::unordered_map<std::string_view, std::size_t> user_counts;
    for (std::size_t i = 0; i < data.size(); ++i) {
      if (alive[i]) ++user_counts[data[i].user_id];
    }
    for (std::size_t i = 0; i < data.size(); ++i) {
      if (alive[i] && user_counts[data[i].user_id] < min_user) {
        alive[i] = false;
        changed = true;
      }
    }
  }

  FilterResult result;
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (!alive[i]) continue;
    result.interactions.push_back(data[i]);
    result.vocab.increment(result.vocab.add(data[i].item_id));
  }
  if (result.interactions.empty()) throw DataError("dataset is empty after min-count filtering");
  return result;
}

SequenceSet build_sequences(std::span<const Interaction> data, const Vocab& vocab) {
  SequenceSet set;
  std::unordered_map<std::string, UserIndex> user_index;
  std::vector<std::vector<std::pair<std::int64_t, ItemIndex>>> events;
  for (const auto& row : data) {
    const auto item = vocab.find(row.item_id);
    if (!item) continue;
    auto [it, inserted] =
        user_index.try_emplace(row.user_id, static_cast<UserIndex>(set.user_ids.size()));
    if (inserted) {
      set.user_ids.push_back(row.user_id);
      events.emplace_back();
    }
    events[it->second].emplace_back(row.timestamp, *item);
  }
  set.sequences.reserve(events.size());
  for (UserIndex u = 0; u < events.size(); ++u) {
    auto& ev = events[u];
    std::stable_sort(ev.begin(), ev.end(),
                     [](const auto& a, const auto& b) { return a.first < b.first; });
    UserSequence seq;
    seq.user_index = u;
    seq.items.reserve(ev.size());
    for (const auto& [ts, item] : ev) seq.items.push_back(item);
    seq.split_point = seq.items.size();
    set.sequences.push_back(std::move(seq));
  }
  return set;
}

SplitResult chronological_split(std::span<const UserSequence> sequences, double train_frac) {
  if (!(train_frac > 0.0 && train_frac < 1.0)) throw UsageError("train_frac must be in (0, 1)");
  SplitResult result;
  for (const auto& seq : sequences) {
    const auto split = static_cast<std::size_t>(
        std::floor(train_frac * static_cast<double>(seq.items.size()) + 1e-9));
    if (split == 0 || split >= seq.items.size()) {
      ++result.dropped;
      continue;
    }
    UserSequence out = seq;
    out.split_point = split;
    result.sequences.push_back(std::move(out));
  }
  if (result.sequences.empty()) throw DataError("no users left after chronological split");
  return result;
}

std::vector<TrainSample> make_train_samples(std::span<const UserSequence> sequences,
                                            std::size_t max_len,
                                            std::span<const std::vector<std::uint32_t>> profiles) {
  if (max_len < 1) throw UsageError("max_len must be >= 1");
  std::vector<TrainSample> samples;
  for (const auto& seq : sequences) {
    const auto train = seq.train();
    for (std::size_t t = 1; t < train.size(); ++t) {
      TrainSample s;
      s.user_index = seq.user_index;
      const std::size_t begin = t > max_len ? t - max_len : 0;
      s.history.assign(train.begin() + static_cast<std::ptrdiff_t>(begin),
                       train.begin() + static_cast<std::ptrdiff_t>(t));
      s.target = train[t];
      if (!profiles.empty()) s.profile = profiles[seq.user_index];
      samples.push_back(std::move(s));
    }
  }
  return samples;
}

namespace {

std::vector<std::uint64_t> vocab_frequencies(const Vocab& vocab) {
  std::vector<std::uint64_t> freq(vocab.rows(), 0);
  for (ItemIndex i = 1; i < vocab.rows(); ++i) freq[i] = vocab.frequency(i);
  return freq;
}

}  // namespace

NegativeSampler::NegativeSampler(const Vocab& vocab, NegativeDistribution dist)
    : NegativeSampler(vocab_frequencies(vocab), dist) {}

NegativeSampler::NegativeSampler(std::span<const std::uint64_t> frequencies,
                                 NegativeDistribution dist)
    : catalog_size_(frequencies.empty() ? 0 : frequencies.size() - 1), dist_(dist) {
  weights_.assign(catalog_size_ + 1, 0.0);
  for (std::size_t i = 1; i <= catalog_size_; ++i) {
    weights_[i] = dist == NegativeDistribution::uniform
                      ? 1.0
                      : std::pow(static_cast<double>(frequencies[i]), kPopularityExponent);
  }
  cumulative_.resize(catalog_size_);
  std::partial_sum(weights_.begin() + 1, weights_.end(), cumulative_.begin());
}

double NegativeSampler::probability(ItemIndex item) const {
  if (item == kPaddingItem || item > catalog_size_ || cumulative_.empty()) return 0.0;
  return weights_[item] / cumulative_.back();
}

std::vector<ItemIndex> NegativeSampler::sample(ItemIndex target, std::size_t n,
                                               std::mt19937_64& rng) const {
  if (n < 1) throw UsageError("negative count must be >= 1");
  if (catalog_size_ <= n) {
    throw UsageError("catalog of " + std::to_string(catalog_size_) +
                     " items is too small for " + std::to_string(n) + " negatives");
  }
  const double target_mass = target >= 1 && target <= catalog_size_ ? weights_[target] : 0.0;
  if (cumulative_.back() - target_mass <= 0.0) {
    throw UsageError("no negative items carry sampling weight");
  }
  std::vector<ItemIndex> out;
  out.reserve(n);
  std::uniform_int_distribution<std::size_t> uniform(1, catalog_size_);
  std::uniform_real_distribution<double> unit(0.0, cumulative_.back());
  while (out.size() < n) {
    ItemIndex item;
    if (dist_ == NegativeDistribution::uniform) {
      item = static_cast<ItemIndex>(uniform(rng));
    } else {
      const double u = unit(rng);
      const auto it = std::upper_bound(cumulative_.begin(), cumulative_.end(), u);
      item = static_cast<ItemIndex>(
          std::min<std::size_t>(static_cast<std::size_t>(it - cumulative_.begin()),
                                catalog_size_ - 1) +
          1);
    }
    if (item != target) out.push_back(item);
  }
  return out;
}

std::vector<ItemIndex> sample_negatives(const Vocab& vocab, ItemIndex target, std::size_t n,
                                        NegativeDistribution dist, std::uint64_t rng_seed) {
  std::mt19937_64 rng(rng_seed);
  return NegativeSampler(vocab, dist).sample(target, n, rng);
}

SyntheticData generate_synthetic(const SynthConfig& config) {
  if (config.n_clusters < 2) throw UsageError("synthetic data needs at least 2 clusters");
  if (config.items_per_cluster < 1 || config.seq_len < 1) {
    throw UsageError("items_per_cluster and seq_len must be >= 1");
  }
  SyntheticData data;
  const std::size_t window = std::clamp<std::size_t>(config.window, 1, config.items_per_cluster);
  auto item_id = [&](std::size_t cluster, std::size_t pos) {
    return "item" + std::to_string(cluster * config.items_per_cluster + pos);
  };
  for (std::size_t c = 0; c < config.n_clusters; ++c) {
    for (std::size_t p = 0; p < config.items_per_cluster; ++p) {
      data.item_clusters.emplace_back(item_id(c, p), c);
    }
  }

  std::mt19937_64 rng(config.seed);
  std::uniform_int_distribution<std::size_t> pick_cluster(0, config.n_clusters - 1);
  std::uniform_int_distribution<std::size_t> pick_secondary(0, config.n_clusters - 2);
  std::uniform_int_distribution<std::size_t> pick_start(0, config.items_per_cluster - 1);
  std::uniform_int_distribution<std::size_t> pick_offset(0, window - 1);
  std::bernoulli_distribution use_primary(config.primary_share);

  data.interactions.reserve(config.n_users * config.seq_len);
  for (std::size_t u = 0; u < config.n_users; ++u) {
    const std::size_t primary = pick_cluster(rng);
    std::size_t secondary = pick_secondary(rng);
    if (secondary >= primary) ++secondary;
    const std::size_t start[2] = {pick_start(rng), pick_start(rng)};
    data.user_clusters.emplace_back(primary, secondary);
    const std::string user = "user" + std::to_string(u);
    for (std::size_t t = 0; t < config.seq_len; ++t) {
      const int which = use_primary(rng) ? 0 : 1;
      const std::size_t cluster = which == 0 ? primary : secondary;
      const std::size_t pos = (start[which] + pick_offset(rng)) % config.items_per_cluster;
      data.interactions.push_back({user, item_id(cluster, pos), static_cast<std::int64_t>(t)});
    }
  }
  return data;
}

void write_cluster_labels(const std::filesystem::path& path, const SyntheticData& data) {
  auto out = open_output(path);
  for (const auto& [item, cluster] : data.item_clusters) out << item << '\t' << cluster << '\n';
  if (!out) throw DataError("failed writing " + path.string());
}

Dataset prepare_dataset(std::span<const Interaction> data, const PrepareConfig& config) {
  auto filtered = filter_min_counts(data, config.min_item, config.min_user);
  auto set = build_sequences(filtered.interactions, filtered.vocab);
  auto split = chronological_split(set.sequences, config.train_frac);
  Dataset ds;
  ds.vocab = std::move(filtered.vocab);
  ds.user_ids = std::move(set.user_ids);
  ds.sequences = std::move(split.sequences);
  return ds;
}

void attach_profiles(Dataset& dataset, const std::filesystem::path& path) {
  auto in = open_input(path);
  std::unordered_map<std::string, UserIndex> users;
  for (UserIndex u = 0; u < dataset.user_ids.size(); ++u) users.emplace(dataset.user_ids[u], u);
  std::unordered_map<std::string, std::uint32_t> features;
  for (std::uint32_t f = 0; f < dataset.profile_features.size(); ++f) {
    features.emplace(dataset.profile_features[f], f);
  }
  dataset.profiles.resize(dataset.user_ids.size());
  std::string raw;
  std::size_t line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    const auto line = strip_cr(raw);
    if (line.empty()) continue;
    const auto fields = split_fields(line, '\t');
    if (fields.size() < 2 || fields[1].empty()) parse_error(path, line_no, "expected user_id\\tfeature");
    const auto u = users.find(std::string(fields[0]));
    if (u == users.end()) continue;
    auto [f, inserted] = features.try_emplace(
        std::string(fields[1]), static_cast<std::uint32_t>(dataset.profile_features.size()));
    if (inserted) dataset.profile_features.emplace_back(fields[1]);
    dataset.profiles[u->second].push_back(f->second);
  }
}

void save_dataset(const std::filesystem::path& dir, const Dataset& dataset) {
  std::filesystem::create_directories(dir);
  {
    auto out = open_output(dir / "items.tsv");
    for (ItemIndex i = 1; i < dataset.vocab.rows(); ++i) {
      out << i << '\t' << dataset.vocab.id(i) << '\t' << dataset.vocab.frequency(i) << '\n';
    }
  }
  {
    auto out = open_output(dir / "users.tsv");
    for (UserIndex u = 0; u < dataset.user_ids.size(); ++u) {
      out << u << '\t' << dataset.user_ids[u] << '\n';
    }
  }
  {
    auto out = open_output(dir / "sequences.tsv");
    for (const auto& seq : dataset.sequences) {
      out << seq.user_index << '\t' << seq.split_point << '\t';
      for (std::size_t i = 0; i < seq.items.size(); ++i) out << (i ? "," : "") << seq.items[i];
      out << '\n';
    }
  }
  if (dataset.has_profiles()) {
    auto feats = open_output(dir / "profile_features.tsv");
    for (std::size_t f = 0; f < dataset.profile_features.size(); ++f) {
      feats << f << '\t' << dataset.profile_features[f] << '\n';
    }
    auto out = open_output(dir / "profiles.tsv");
    for (UserIndex u = 0; u < dataset.profiles.size(); ++u) {
      if (dataset.profiles[u].empty()) continue;
      out << u << '\t';
      for (std::size_t i = 0; i < dataset.profiles[u].size(); ++i) {
        out << (i ? "," : "") << dataset.profiles[u][i];
      }
      out << '\n';
    }
  }
}

namespace {

template <typename T>
std::vector<T> parse_index_list(std::string_view s, const std::filesystem::path& path,
                                std::size_t line_no) {
  std::vector<T> out;
  if (s.empty()) return out;
  for (auto field : split_fields(s, ',')) {
    T v{};
    if (!parse_integer(field, v)) parse_error(path, line_no, "bad index '" + std::string(field) + "'");
    out.push_back(v);
  }
  return out;
}

template <typename Fn>
void for_each_row(const std::filesystem::path& path, std::size_t min_fields, Fn&& fn) {
  auto in = open_input(path);
  std::string raw;
  std::size_t line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    const auto line = strip_cr(raw);
    if (line.empty()) continue;
    const auto fields = split_fields(line, '\t');
    if (fields.size() < min_fields) parse_error(path, line_no, "too few columns");
    fn(fields, line_no);
  }
}

}  // namespace

Dataset load_dataset(const std::filesystem::path& dir) {
  Dataset ds;
  const auto items_path = dir / "items.tsv";
  for_each_row(items_path, 3, [&](const auto& f, std::size_t line_no) {
    std::size_t index = 0;
    std::uint64_t freq = 0;
    if (!parse_integer(f[0], index) || !parse_integer(f[2], freq)) {
      parse_error(items_path, line_no, "bad item row");
    }
    const auto got = ds.vocab.add(std::string(f[1]));
    if (got != index) parse_error(items_path, line_no, "item indices must be dense from 1");
    ds.vocab.set_frequency(got, freq);
  });
  const auto users_path = dir / "users.tsv";
  for_each_row(users_path, 2, [&](const auto& f, std::size_t line_no) {
    std::size_t index = 0;
    if (!parse_integer(f[0], index) || index != ds.user_ids.size()) {
      parse_error(users_path, line_no, "user indices must be dense from 0");
    }
    ds.user_ids.emplace_back(f[1]);
  });
  const auto seq_path = dir / "sequences.tsv";
  for_each_row(seq_path, 3, [&](const auto& f, std::size_t line_no) {
    UserSequence seq;
    if (!parse_integer(f[0], seq.user_index) || !parse_integer(f[1], seq.split_point)) {
      parse_error(seq_path, line_no, "bad sequence header");
    }
    seq.items = parse_index_list<ItemIndex>(f[2], seq_path, line_no);
    if (seq.user_index >= ds.user_ids.size() || seq.split_point > seq.items.size()) {
      parse_error(seq_path, line_no, "sequence out of range");
    }
    for (ItemIndex i : seq.items) {
      if (i == kPaddingItem || i >= ds.vocab.rows()) parse_error(seq_path, line_no, "unknown item index");
    }
    ds.sequences.push_back(std::move(seq));
  });
  if (ds.sequences.empty()) throw DataError("dataset has no sequences: " + dir.string());
  if (std::filesystem::exists(dir / "profile_features.tsv")) {
    for_each_row(dir / "profile_features.tsv", 2,
                 [&](const auto& f, std::size_t) { ds.profile_features.emplace_back(f[1]); });
    ds.profiles.resize(ds.user_ids.size());
    const auto prof_path = dir / "profiles.tsv";
    for_each_row(prof_path, 2, [&](const auto& f, std::size_t line_no) {
      UserIndex u = 0;
      if (!parse_integer(f[0], u) || u >= ds.user_ids.size()) parse_error(prof_path, line_no, "bad user");
      ds.profiles[u] = parse_index_list<std::uint32_t>(f[1], prof_path, line_no);
      for (auto p : ds.profiles[u]) {
        if (p >= ds.profile_features.size()) parse_error(prof_path, line_no, "unknown profile feature");
      }
    });
  }
  return ds;
}

std::vector<std::uint64_t> train_frequencies(const Dataset& dataset) {
  std::vector<std::uint64_t> freq(dataset.vocab.rows(), 0);
  for (const auto& seq : dataset.sequences) {
    for (ItemIndex i : seq.train()) ++freq[i];
  }
  return freq;
}

}  // namespace drim
