/*
 * Copyright 2026 The DRIM Authors.
 *
 * This source code is licensed under the Apache License, Version 2.0 license
 * found in the LICENSE file in the root directory of this source tree.
 */

#include "drim/eval.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numbers>
#include <numeric>
#include <ostream>
#include <unordered_map>
#include <unordered_set>

#include <json.hpp>

#include "drim/error.hpp"
#include "drim/extractor.hpp"
#include "drim/regularizers.hpp"

namespace drim {

namespace {

std::span<const std::uint32_t> profile_of(const Dataset& dataset, UserIndex user) {
  if (!dataset.has_profiles()) return {};
  return dataset.profiles[user];
}

}  // namespace

double hit_rate(std::span<const Recommendation> recs, std::span<const UserSequence> sequences,
                std::size_t n) {
  std::unordered_map<UserIndex, const Recommendation*> by_user;
  for (const auto& r : recs) by_user[r.user] = &r;
  std::size_t evaluated = 0;
  std::size_t hits = 0;
  for (const auto& seq : sequences) {
    const auto test = seq.test();
    if (test.empty()) continue;
    ++evaluated;
    const auto it = by_user.find(seq.user_index);
    if (it == by_user.end()) continue;
    const std::unordered_set<ItemIndex> targets(test.begin(), test.end());
    const auto& items = it->second->items;
    const std::size_t limit = std::min(n, items.size());
    for (std::size_t r = 0; r < limit; ++r) {
      if (targets.contains(items[r].item)) {
        ++hits;
        break;
      }
    }
  }
  if (evaluated == 0) throw DataError("hit rate: no users with a test suffix");
  return static_cast<double>(hits) / static_cast<double>(evaluated);
}

std::vector<Recommendation> most_popular(const Dataset& dataset,
                                         std::span<const UserSequence> users, std::size_t n,
                                         bool exclude_history) {
  const auto freq = train_frequencies(dataset);
  std::vector<ItemIndex> ranked(dataset.vocab.size());
  std::iota(ranked.begin(), ranked.end(), ItemIndex{1});
  std::stable_sort(ranked.begin(), ranked.end(),
                   [&](ItemIndex a, ItemIndex b) { return freq[a] > freq[b]; });
  std::vector<Recommendation> recs;
  recs.reserve(users.size());
  for (const auto& seq : users) {
    Recommendation rec{seq.user_index, {}};
    std::unordered_set<ItemIndex> history;
    if (exclude_history) history.insert(seq.train().begin(), seq.train().end());
    for (ItemIndex item : ranked) {
      if (rec.items.size() == n) break;
      if (history.contains(item)) continue;
      rec.items.push_back({item, static_cast<double>(freq[item]), 0});
    }
    recs.push_back(std::move(rec));
  }
  return recs;
}

PairwiseDiversity pairwise_diversity(const Matrix& interests) {
  const std::size_t k_count = interests.rows();
  if (k_count < 2) throw UsageError("pairwise diversity needs K >= 2");
  PairwiseDiversity out;
  std::vector<double> norms(k_count);
  for (std::size_t k = 0; k < k_count; ++k) {
    norms[k] = norm(interests.row(k));
    if (norms[k] < kDegenerateNorm) out.degenerate = true;
  }
  if (out.degenerate) return out;
  double cos_sum = 0.0;
  double angle_sum = 0.0;
  std::size_t pairs = 0;
  for (std::size_t i = 0; i < k_count; ++i) {
    for (std::size_t j = i + 1; j < k_count; ++j) {
      const double c =
          std::clamp(dot(interests.row(i), interests.row(j)) / (norms[i] * norms[j]), -1.0, 1.0);
      cos_sum += c;
      angle_sum += std::acos(c) * 180.0 / std::numbers::pi;
      ++pairs;
    }
  }
  out.mean_cosine = cos_sum / static_cast<double>(pairs);
  out.mean_angle_degrees = angle_sum / static_cast<double>(pairs);
  return out;
}

DiversityStats diversity_stats(const Model& model, const Dataset& dataset,
                               std::span<const UserSequence> users) {
  DiversityStats stats;
  double cos_sum = 0.0;
  double angle_sum = 0.0;
  for (const auto& seq : users) {
    const Matrix v =
        user_vectors(seq.train(), profile_of(dataset, seq.user_index), model, seq.user_index);
    const PairwiseDiversity p = pairwise_diversity(v);
    if (p.degenerate) {
      ++stats.degenerate;
      continue;
    }
    stats.per_user_cosine.push_back(p.mean_cosine);
    cos_sum += p.mean_cosine;
    angle_sum += p.mean_angle_degrees;
  }
  stats.users = stats.per_user_cosine.size();
  if (stats.users > 0) {
    stats.mean_cosine = cos_sum / static_cast<double>(stats.users);
    stats.mean_angle_degrees = angle_sum / static_cast<double>(stats.users);
  }
  return stats;
}

std::vector<std::size_t> interest_utilization(const Model& model, const Dataset& dataset,
                                              std::span<const UserSequence> users) {
  std::vector<std::size_t> counts(model.config.routing.num_interests, 0);
  const Matrix& items = model.params.item_embeddings.value;
  for (const auto& seq : users) {
    const Matrix v =
        user_vectors(seq.train(), profile_of(dataset, seq.user_index), model, seq.user_index);
    for (ItemIndex target : seq.test()) ++counts[select_interest(v, items.row(target))];
  }
  return counts;
}

void export_embeddings(const Model& model, const Dataset& dataset,
                       std::span<const UserSequence> users, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot open for writing: " + path.string());
  char buf[64];
  for (const auto& seq : users) {
    const Matrix v =
        user_vectors(seq.train(), profile_of(dataset, seq.user_index), model, seq.user_index);
    for (std::size_t k = 0; k < v.rows(); ++k) {
      out << dataset.user_ids.at(seq.user_index) << '\t' << k << '\t';
      for (std::size_t m = 0; m < v.cols(); ++m) {
        auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v(k, m));
        if (m) out << ',';
        out.write(buf, ptr - buf);
      }
      out << '\n';
    }
  }
  if (!out) throw DataError("failed writing " + path.string());
}

EvalReport evaluate(const Model& model, const Dataset& dataset, const EvalOptions& options) {
  if (options.cutoffs.empty()) throw UsageError("at least one cutoff N is required");
  const std::size_t max_n = *std::max_element(options.cutoffs.begin(), options.cutoffs.end());
  const RetrievalIndex index =
      RetrievalIndex::build(model.params.item_embeddings.value, options.backend);
  ServeOptions serve{max_n, options.exclude_history, options.backend, options.threads};
  const auto recs = recommend_all(model, dataset, dataset.sequences, index, serve);
  const auto popular = most_popular(dataset, dataset.sequences, max_n, options.exclude_history);

  EvalReport report;
  report.exclude_history = options.exclude_history;
  for (std::size_t n : options.cutoffs) {
    report.hit_rate[n] = hit_rate(recs, dataset.sequences, n);
    report.most_popular_hit_rate[n] = hit_rate(popular, dataset.sequences, n);
  }
  report.users = std::count_if(dataset.sequences.begin(), dataset.sequences.end(),
                               [](const UserSequence& s) { return !s.test().empty(); });
  if (model.config.routing.num_interests >= 2) {
    const DiversityStats div = diversity_stats(model, dataset, dataset.sequences);
    report.mean_cosine = div.mean_cosine;
    report.mean_angle_degrees = div.mean_angle_degrees;
    report.degenerate_users = div.degenerate;
  } else {
    report.mean_cosine = 1.0;
  }
  report.utilization = interest_utilization(model, dataset, dataset.sequences);
  return report;
}

void write_report_text(std::ostream& out, const EvalReport& report) {
  out << "users: " << report.users << '\n';
  out << "exclude_history: " << (report.exclude_history ? "on" : "off") << '\n';
  for (const auto& [n, hr] : report.hit_rate) out << "HR@" << n << ": " << hr << '\n';
  for (const auto& [n, hr] : report.most_popular_hit_rate) {
    out << "MostPopular HR@" << n << ": " << hr << '\n';
  }
  out << "mean_pairwise_cosine: " << report.mean_cosine << '\n';
  out << "mean_pairwise_angle_deg: " << report.mean_angle_degrees << '\n';
  out << "degenerate_users: " << report.degenerate_users << '\n';
  out << "interest_utilization:";
  for (std::size_t c : report.utilization) out << ' ' << c;
  out << '\n';
}

void write_report_jsonl(std::ostream& out, const EvalReport& report) {
  for (const auto& [n, hr] : report.hit_rate) {
    out << nlohmann::json{{"metric", "hit_rate"}, {"model", "drim"}, {"n", n}, {"value", hr}}.dump()
        << '\n';
  }
  for (const auto& [n, hr] : report.most_popular_hit_rate) {
    out << nlohmann::json{{"metric", "hit_rate"}, {"model", "most_popular"}, {"n", n}, {"value", hr}}
               .dump()
        << '\n';
  }
  out << nlohmann::json{{"metric", "diversity"},
                        {"users", report.users},
                        {"mean_pairwise_cosine", report.mean_cosine},
                        {"mean_pairwise_angle_deg", report.mean_angle_degrees},
                        {"degenerate_users", report.degenerate_users},
                        {"interest_utilization", report.utilization},
                        {"exclude_history", report.exclude_history}}
             .dump()
      << '\n';
}

}  // namespace drim
