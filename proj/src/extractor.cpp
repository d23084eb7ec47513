/*
 * Copyright 2026 The DRIM Authors.
 *
 * This source code is licensed under the Apache License, Version 2.0 license
 * found in the LICENSE file in the root directory of this source tree.
 */

#include "drim/extractor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include "drim/error.hpp"

namespace drim {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

// Counter-based generator so keyed streams are cheap to create.
struct SplitMixEngine {
  using result_type = std::uint64_t;
  std::uint64_t state;
  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }
  result_type operator()() {
    state += 0x9E3779B97F4A7C15ULL;
    return splitmix64(state);
  }
};

Matrix gaussian(std::size_t rows, std::size_t cols, double sigma, std::mt19937_64& rng) {
  Matrix m(rows, cols);
  std::normal_distribution<double> dist(0.0, sigma);
  for (double& v : m.values()) v = dist(rng);
  return m;
}

Matrix zeros_like(const Matrix& m) { return Matrix(m.rows(), m.cols()); }

void add_into(Matrix& dst, const Matrix& src) {
  auto d = dst.values();
  auto s = src.values();
  for (std::size_t i = 0; i < d.size(); ++i) d[i] += s[i];
}

// Row i of the result is S h_i.
Matrix project_history(const Matrix& history, const Matrix& bilinear) {
  Matrix projected(history.rows(), bilinear.rows());
  for (std::size_t i = 0; i < history.rows(); ++i) {
    matvec(bilinear, history.row(i), projected.row(i));
  }
  return projected;
}

void interests_from_coupling(const Matrix& projected, std::span<const std::uint8_t> mask,
                             const Matrix& coupling, InterestCapsules& caps) {
  const std::size_t k_count = coupling.cols();
  const std::size_t d = projected.cols();
  caps.candidates = Matrix(k_count, d);
  caps.interests = Matrix(k_count, d);
  for (std::size_t i = 0; i < projected.rows(); ++i) {
    if (mask[i]) continue;
    for (std::size_t j = 0; j < k_count; ++j) {
      axpy(coupling(i, j), projected.row(i), caps.candidates.row(j));
    }
  }
  for (std::size_t j = 0; j < k_count; ++j) {
    const Vector v = squash(caps.candidates.row(j));
    std::copy(v.begin(), v.end(), caps.interests.row(j).begin());
  }
}

void check_mask(std::span<const std::uint8_t> mask, std::size_t rows) {
  if (mask.size() != rows) throw DataError("routing mask length does not match history");
  if (std::all_of(mask.begin(), mask.end(), [](std::uint8_t m) { return m != 0; })) {
    throw DataError("routing needs at least one unmasked history row");
  }
}

}  // namespace

std::vector<ParamSlot*> ModelParams::trainable() {
  std::vector<ParamSlot*> out{&item_embeddings, &bilinear};
  if (has_profile()) {
    out.insert(out.end(), {&profile_embeddings, &fusion_w1, &fusion_b1, &fusion_w2, &fusion_b2});
  }
  return out;
}

std::vector<const ParamSlot*> ModelParams::trainable() const {
  std::vector<const ParamSlot*> out{&item_embeddings, &bilinear};
  if (has_profile()) {
    out.insert(out.end(), {&profile_embeddings, &fusion_w1, &fusion_b1, &fusion_w2, &fusion_b2});
  }
  return out;
}

ModelGrads ModelGrads::zeros_like(const ModelParams& params) {
  return {drim::zeros_like(params.item_embeddings.value),
          drim::zeros_like(params.profile_embeddings.value),
          drim::zeros_like(params.bilinear.value),
          drim::zeros_like(params.fusion_w1.value),
          drim::zeros_like(params.fusion_b1.value),
          drim::zeros_like(params.fusion_w2.value),
          drim::zeros_like(params.fusion_b2.value)};
}

void ModelGrads::zero() {
  for (Matrix* m : {&item_embeddings, &profile_embeddings, &bilinear, &fusion_w1, &fusion_b1,
                    &fusion_w2, &fusion_b2}) {
    m->fill(0.0);
  }
}

void ModelGrads::add(const ModelGrads& other) {
  add_into(item_embeddings, other.item_embeddings);
  add_into(profile_embeddings, other.profile_embeddings);
  add_into(bilinear, other.bilinear);
  add_into(fusion_w1, other.fusion_w1);
  add_into(fusion_b1, other.fusion_b1);
  add_into(fusion_w2, other.fusion_w2);
  add_into(fusion_b2, other.fusion_b2);
}

void ModelGrads::scale(double factor) {
  for (Matrix* m : {&item_embeddings, &profile_embeddings, &bilinear, &fusion_w1, &fusion_b1,
                    &fusion_w2, &fusion_b2}) {
    for (double& v : m->values()) v *= factor;
  }
}

void ModelGrads::store_into(ModelParams& params) const {
  params.item_embeddings.grad = item_embeddings;
  if (params.item_embeddings.grad.rows() > 0) {
    auto pad = params.item_embeddings.grad.row(kPaddingItem);
    std::fill(pad.begin(), pad.end(), 0.0);
  }
  params.profile_embeddings.grad = profile_embeddings;
  params.bilinear.grad = bilinear;
  params.fusion_w1.grad = fusion_w1;
  params.fusion_b1.grad = fusion_b1;
  params.fusion_w2.grad = fusion_w2;
  params.fusion_b2.grad = fusion_b2;
}

ModelParams init_params(std::size_t item_rows, std::size_t profile_rows, std::size_t dim,
                        std::uint64_t seed) {
  if (dim < 1 || item_rows < 2) throw UsageError("model needs dim >= 1 and at least one item");
  std::mt19937_64 rng(seed);
  const double sigma = 1.0 / std::sqrt(static_cast<double>(dim));
  ModelParams p;
  Matrix items = gaussian(item_rows, dim, sigma, rng);
  std::fill(items.row(kPaddingItem).begin(), items.row(kPaddingItem).end(), 0.0);
  p.item_embeddings = ParamSlot("item_embeddings", std::move(items));
  p.bilinear = ParamSlot("bilinear", gaussian(dim, dim, sigma, rng));
  if (profile_rows > 0) {
    const std::size_t hidden = 4 * dim;
    p.profile_embeddings = ParamSlot("profile_embeddings", gaussian(profile_rows, dim, sigma, rng));
    p.fusion_w1 = ParamSlot("fusion_w1",
                            gaussian(hidden, 2 * dim, std::sqrt(2.0 / (2.0 * dim)), rng));
    p.fusion_b1 = ParamSlot("fusion_b1", Matrix(hidden, 1));
    p.fusion_w2 = ParamSlot("fusion_w2", gaussian(dim, hidden, std::sqrt(1.0 / hidden), rng));
    p.fusion_b2 = ParamSlot("fusion_b2", Matrix(dim, 1));
  } else {
    p.profile_embeddings = ParamSlot("profile_embeddings", Matrix());
    p.fusion_w1 = ParamSlot("fusion_w1", Matrix());
    p.fusion_b1 = ParamSlot("fusion_b1", Matrix());
    p.fusion_w2 = ParamSlot("fusion_w2", Matrix());
    p.fusion_b2 = ParamSlot("fusion_b2", Matrix());
  }
  return p;
}

EmbeddedHistory embed_history(std::span<const ItemIndex> history, const Matrix& item_table) {
  EmbeddedHistory out{Matrix(history.size(), item_table.cols()),
                      std::vector<std::uint8_t>(history.size(), 0)};
  for (std::size_t i = 0; i < history.size(); ++i) {
    const ItemIndex item = history[i];
    if (item >= item_table.rows()) {
      throw DataError("item index " + std::to_string(item) + " outside embedding table of " +
                      std::to_string(item_table.rows()) + " rows");
    }
    if (item == kPaddingItem) {
      out.mask[i] = 1;
      continue;
    }
    std::copy_n(item_table.row(item).begin(), item_table.cols(), out.rows.row(i).begin());
  }
  return out;
}

std::uint64_t routing_seed(std::uint64_t base_seed, UserIndex user) {
  return splitmix64(base_seed ^ splitmix64(static_cast<std::uint64_t>(user) + 1));
}

Matrix initial_logits(std::span<const std::uint64_t> row_keys, const RoutingConfig& config,
                      std::uint64_t seed) {
  Matrix logits(row_keys.size(), config.num_interests);
  if (config.init == LogitInit::zeros) return logits;
  std::normal_distribution<double> dist(0.0, config.init_sigma);
  for (std::size_t i = 0; i < row_keys.size(); ++i) {
    SplitMixEngine engine{splitmix64(seed ^ splitmix64(row_keys[i]))};
    dist.reset();
    for (std::size_t j = 0; j < config.num_interests; ++j) logits(i, j) = dist(engine);
  }
  return logits;
}

InterestCapsules route_from_logits(const Matrix& history, std::span<const std::uint8_t> mask,
                                   const Matrix& bilinear, Matrix logits,
                                   std::size_t iterations) {
  check_mask(mask, history.rows());
  if (iterations < 1) throw UsageError("routing needs at least one iteration");
  if (logits.rows() != history.rows() || logits.cols() < 1) {
    throw UsageError("routing logits must be n x K with K >= 1");
  }
  const std::size_t n = history.rows();
  const std::size_t k_count = logits.cols();
  const Matrix projected = project_history(history, bilinear);
  InterestCapsules caps;
  caps.coupling = Matrix(n, k_count);
  for (std::size_t it = 0; it < iterations; ++it) {
    for (std::size_t i = 0; i < n; ++i) {
      if (mask[i]) continue;
      const Vector b = softmax(logits.row(i));
      std::copy(b.begin(), b.end(), caps.coupling.row(i).begin());
    }
    interests_from_coupling(projected, mask, caps.coupling, caps);
    if (it + 1 == iterations) break;
    for (std::size_t i = 0; i < n; ++i) {
      if (mask[i]) continue;
      for (std::size_t j = 0; j < k_count; ++j) {
        logits(i, j) = dot(caps.interests.row(j), projected.row(i));
      }
    }
  }
  caps.logits = std::move(logits);
  return caps;
}

InterestCapsules dynamic_route(const Matrix& history, std::span<const std::uint8_t> mask,
                               const Matrix& bilinear, const RoutingConfig& config,
                               std::uint64_t seed, std::span<const std::uint64_t> row_keys) {
  if (config.num_interests < 1) throw UsageError("K must be >= 1");
  return route_from_logits(history, mask, bilinear, initial_logits(row_keys, config, seed),
                           config.iterations);
}

InterestCapsules route_with_fixed_coupling(const Matrix& history,
                                           std::span<const std::uint8_t> mask,
                                           const Matrix& bilinear, const Matrix& coupling) {
  check_mask(mask, history.rows());
  InterestCapsules caps;
  caps.coupling = coupling;
  caps.logits = Matrix(coupling.rows(), coupling.cols());
  interests_from_coupling(project_history(history, bilinear), mask, coupling, caps);
  return caps;
}

void route_backward(const Matrix& history, std::span<const std::uint8_t> mask,
                    const Matrix& bilinear, const InterestCapsules& caps,
                    const Matrix& d_interests, Matrix& d_bilinear, Matrix& d_history) {
  const std::size_t k_count = caps.interests.rows();
  const std::size_t d = bilinear.rows();
  Matrix d_candidates(k_count, d);
  for (std::size_t j = 0; j < k_count; ++j) {
    const Vector g = squash_backward(caps.candidates.row(j), d_interests.row(j));
    std::copy(g.begin(), g.end(), d_candidates.row(j).begin());
  }
  Vector d_projected(d);
  for (std::size_t i = 0; i < history.rows(); ++i) {
    if (mask[i]) continue;
    std::fill(d_projected.begin(), d_projected.end(), 0.0);
    for (std::size_t j = 0; j < k_count; ++j) {
      axpy(caps.coupling(i, j), d_candidates.row(j), d_projected);
    }
    rank1_add(d_bilinear, 1.0, d_projected, history.row(i));
    matvec_transposed_add(bilinear, d_projected, d_history.row(i));
  }
}

FusionResult fuse_profile(const Matrix& interests, std::span<const std::uint32_t> profile,
                          const ModelParams& params) {
  FusionResult out;
  if (!params.has_profile()) {
    out.output = interests;
    return out;
  }
  const std::size_t d = params.dim();
  const Matrix& table = params.profile_embeddings.value;
  out.profile.assign(d, 0.0);
  for (std::uint32_t f : profile) {
    if (f >= table.rows()) {
      throw DataError("profile feature " + std::to_string(f) + " outside table of " +
                      std::to_string(table.rows()) + " rows");
    }
    axpy(1.0, table.row(f), out.profile);
  }
  const Matrix& w1 = params.fusion_w1.value;
  const Matrix& w2 = params.fusion_w2.value;
  const std::size_t hidden = w1.rows();
  out.hidden_pre = Matrix(interests.rows(), hidden);
  out.output = Matrix(interests.rows(), d);
  Vector x(2 * d);
  Vector h(hidden);
  for (std::size_t k = 0; k < interests.rows(); ++k) {
    std::copy_n(interests.row(k).begin(), d, x.begin());
    std::copy(out.profile.begin(), out.profile.end(), x.begin() + static_cast<std::ptrdiff_t>(d));
    auto pre = out.hidden_pre.row(k);
    matvec(w1, x, pre);
    for (std::size_t m = 0; m < hidden; ++m) {
      pre[m] += params.fusion_b1.value(m, 0);
      h[m] = std::max(pre[m], 0.0);
    }
    auto y = out.output.row(k);
    matvec(w2, h, y);
    for (std::size_t m = 0; m < d; ++m) y[m] += params.fusion_b2.value(m, 0);
  }
  return out;
}

Matrix fuse_backward(const Matrix& interests, std::span<const std::uint32_t> profile,
                     const ModelParams& params, const FusionResult& fwd,
                     const Matrix& d_output, ModelGrads& grads) {
  if (!params.has_profile()) return d_output;
  const std::size_t d = params.dim();
  const Matrix& w1 = params.fusion_w1.value;
  const Matrix& w2 = params.fusion_w2.value;
  const std::size_t hidden = w1.rows();
  Matrix d_interests(interests.rows(), d);
  Vector d_profile(d, 0.0);
  Vector x(2 * d);
  Vector h(hidden);
  Vector d_hidden(hidden);
  Vector d_x(2 * d);
  for (std::size_t k = 0; k < interests.rows(); ++k) {
    auto dy = d_output.row(k);
    auto pre = fwd.hidden_pre.row(k);
    for (std::size_t m = 0; m < hidden; ++m) h[m] = std::max(pre[m], 0.0);
    for (std::size_t m = 0; m < d; ++m) grads.fusion_b2(m, 0) += dy[m];
    rank1_add(grads.fusion_w2, 1.0, dy, h);
    std::fill(d_hidden.begin(), d_hidden.end(), 0.0);
    matvec_transposed_add(w2, dy, d_hidden);
    for (std::size_t m = 0; m < hidden; ++m) {
      if (pre[m] <= 0.0) d_hidden[m] = 0.0;
      grads.fusion_b1(m, 0) += d_hidden[m];
    }
    std::copy_n(interests.row(k).begin(), d, x.begin());
    std::copy(fwd.profile.begin(), fwd.profile.end(), x.begin() + static_cast<std::ptrdiff_t>(d));
    rank1_add(grads.fusion_w1, 1.0, d_hidden, x);
    std::fill(d_x.begin(), d_x.end(), 0.0);
    matvec_transposed_add(w1, d_hidden, d_x);
    std::copy_n(d_x.begin(), d, d_interests.row(k).begin());
    for (std::size_t m = 0; m < d; ++m) d_profile[m] += d_x[d + m];
  }
  for (std::uint32_t f : profile) axpy(1.0, d_profile, grads.profile_embeddings.row(f));
  return d_interests;
}

std::size_t select_interest(const Matrix& interests, std::span<const double> target) {
  std::size_t best = 0;
  double best_score = -std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < interests.rows(); ++j) {
    const double score = dot(interests.row(j), target);
    if (score > best_score) {
      best_score = score;
      best = j;
    }
  }
  return best;
}

UserForward user_forward(std::span<const ItemIndex> history, std::span<const std::uint32_t> profile,
                         const ModelParams& params, const RoutingConfig& config,
                         std::uint64_t seed, const Matrix* fixed_coupling) {
  UserForward fwd;
  fwd.history.assign(history.begin(), history.end());
  fwd.embedded = embed_history(history, params.item_embeddings.value);
  if (fixed_coupling != nullptr) {
    fwd.capsules = route_with_fixed_coupling(fwd.embedded.rows, fwd.embedded.mask,
                                             params.bilinear.value, *fixed_coupling);
  } else {
    std::vector<std::uint64_t> keys(history.begin(), history.end());
    fwd.capsules = dynamic_route(fwd.embedded.rows, fwd.embedded.mask, params.bilinear.value,
                                 config, seed, keys);
  }
  fwd.fused = fuse_profile(fwd.capsules.interests, profile, params);
  return fwd;
}

}  // namespace drim
