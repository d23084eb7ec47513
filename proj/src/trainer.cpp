/*
 * Copyright 2026 The DRIM Authors.
 *
 * This source code is licensed under the Apache License, Version 2.0 license
 * found in the LICENSE file in the root directory of this source tree.
 */

#include "drim/trainer.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include "drim/error.hpp"
#include "drim/parallel.hpp"

namespace drim {

namespace {

std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

template <typename T>
T parse_number(const std::string& key, const std::string& value) {
  T out{};
  const auto* end = value.data() + value.size();
  auto [ptr, ec] = std::from_chars(value.data(), end, out);
  if (ec != std::errc() || ptr != end) {
    throw UsageError("config '" + key + "': cannot parse '" + value + "'");
  }
  return out;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

const char* kSlotNames[] = {"item_embeddings", "profile_embeddings", "bilinear", "fusion_w1",
                            "fusion_b1",       "fusion_w2",          "fusion_b2"};

}  // namespace

void TrainConfig::validate() const {
  if (dim < 1 || max_len < 1 || negatives < 1 || batch_size < 1 || threads < 1) {
    throw UsageError("dim, max_len, neg, batch and threads must be >= 1");
  }
  if (routing.num_interests < 1 || routing.iterations < 1) {
    throw UsageError("k and routing_iters must be >= 1");
  }
  if (!(adam.lr > 0.0)) throw UsageError("lr must be > 0");
  if (!(separator.lambda >= 0.0)) throw UsageError("lambda must be >= 0");
  if (separator.kind == Separator::diverse && separator.lambda > 0.0 &&
      routing.num_interests < 2) {
    throw UsageError("the div separator needs k >= 2");
  }
}

std::map<std::string, std::string> TrainConfig::to_map() const {
  return {
      {"dim", std::to_string(dim)},
      {"k", std::to_string(routing.num_interests)},
      {"max_len", std::to_string(max_len)},
      {"neg", std::to_string(negatives)},
      {"batch", std::to_string(batch_size)},
      {"epochs", std::to_string(epochs)},
      {"threads", std::to_string(threads)},
      {"seed", std::to_string(seed)},
      {"routing_iters", std::to_string(routing.iterations)},
      {"routing_init", routing.init == LogitInit::zeros ? "zeros" : "gaussian"},
      {"routing_sigma", format_double(routing.init_sigma)},
      {"separator", std::string(to_string(separator.kind))},
      {"lambda", format_double(separator.lambda)},
      {"div_sign", separator.div_sign == DiverseSign::paper ? "paper" : "corrected"},
      {"lr", format_double(adam.lr)},
      {"beta1", format_double(adam.beta1)},
      {"beta2", format_double(adam.beta2)},
      {"adam_eps", format_double(adam.eps)},
      {"neg_dist", negative_dist == NegativeDistribution::uniform ? "uniform" : "pop"},
  };
}

void TrainConfig::apply(const std::map<std::string, std::string>& values) {
  for (const auto& [key, value] : values) {
    if (key == "dim") {
      dim = parse_number<std::size_t>(key, value);
    } else if (key == "k") {
      routing.num_interests = parse_number<std::size_t>(key, value);
    } else if (key == "max_len") {
      max_len = parse_number<std::size_t>(key, value);
    } else if (key == "neg") {
      negatives = parse_number<std::size_t>(key, value);
    } else if (key == "batch") {
      batch_size = parse_number<std::size_t>(key, value);
    } else if (key == "epochs") {
      epochs = parse_number<std::size_t>(key, value);
    } else if (key == "threads") {
      threads = parse_number<std::size_t>(key, value);
    } else if (key == "seed") {
      seed = parse_number<std::uint64_t>(key, value);
    } else if (key == "routing_iters") {
      routing.iterations = parse_number<std::size_t>(key, value);
    } else if (key == "routing_init") {
      if (value == "zeros") {
        routing.init = LogitInit::zeros;
      } else if (value == "gaussian") {
        routing.init = LogitInit::gaussian;
      } else {
        throw UsageError("routing_init must be zeros or gaussian");
      }
    } else if (key == "routing_sigma") {
      routing.init_sigma = parse_number<double>(key, value);
    } else if (key == "separator") {
      const auto s = parse_separator(value);
      if (!s) throw UsageError("separator must be one of none|entropy|mean|div");
      separator.kind = *s;
    } else if (key == "lambda") {
      separator.lambda = parse_number<double>(key, value);
    } else if (key == "div_sign") {
      if (value == "paper") {
        separator.div_sign = DiverseSign::paper;
      } else if (value == "corrected") {
        separator.div_sign = DiverseSign::corrected;
      } else {
        throw UsageError("div_sign must be paper or corrected");
      }
    } else if (key == "lr") {
      adam.lr = parse_number<double>(key, value);
    } else if (key == "beta1") {
      adam.beta1 = parse_number<double>(key, value);
    } else if (key == "beta2") {
      adam.beta2 = parse_number<double>(key, value);
    } else if (key == "adam_eps") {
      adam.eps = parse_number<double>(key, value);
    } else if (key == "neg_dist") {
      if (value == "uniform") {
        negative_dist = NegativeDistribution::uniform;
      } else if (value == "pop") {
        negative_dist = NegativeDistribution::popularity_pow;
      } else {
        throw UsageError("neg_dist must be uniform or pop");
      }
    } else {
      throw UsageError("unknown config key '" + key + "'");
    }
  }
}

std::map<std::string, std::string> read_config_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open config " + path.string());
  std::map<std::string, std::string> values;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw UsageError(path.string() + ":" + std::to_string(line_no) + ": expected key=value");
    }
    values[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
  }
  return values;
}

SampledSoftmax sampled_softmax_loss(std::span<const double> user_vector,
                                    std::span<const double> target,
                                    const std::vector<std::span<const double>>& negatives) {
  const std::size_t d = user_vector.size();
  Vector logits(negatives.size() + 1);
  logits[0] = dot(user_vector, target);
  for (std::size_t m = 0; m < negatives.size(); ++m) logits[m + 1] = dot(user_vector, negatives[m]);
  const double mx = *std::max_element(logits.begin(), logits.end());
  double total = 0.0;
  for (double l : logits) total += std::exp(l - mx);
  SampledSoftmax out;
  out.loss = mx + std::log(total) - logits[0];
  const Vector p = softmax(logits);

  // d loss / d logit_m = p_m - [m == 0]
  out.d_user.assign(d, 0.0);
  out.d_target.assign(d, 0.0);
  const double g0 = p[0] - 1.0;
  axpy(g0, target, out.d_user);
  axpy(g0, user_vector, out.d_target);
  out.d_negatives.reserve(negatives.size());
  for (std::size_t m = 0; m < negatives.size(); ++m) {
    axpy(p[m + 1], negatives[m], out.d_user);
    Vector dn(d, 0.0);
    axpy(p[m + 1], user_vector, dn);
    out.d_negatives.push_back(std::move(dn));
  }
  return out;
}

JointLoss joint_loss(const TrainSample& sample, std::span<const ItemIndex> negatives,
                     const ModelParams& params, const TrainConfig& config, ModelGrads* grads,
                     double grad_scale, const JointLossOptions& options) {
  const Matrix& items = params.item_embeddings.value;
  if (sample.target == kPaddingItem || sample.target >= items.rows()) {
    throw DataError("sample target outside the catalog");
  }
  for (ItemIndex n : negatives) {
    if (n == sample.target) throw UsageError("negatives must exclude the target");
    if (n == kPaddingItem || n >= items.rows()) throw DataError("negative outside the catalog");
  }

  const UserForward fwd =
      user_forward(sample.history, sample.profile, params, config.routing,
                   routing_seed(config.seed, sample.user_index), options.fixed_coupling);
  const Matrix& user_vectors = fwd.fused.output;
  const auto target = items.row(sample.target);

  JointLoss out;
  out.selected = options.fixed_selection.value_or(select_interest(user_vectors, target));
  out.coupling = fwd.capsules.coupling;
  out.user_vectors = user_vectors;

  std::vector<std::span<const double>> negative_rows;
  negative_rows.reserve(negatives.size());
  for (ItemIndex n : negatives) negative_rows.push_back(items.row(n));
  const SampledSoftmax ss =
      sampled_softmax_loss(user_vectors.row(out.selected), target, negative_rows);
  out.softmax = ss.loss;

  const double lambda = config.separator.lambda;
  LossAndGrad sep;
  if (lambda > 0.0 && config.separator.kind != Separator::none) {
    sep = separator_loss(user_vectors, config.separator);
    out.separator = sep.loss;
    out.separator_evaluated = true;
  }
  out.total = out.softmax + (out.separator_evaluated ? lambda * out.separator : 0.0);

  if (grads == nullptr) return out;

  Matrix d_user(user_vectors.rows(), user_vectors.cols());
  axpy(grad_scale, ss.d_user, d_user.row(out.selected));
  if (out.separator_evaluated) axpy(grad_scale * lambda, sep.grad.values(), d_user.values());
  axpy(grad_scale, ss.d_target, grads->item_embeddings.row(sample.target));
  for (std::size_t m = 0; m < negatives.size(); ++m) {
    axpy(grad_scale, ss.d_negatives[m], grads->item_embeddings.row(negatives[m]));
  }

  const Matrix d_interests = fuse_backward(fwd.capsules.interests, sample.profile, params,
                                           fwd.fused, d_user, *grads);
  Matrix d_history(fwd.embedded.rows.rows(), fwd.embedded.rows.cols());
  route_backward(fwd.embedded.rows, fwd.embedded.mask, params.bilinear.value, fwd.capsules,
                 d_interests, grads->bilinear, d_history);
  for (std::size_t i = 0; i < sample.history.size(); ++i) {
    if (fwd.embedded.mask[i]) continue;
    axpy(1.0, d_history.row(i), grads->item_embeddings.row(sample.history[i]));
  }
  return out;
}

GradCheckReport check_joint_gradient(const TrainSample& sample,
                                     std::span<const ItemIndex> negatives, ModelParams& params,
                                     const TrainConfig& config, const GradCheckOptions& options) {
  ModelGrads grads = ModelGrads::zeros_like(params);
  const JointLoss base = joint_loss(sample, negatives, params, config, &grads);
  grads.store_into(params);
  JointLossOptions frozen;
  frozen.fixed_coupling = &base.coupling;
  frozen.fixed_selection = base.selected;
  auto slots = params.trainable();
  return check_gradient(
      [&] { return joint_loss(sample, negatives, params, config, nullptr, 1.0, frozen).total; },
      slots, options);
}

std::vector<GradSuiteCase> joint_gradient_suite(std::uint64_t seed, double rel_tol) {
  constexpr std::size_t kItems = 8;
  constexpr std::size_t kFeatures = 3;
  std::vector<GradSuiteCase> cases;
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<ItemIndex> pick(1, kItems);
  for (bool with_profile : {false, true}) {
    for (Separator kind :
         {Separator::none, Separator::entropy, Separator::mean_square, Separator::diverse}) {
      for (double lambda : {0.0, 0.5}) {
        TrainConfig config;
        config.dim = 4;
        config.routing.num_interests = 2;
        config.negatives = 2;
        config.seed = rng();
        config.separator = {kind, lambda, DiverseSign::corrected};
        ModelParams params = init_params(kItems + 1, with_profile ? kFeatures : 0, 4, rng());
        TrainSample sample;
        sample.user_index = 3;
        sample.history = {pick(rng), pick(rng), pick(rng)};
        sample.target = pick(rng);
        if (with_profile) sample.profile = {0, 2};
        std::vector<ItemIndex> negatives;
        while (negatives.size() < 2) {
          const ItemIndex n = pick(rng);
          if (n != sample.target) negatives.push_back(n);
        }
        GradCheckOptions options;
        options.rel_tol = rel_tol;
        std::string label = std::string(to_string(kind)) + " lambda=" + format_double(lambda) +
                            (with_profile ? " profile" : " no-profile");
        cases.push_back({std::move(label),
                         check_joint_gradient(sample, negatives, params, config, options)});
      }
    }
  }
  return cases;
}

Checkpoint to_checkpoint(const Model& model) {
  Checkpoint ckpt;
  const ModelParams& p = model.params;
  ckpt.dim = static_cast<std::uint32_t>(p.dim());
  ckpt.num_interests = static_cast<std::uint32_t>(model.config.routing.num_interests);
  ckpt.item_rows = p.item_embeddings.value.rows();
  ckpt.profile_rows = p.profile_embeddings.value.rows();
  ckpt.config = model.config.to_map();
  for (const ParamSlot* slot : {&p.item_embeddings, &p.profile_embeddings, &p.bilinear,
                                &p.fusion_w1, &p.fusion_b1, &p.fusion_w2, &p.fusion_b2}) {
    ckpt.matrices.emplace_back(slot->name, slot->value);
  }
  return ckpt;
}

Model from_checkpoint(const Checkpoint& ckpt) {
  Model model;
  model.config.apply(ckpt.config);
  if (model.config.dim != ckpt.dim || model.config.routing.num_interests != ckpt.num_interests) {
    throw DataError("checkpoint header disagrees with its stored config");
  }
  for (const char* name : kSlotNames) {
    if (!ckpt.has_matrix(name)) throw DataError(std::string("checkpoint missing matrix ") + name);
  }
  ModelParams& p = model.params;
  p.item_embeddings = ParamSlot("item_embeddings", ckpt.matrix("item_embeddings"));
  p.profile_embeddings = ParamSlot("profile_embeddings", ckpt.matrix("profile_embeddings"));
  p.bilinear = ParamSlot("bilinear", ckpt.matrix("bilinear"));
  p.fusion_w1 = ParamSlot("fusion_w1", ckpt.matrix("fusion_w1"));
  p.fusion_b1 = ParamSlot("fusion_b1", ckpt.matrix("fusion_b1"));
  p.fusion_w2 = ParamSlot("fusion_w2", ckpt.matrix("fusion_w2"));
  p.fusion_b2 = ParamSlot("fusion_b2", ckpt.matrix("fusion_b2"));
  const std::size_t d = ckpt.dim;
  const bool shapes_ok =
      p.item_embeddings.value.rows() == ckpt.item_rows && p.item_embeddings.value.cols() == d &&
      p.bilinear.value.rows() == d && p.bilinear.value.cols() == d &&
      p.profile_embeddings.value.rows() == ckpt.profile_rows &&
      (ckpt.profile_rows == 0 ||
       (p.profile_embeddings.value.cols() == d && p.fusion_w1.value.rows() == 4 * d &&
        p.fusion_w1.value.cols() == 2 * d && p.fusion_b1.value.rows() == 4 * d &&
        p.fusion_w2.value.rows() == d && p.fusion_w2.value.cols() == 4 * d &&
        p.fusion_b2.value.rows() == d));
  if (!shapes_ok) throw DataError("checkpoint matrix shapes disagree with the header");
  return model;
}

Model load_model(const std::filesystem::path& path) { return from_checkpoint(load_checkpoint(path)); }

Model init_model(const Dataset& dataset, const TrainConfig& config) {
  config.validate();
  Model model;
  model.config = config;
  model.params = init_params(dataset.vocab.rows(), dataset.profile_features.size(), config.dim,
                             config.seed);
  return model;
}

TrainReport train(const Dataset& dataset, const TrainConfig& config,
                  const std::filesystem::path& checkpoint, Model* trained,
                  const EpochCallback& on_epoch) {
  Model model = init_model(dataset, config);
  const std::vector<TrainSample> samples =
      make_train_samples(dataset.sequences, config.max_len, dataset.profiles);
  if (samples.empty()) throw DataError("no training samples (every train prefix has length < 2)");
  const auto frequencies = train_frequencies(dataset);
  const NegativeSampler sampler(frequencies, config.negative_dist);

  TrainReport report;
  report.checkpoint = checkpoint;
  auto write = [&] {
    if (!checkpoint.empty()) save_checkpoint(checkpoint, to_checkpoint(model));
  };
  if (config.epochs == 0) write();

  std::mt19937_64 rng(config.seed ^ 0x5DEECE66DULL);
  std::vector<std::size_t> order(samples.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  const std::size_t workers = std::min(config.threads, config.batch_size);
  std::vector<ModelGrads> worker_grads(workers, ModelGrads::zeros_like(model.params));
  std::vector<JointLoss> batch_losses;
  std::vector<std::vector<ItemIndex>> batch_negatives;

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    const auto start = std::chrono::steady_clock::now();
    std::shuffle(order.begin(), order.end(), rng);
    double sum_joint = 0.0;
    double sum_softmax = 0.0;
    double sum_separator = 0.0;
    for (std::size_t begin = 0; begin < order.size(); begin += config.batch_size) {
      const std::size_t end = std::min(begin + config.batch_size, order.size());
      const std::size_t count = end - begin;
      const double scale = 1.0 / static_cast<double>(count);
      batch_negatives.resize(count);
      for (std::size_t b = 0; b < count; ++b) {
        batch_negatives[b] = sampler.sample(samples[order[begin + b]].target, config.negatives, rng);
      }
      batch_losses.assign(count, JointLoss{});

      auto run_range = [&](std::size_t worker, std::size_t lo, std::size_t hi) {
        ModelGrads& g = worker_grads[worker];
        g.zero();
        for (std::size_t b = lo; b < hi; ++b) {
          batch_losses[b] = joint_loss(samples[order[begin + b]], batch_negatives[b],
                                       model.params, config, &g, scale);
        }
      };
      const std::size_t active = std::min(workers, count);
      parallel_chunks(count, active, run_range);
      for (std::size_t w = 1; w < active; ++w) worker_grads[0].add(worker_grads[w]);

      for (std::size_t b = 0; b < count; ++b) {
        const JointLoss& l = batch_losses[b];
        if (!std::isfinite(l.total)) {
          std::ostringstream msg;
          msg << "non-finite loss at epoch " << epoch << ", batch starting at " << begin
              << ", sample " << order[begin + b] << " (softmax=" << l.softmax
              << ", separator=" << l.separator << ")";
          throw NumericError(msg.str());
        }
        sum_joint += l.total;
        sum_softmax += l.softmax;
        sum_separator += l.separator;
      }
      worker_grads[0].store_into(model.params);
      for (ParamSlot* slot : model.params.trainable()) adam_step(*slot, config.adam);
    }
    const double n = static_cast<double>(samples.size());
    EpochStats stats{epoch + 1, sum_joint / n, sum_softmax / n, sum_separator / n,
                     std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count()};
    report.epochs.push_back(stats);
    write();
    if (on_epoch) on_epoch(stats);
  }
  if (trained != nullptr) *trained = std::move(model);
  return report;
}

}  // namespace drim
