/*
 * Copyright 2026 The DRIM Authors.
 *
 * This source code is licensed under the Apache License, Version 2.0 license
 * found in the LICENSE file in the root directory of this source tree.
 */

// drim: data preparation, synthetic generation, training, evaluation,
// retrieval, export and gradient verification in one executable.

#include <cstdio>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "drim/error.hpp"
#include "drim/eval.hpp"
#include "drim/ingest.hpp"
#include "drim/serving.hpp"
#include "drim/trainer.hpp"

namespace {

using namespace drim;

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitNumeric = 3;

bool parse_on_off(const std::string& v) {
  if (v == "on") return true;
  if (v == "off") return false;
  throw UsageError("expected on|off, got '" + v + "'");
}

IndexBackend parse_backend(const std::string& v) {
  if (v == "exact") return IndexBackend::exact;
  if (v == "approx") return IndexBackend::approximate;
  throw UsageError("backend must be exact or approx");
}

std::vector<std::size_t> parse_sizes(const std::string& v) {
  std::vector<std::size_t> out;
  std::stringstream ss(v);
  for (std::string item; std::getline(ss, item, ',');) {
    std::size_t n = 0;
    try {
      std::size_t pos = 0;
      n = std::stoul(item, &pos);
      if (pos != item.size() || n == 0) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw UsageError("--n expects a comma-separated list of positive integers");
    }
    out.push_back(n);
  }
  if (out.empty()) throw UsageError("--n expects at least one size");
  return out;
}

std::vector<double> parse_reals(const std::string& v) {
  std::vector<double> out;
  std::stringstream ss(v);
  for (std::string item; std::getline(ss, item, ',');) {
    try {
      std::size_t pos = 0;
      out.push_back(std::stod(item, &pos));
      if (pos != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw UsageError("expected a comma-separated list of numbers, got '" + v + "'");
    }
  }
  return out;
}

// Training hyperparameters shared by train and sweep. Values only count when
// the flag was given, so config-file values survive.
struct TrainFlags {
  std::string config_file;
  std::map<std::string, std::string> values;
  std::vector<std::pair<CLI::Option*, std::string>> options;

  void add(CLI::App& app) {
    app.add_option("--config", config_file, "Flat key=value config file")->check(CLI::ExistingFile);
    bind(app, "--separator", "separator", "none|entropy|mean|div");
    bind(app, "--lambda", "lambda", "Separator weight (>= 0)");
    bind(app, "--k", "k", "Number of interest capsules");
    bind(app, "--dim", "dim", "Embedding dimension");
    bind(app, "--max-len", "max_len", "History truncation length");
    bind(app, "--epochs", "epochs", "Training epochs");
    bind(app, "--batch", "batch", "Mini-batch size");
    bind(app, "--neg", "neg", "Negatives per sample");
    bind(app, "--seed", "seed", "Seed for every random choice");
    bind(app, "--threads", "threads", "Worker threads (1 = reproducibility reference)");
    bind(app, "--lr", "lr", "Adam learning rate");
    bind(app, "--routing-iters", "routing_iters", "Dynamic routing iterations");
    bind(app, "--routing-init", "routing_init", "zeros|gaussian");
    bind(app, "--routing-sigma", "routing_sigma", "Gaussian routing-logit init sigma");
    bind(app, "--neg-dist", "neg_dist", "uniform|pop");
    bind(app, "--div-sign", "div_sign", "corrected|paper");
  }

  void bind(CLI::App& app, const std::string& flag, const std::string& key,
            const std::string& help) {
    auto* storage = &values[key];
    options.emplace_back(app.add_option(flag, *storage, help), key);
  }

  TrainConfig resolve() const {
    TrainConfig config;
    if (!config_file.empty()) config.apply(read_config_file(config_file));
    std::map<std::string, std::string> given;
    for (const auto& [opt, key] : options) {
      if (opt->count() > 0) given[key] = values.at(key);
    }
    config.apply(given);
    config.validate();
    return config;
  }
};

void print_epoch(const EpochStats& s) {
  std::cout << "epoch " << s.epoch << std::setprecision(17) << " joint " << s.joint << " softmax "
            << s.softmax << " separator " << s.separator << std::setprecision(3) << " time "
            << s.seconds << "s" << std::endl;
}

std::vector<UserSequence> select_users(const Dataset& dataset, const std::string& users_file,
                                       std::size_t limit) {
  std::vector<UserSequence> out;
  if (users_file.empty()) {
    out = dataset.sequences;
  } else {
    std::unordered_map<std::string, const UserSequence*> by_id;
    for (const auto& s : dataset.sequences) by_id[dataset.user_ids[s.user_index]] = &s;
    std::ifstream in(users_file);
    if (!in) throw DataError("cannot open " + users_file);
    for (std::string line; std::getline(in, line);) {
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (line.empty()) continue;
      const auto it = by_id.find(line);
      if (it == by_id.end()) throw DataError("unknown user '" + line + "'");
      out.push_back(*it->second);
    }
  }
  if (limit > 0 && out.size() > limit) out.resize(limit);
  return out;
}

int run(int argc, char** argv) {
  CLI::App app{"Diversity-regularized multi-interest candidate retrieval"};
  app.require_subcommand(1, 1);

  // prepare
  auto* prepare = app.add_subcommand("prepare", "Filter, sequence and split an interaction log");
  std::string prep_data, prep_out, prep_format = "tsv", prep_profile;
  PrepareConfig prep_cfg;
  prepare->add_option("--data", prep_data, "Raw user/item/timestamp file")->required();
  prepare->add_option("--out", prep_out, "Output dataset directory")->required();
  prepare->add_option("--format", prep_format, "tsv|csv");
  prepare->add_option("--min-item", prep_cfg.min_item, "Minimum events per item");
  prepare->add_option("--min-user", prep_cfg.min_user, "Minimum events per user");
  prepare->add_option("--train-frac", prep_cfg.train_frac, "Chronological train fraction");
  prepare->add_option("--profile", prep_profile, "Optional user_id<TAB>feature file");

  // synth
  auto* synth = app.add_subcommand("synth", "Generate a synthetic clustered dataset");
  SynthConfig synth_cfg;
  std::string synth_out;
  synth->add_option("--out", synth_out, "Output directory")->required();
  synth->add_option("--users", synth_cfg.n_users, "Number of users");
  synth->add_option("--clusters", synth_cfg.n_clusters, "Number of item clusters");
  synth->add_option("--items-per-cluster", synth_cfg.items_per_cluster, "Items per cluster");
  synth->add_option("--seq-len", synth_cfg.seq_len, "Events per user");
  synth->add_option("--window", synth_cfg.window, "Taste window width per cluster");
  synth->add_option("--primary-share", synth_cfg.primary_share, "Primary cluster share");
  synth->add_option("--seed", synth_cfg.seed, "Generator seed");

  // train
  auto* train_cmd = app.add_subcommand("train", "Train a model");
  std::string train_data, train_ckpt;
  TrainFlags train_flags;
  train_cmd->add_option("--data", train_data, "Prepared dataset directory")->required();
  train_cmd->add_option("--checkpoint", train_ckpt, "Checkpoint output path")->required();
  train_flags.add(*train_cmd);

  // sweep
  auto* sweep = app.add_subcommand("sweep", "Train and evaluate across a lambda grid");
  std::string sweep_data, sweep_out, sweep_lambdas = "0.01,0.1,1", sweep_n = "50,100";
  std::string sweep_exclude = "on";
  TrainFlags sweep_flags;
  sweep->add_option("--data", sweep_data, "Prepared dataset directory")->required();
  sweep->add_option("--out", sweep_out, "Directory for per-run checkpoints")->required();
  sweep->add_option("--lambdas", sweep_lambdas, "Comma-separated lambda grid");
  sweep->add_option("--n", sweep_n, "Retrieval sizes");
  sweep->add_option("--exclude-history", sweep_exclude, "on|off");
  sweep_flags.add(*sweep);

  // eval
  auto* eval_cmd = app.add_subcommand("eval", "Hit rate and diversity report");
  std::string eval_data, eval_ckpt, eval_n = "50,100", eval_exclude = "on", eval_backend = "exact";
  std::string eval_jsonl;
  std::size_t eval_threads = 1;
  eval_cmd->add_option("--data", eval_data, "Prepared dataset directory")->required();
  eval_cmd->add_option("--checkpoint", eval_ckpt, "Checkpoint")->required();
  eval_cmd->add_option("--n", eval_n, "Retrieval sizes");
  eval_cmd->add_option("--exclude-history", eval_exclude, "on|off");
  eval_cmd->add_option("--backend", eval_backend, "exact|approx");
  eval_cmd->add_option("--jsonl", eval_jsonl, "Also write line-delimited JSON records here");
  eval_cmd->add_option("--threads", eval_threads, "Worker threads");

  // retrieve
  auto* retrieve_cmd = app.add_subcommand("retrieve", "Batch top-N retrieval to TSV");
  std::string ret_data, ret_ckpt, ret_out, ret_users, ret_exclude = "on", ret_backend = "exact";
  std::size_t ret_n = 50, ret_threads = 1;
  retrieve_cmd->add_option("--data", ret_data, "Prepared dataset directory")->required();
  retrieve_cmd->add_option("--checkpoint", ret_ckpt, "Checkpoint")->required();
  retrieve_cmd->add_option("--out", ret_out, "Output TSV")->required();
  retrieve_cmd->add_option("--users", ret_users, "File with one user_id per line (default: all)");
  retrieve_cmd->add_option("--n", ret_n, "Items per user");
  retrieve_cmd->add_option("--exclude-history", ret_exclude, "on|off");
  retrieve_cmd->add_option("--backend", ret_backend, "exact|approx");
  retrieve_cmd->add_option("--threads", ret_threads, "Worker threads");

  // export
  auto* export_cmd = app.add_subcommand("export", "Export per-user interest vectors");
  std::string exp_data, exp_ckpt, exp_out, exp_users;
  std::size_t exp_limit = 0;
  export_cmd->add_option("--data", exp_data, "Prepared dataset directory")->required();
  export_cmd->add_option("--checkpoint", exp_ckpt, "Checkpoint")->required();
  export_cmd->add_option("--out", exp_out, "Output TSV")->required();
  export_cmd->add_option("--users", exp_users, "File with one user_id per line (default: all)");
  export_cmd->add_option("--limit", exp_limit, "Export at most this many users (0 = all)");

  // check-grad
  auto* check_cmd = app.add_subcommand("check-grad", "Finite-difference check of all gradients");
  std::uint64_t check_seed = 0;
  double check_tol = 1e-4;
  check_cmd->add_option("--seed", check_seed, "Instance seed");
  check_cmd->add_option("--tol", check_tol, "Relative error tolerance");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    std::cerr << app.help();
    return kExitUsage;
  }

  if (*prepare) {
    TableFormat format = TableFormat::tsv;
    if (prep_format == "csv") {
      format = TableFormat::csv;
    } else if (prep_format != "tsv") {
      throw UsageError("--format must be tsv or csv");
    }
    const auto rows = load_interactions(prep_data, format);
    const auto filtered = filter_min_counts(rows, prep_cfg.min_item, prep_cfg.min_user);
    auto seqs = build_sequences(filtered.interactions, filtered.vocab);
    auto split = chronological_split(seqs.sequences, prep_cfg.train_frac);
    Dataset ds{filtered.vocab, std::move(seqs.user_ids), std::move(split.sequences), {}, {}};
    if (!prep_profile.empty()) attach_profiles(ds, prep_profile);
    save_dataset(prep_out, ds);
    std::cout << "rows: " << rows.size() << "\nkept_rows: " << filtered.interactions.size()
              << "\nitems: " << ds.vocab.size() << "\nusers: " << ds.sequences.size()
              << "\ndropped_by_split: " << split.dropped
              << "\nprofile_features: " << ds.profile_features.size() << '\n';
    return kExitOk;
  }

  if (*synth) {
    const auto data = generate_synthetic(synth_cfg);
    std::filesystem::create_directories(synth_out);
    write_interactions(std::filesystem::path(synth_out) / "interactions.tsv", data.interactions);
    write_cluster_labels(std::filesystem::path(synth_out) / "labels.tsv", data);
    std::cout << "rows: " << data.interactions.size() << "\nitems: " << data.item_clusters.size()
              << "\nusers: " << synth_cfg.n_users << '\n';
    return kExitOk;
  }

  if (*train_cmd) {
    const TrainConfig config = train_flags.resolve();
    const Dataset ds = load_dataset(train_data);
    for (const auto& [k, v] : config.to_map()) std::cout << "config " << k << "=" << v << '\n';
    const auto report = train(ds, config, train_ckpt, nullptr, print_epoch);
    std::cout << "checkpoint: " << report.checkpoint.string() << '\n';
    return kExitOk;
  }

  if (*sweep) {
    const TrainConfig base = sweep_flags.resolve();
    const Dataset ds = load_dataset(sweep_data);
    EvalOptions eval_opts;
    eval_opts.cutoffs = parse_sizes(sweep_n);
    eval_opts.exclude_history = parse_on_off(sweep_exclude);
    eval_opts.threads = base.threads;
    std::vector<double> grid{0.0};
    for (double l : parse_reals(sweep_lambdas)) {
      if (l != 0.0) grid.push_back(l);
    }
    std::filesystem::create_directories(sweep_out);
    std::ostringstream table;
    table << "separator\tlambda";
    for (std::size_t n : eval_opts.cutoffs) table << "\tHR@" << n;
    table << "\tmean_cosine\tmean_angle_deg\n";
    std::optional<EvalReport> last;
    for (double lambda : grid) {
      TrainConfig config = base;
      config.separator.lambda = lambda;
      if (lambda == 0.0) config.separator.kind = Separator::none;
      config.validate();
      const auto path = std::filesystem::path(sweep_out) /
                        ("lambda_" + std::to_string(lambda) + ".ckpt");
      Model model;
      train(ds, config, path, &model);
      const EvalReport report = evaluate(model, ds, eval_opts);
      table << to_string(config.separator.kind) << '\t' << lambda;
      for (std::size_t n : eval_opts.cutoffs) table << '\t' << report.hit_rate.at(n);
      table << '\t' << report.mean_cosine << '\t' << report.mean_angle_degrees << '\n';
      std::cerr << "done lambda=" << lambda << std::endl;
      last = report;
    }
    table << "most_popular\t-";
    for (std::size_t n : eval_opts.cutoffs) table << '\t' << last->most_popular_hit_rate.at(n);
    table << "\t-\t-\n";
    std::cout << table.str();
    return kExitOk;
  }

  if (*eval_cmd) {
    const Model model = load_model(eval_ckpt);
    const Dataset ds = load_dataset(eval_data);
    EvalOptions opts;
    opts.cutoffs = parse_sizes(eval_n);
    opts.exclude_history = parse_on_off(eval_exclude);
    opts.backend = parse_backend(eval_backend);
    opts.threads = eval_threads;
    const EvalReport report = evaluate(model, ds, opts);
    write_report_text(std::cout, report);
    if (!eval_jsonl.empty()) {
      std::ofstream out(eval_jsonl, std::ios::trunc);
      if (!out) throw DataError("cannot open for writing: " + eval_jsonl);
      write_report_jsonl(out, report);
    }
    return kExitOk;
  }

  if (*retrieve_cmd) {
    if (ret_n < 1) throw UsageError("--n must be >= 1");
    const Model model = load_model(ret_ckpt);
    const Dataset ds = load_dataset(ret_data);
    const auto users = select_users(ds, ret_users, 0);
    ServeOptions opts{ret_n, parse_on_off(ret_exclude), parse_backend(ret_backend), ret_threads};
    const RetrievalIndex index = RetrievalIndex::build(model.params.item_embeddings.value, opts.backend);
    const auto recs = recommend_all(model, ds, users, index, opts);
    write_recommendations(ret_out, ds, recs);
    std::cout << "users: " << recs.size() << "\nout: " << ret_out << '\n';
    return kExitOk;
  }

  if (*export_cmd) {
    const Model model = load_model(exp_ckpt);
    const Dataset ds = load_dataset(exp_data);
    const auto users = select_users(ds, exp_users, exp_limit);
    export_embeddings(model, ds, users, exp_out);
    std::cout << "users: " << users.size() << "\nout: " << exp_out << '\n';
    return kExitOk;
  }

  if (*check_cmd) {
    double worst = 0.0;
    bool ok = true;
    for (const auto& c : joint_gradient_suite(check_seed, check_tol)) {
      std::cout << std::left << std::setw(28) << c.label << " max_rel_error "
                << std::scientific << std::setprecision(3) << c.report.max_rel_error
                << std::defaultfloat << " checked " << c.report.checked
                << (c.report.passed() ? "" : "  FLAGGED") << '\n';
      worst = std::max(worst, c.report.max_rel_error);
      ok = ok && c.report.passed();
    }
    std::cout << "max_rel_error: " << std::scientific << worst << '\n';
    return ok && worst < check_tol ? kExitOk : kExitNumeric;
  }
  return kExitUsage;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const drim::UsageError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const drim::DataError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kExitData;
  } catch (const drim::NumericError& e) {
    std::cerr << "numeric error: " << e.what() << '\n';
    return kExitNumeric;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitData;
  }
}
