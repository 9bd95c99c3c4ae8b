// Copyright 2026 The AGCN Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// `agcn` command line: train, analyze and generate subcommands.
// Exit codes: 0 success, 1 runtime or numeric failure, 2 usage error.

#pragma once

#include "agcn/analysis.hpp"
#include "agcn/clustering.hpp"
#include "agcn/datagen.hpp"
#include "agcn/graph.hpp"
#include "agcn/io.hpp"
#include "agcn/training.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <filesystem>
#include <iostream>
#include <optional>

namespace agcn::cli {

namespace fs = std::filesystem;

inline constexpr int kExitOk = 0;
inline constexpr int kExitRuntime = 1;
inline constexpr int kExitUsage = 2;

struct GraphPaths {
  std::string graph;
  std::string features;
  std::string labels;

  Graph load() const {
    std::optional<fs::path> lab;
    if (!labels.empty()) lab = labels;
    return load_graph(graph, features, lab);
  }
};

struct TrainOptions {
  GraphPaths paths;
  std::string config;
  std::string out_dir = "agcn_out";
  TrainingConfig cfg;
  int restarts = 10;
  int eval_seeds = 1;
  int clusters = 0;  // 0: from labels
  bool sweep = false;
  std::vector<int> k_grid;
  std::vector<double> lambda_grid;
};

/// Default k x lambda search grid.
inline std::vector<int> default_k_grid() { return {1, 2, 3, 4, 5, 6, 7, 8, 9, 10}; }
inline std::vector<double> default_lambda_grid() {
  std::vector<double> g;
  for (int e = -4; e <= 10; ++e) g.push_back(std::pow(10.0, e));
  return g;
}

/// One training run plus evaluation; writes params.bin, history.csv,
/// result.json and report.json into `dir`. Returns the experiment record.
inline json run_experiment(const Graph& g, const TrainingConfig& cfg, const TrainOptions& opt,
                           const fs::path& dir) {
  const auto start = std::chrono::steady_clock::now();
  fs::create_directories(dir);
  TrainResult tr = train(g, cfg);
  save_params(tr.params, dir / "params.bin");
  write_history_csv(tr.history, dir / "history.csv");

  json result;
  result["config"] = config_to_json(cfg);
  result["dataset"] = fingerprint(g);
  result["history"] = "history.csv";
  if (!tr.history.empty()) {
    const auto& last = tr.history.back();
    result["final_loss"] = {{"L_pos", last.pos}, {"L_neg", last.neg}, {"L_total", last.total}};
  }
  const int c = opt.clusters > 0 ? opt.clusters : (g.has_labels() ? g.n_clusters() : 0);
  if (c > 0) {
    std::vector<std::uint64_t> seeds;
    for (int s = 0; s < std::max(1, opt.eval_seeds); ++s)
      seeds.push_back(derive_seed(cfg.seed, {0xE7A1, static_cast<std::uint64_t>(s)}));
    KMeansOptions km;
    km.restarts = opt.restarts;
    if (g.has_labels()) {
      const ClusterResult cr = evaluate(tr.embeddings, c, g.labels(), seeds, km);
      result["acc"] = cr.acc;
      result["nmi"] = cr.nmi;
      result["clustering"] = to_json(cr);
    } else {
      result["labels"] = kmeans(tr.embeddings, c, seeds.front(), km).labels;
    }
  }
  write_json(result, dir / "result.json");

  const double seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  json record = result;
  record.erase("clustering");
  record["wall_clock_seconds"] = seconds;
  record["out_dir"] = dir.string();
  write_json(record, dir / "report.json");
  return record;
}

inline int cmd_train(const TrainOptions& opt, std::ostream& out) {
  const Graph g = opt.paths.load();
  TrainingConfig base = opt.cfg;
  if (!opt.sweep) {
    base.validate();
    json rec = run_experiment(g, base, opt, opt.out_dir);
    json summary{{"acc", rec.value("acc", json(nullptr))}, {"nmi", rec.value("nmi", json(nullptr))},
                 {"out_dir", opt.out_dir}};
    out << summary.dump() << '\n';
    return kExitOk;
  }
  const auto ks = opt.k_grid.empty() ? default_k_grid() : opt.k_grid;
  const auto lambdas = opt.lambda_grid.empty() ? default_lambda_grid() : opt.lambda_grid;
  std::vector<json> records;
  for (int k : ks)
    for (double lambda : lambdas) {
      TrainingConfig cfg = base;
      cfg.k = k;
      cfg.lambda = lambda;
      cfg.validate();
      const fs::path dir = fs::path(opt.out_dir) / ("k" + std::to_string(k) + "_lambda" + format_real(lambda));
      records.push_back(run_experiment(g, cfg, opt, dir));
    }
  std::stable_sort(records.begin(), records.end(), [](const json& a, const json& b) {
    return a.value("acc", 0.0) > b.value("acc", 0.0);
  });
  json summary;
  summary["records"] = json::array();
  for (const auto& r : records) {
    json row{{"k", r["config"]["k"]}, {"lambda", r["config"]["lambda"]},
             {"acc", r.value("acc", json(nullptr))}, {"nmi", r.value("nmi", json(nullptr))},
             {"out_dir", r["out_dir"]}};
    summary["records"].push_back(std::move(row));
  }
  fs::create_directories(opt.out_dir);
  write_json(summary, fs::path(opt.out_dir) / "summary.json");
  out << summary.dump() << '\n';
  return kExitOk;
}

struct AnalyzeOptions {
  GraphPaths paths;
  std::string out_dir = "agcn_out";
  int k = 5;
  std::string k_range = "1:9";
  std::string pred;
  double fraction = 0.6;
  std::uint64_t seed = 0;
  int restarts = 10;
  int clusters = 0;
};

inline std::pair<int, int> parse_k_range(const std::string& s) {
  const auto colon = s.find(':');
  int lo = 0, hi = 0;
  try {
    if (colon == std::string::npos) {
      lo = hi = std::stoi(s);
    } else {
      lo = std::stoi(s.substr(0, colon));
      hi = std::stoi(s.substr(colon + 1));
    }
  } catch (const std::exception&) {
    throw ConfigError("bad --k-range '" + s + "' (expected a:b)");
  }
  if (lo < 1 || hi < lo) throw ConfigError("bad --k-range '" + s + "' (need 1 <= a <= b)");
  return {lo, hi};
}

inline int cmd_analyze_paths(const AnalyzeOptions& opt, std::ostream& out) {
  const Graph g = opt.paths.load();
  const PathHistogram h = shortest_path_histogram(g);
  fs::create_directories(opt.out_dir);
  json rep{{"analysis", "paths"}, {"dataset", fingerprint(g)}, {"histogram", to_json(h)}};
  write_json(rep, fs::path(opt.out_dir) / "report.json");
  std::ofstream csv(fs::path(opt.out_dir) / "paths.csv", std::ios::binary);
  csv << "distance,count\n";
  for (const auto& [d, c] : h.by_distance) csv << d << ',' << c << '\n';
  csv << "inf," << h.unreachable << '\n';
  out << rep["histogram"].dump() << '\n';
  return kExitOk;
}

inline int cmd_analyze_grouping(const AnalyzeOptions& opt, std::ostream& out) {
  const Graph g = opt.paths.load();
  const int c = opt.clusters > 0 ? opt.clusters : g.n_clusters();
  KMeansOptions km;
  km.restarts = opt.restarts;
  const GroupingReport r = grouping_probe(g, opt.k, c, opt.seed, km);
  fs::create_directories(opt.out_dir);
  std::ofstream csv(fs::path(opt.out_dir) / "coords.csv", std::ios::binary);
  csv << "node,x,y,label,predicted,misclustered\n";
  for (Index i = 0; i < g.n_nodes(); ++i)
    csv << i << ',' << format_real(r.coords(i, 0)) << ',' << format_real(r.coords(i, 1)) << ','
        << g.labels()[static_cast<std::size_t>(i)] << ',' << r.predicted[static_cast<std::size_t>(i)]
        << ',' << static_cast<int>(r.misclustered[static_cast<std::size_t>(i)]) << '\n';
  std::vector<Index> errors;
  for (Index i = 0; i < g.n_nodes(); ++i)
    if (r.misclustered[static_cast<std::size_t>(i)]) errors.push_back(i);
  json rep{{"analysis", "grouping"}, {"dataset", fingerprint(g)}, {"k", opt.k},
           {"acc", r.acc}, {"nmi", r.nmi}, {"n_errors", r.n_errors},
           {"misclustered", errors}, {"coordinates", "coords.csv"}};
  write_json(rep, fs::path(opt.out_dir) / "report.json");
  out << json{{"acc", r.acc}, {"nmi", r.nmi}, {"n_errors", r.n_errors}}.dump() << '\n';
  return kExitOk;
}

inline int cmd_analyze_r_ratio(const AnalyzeOptions& opt, std::ostream& out) {
  const Graph g = opt.paths.load();
  const auto [lo, hi] = parse_k_range(opt.k_range);
  std::vector<int> pred;
  std::string source;
  if (!opt.pred.empty()) {
    pred = read_labels(opt.pred);
    if (static_cast<Index>(pred.size()) != g.n_nodes())
      throw DimensionError("prediction file has " + std::to_string(pred.size()) + " rows, graph has " +
                           std::to_string(g.n_nodes()) + " nodes");
    source = opt.pred;
  } else {
    KMeansOptions km;
    km.restarts = opt.restarts;
    const int c = opt.clusters > 0 ? opt.clusters : g.n_clusters();
    pred = grouping_probe(g, opt.k, c, opt.seed, km).predicted;
    source = "kmeans on propagated features, k=" + std::to_string(opt.k);
  }
  const RRatioReport r = r_ratio(g, pred, g.labels(), lo, hi);
  fs::create_directories(opt.out_dir);
  json rep{{"analysis", "r-ratio"}, {"dataset", fingerprint(g)}, {"prediction_source", source}};
  rep["r_ratio"] = to_json(r);
  write_json(rep, fs::path(opt.out_dir) / "report.json");
  std::ofstream csv(fs::path(opt.out_dir) / "r_ratio.csv", std::ios::binary);
  csv << "cluster,k,misclustered,pair_mean,literal\n";
  for (const auto& e : r.entries)
    csv << e.cluster << ',' << e.k << ',' << e.misclustered << ','
        << (e.pair_mean ? format_real(*e.pair_mean) : "") << ','
        << (e.literal ? format_real(*e.literal) : "") << '\n';
  out << rep["r_ratio"].dump() << '\n';
  return kExitOk;
}

inline int cmd_analyze_mask_features(const AnalyzeOptions& opt, std::ostream& out) {
  const Graph g = opt.paths.load();
  const Graph masked = mask_features(g, opt.fraction, opt.seed);
  fs::create_directories(opt.out_dir);
  write_graph(masked, fs::path(opt.out_dir) / "masked");
  const auto zeroed = zero_feature_rows(masked);
  json rep{{"analysis", "mask-features"}, {"dataset", fingerprint(g)}, {"fraction", opt.fraction},
           {"seed", opt.seed}, {"zeroed_rows", zeroed.size()}, {"masked_dataset", fingerprint(masked)}};
  write_json(rep, fs::path(opt.out_dir) / "report.json");
  out << json{{"zeroed_rows", zeroed.size()}}.dump() << '\n';
  return kExitOk;
}

inline int cmd_generate_sbm(const SBMSpec& spec, const fs::path& prefix, std::ostream& out) {
  const Graph g = gen_sbm(spec);
  write_graph(g, prefix);
  out << fingerprint(g).dump() << '\n';
  return kExitOk;
}

inline int cmd_generate_tree(const TreeMatchSpec& spec, const fs::path& prefix, std::ostream& out) {
  const Graph g = gen_tree_match(spec);
  write_graph(g, prefix);
  out << fingerprint(g).dump() << '\n';
  return kExitOk;
}

namespace detail {

inline void add_graph_flags(CLI::App* app, GraphPaths& p, bool labels_required) {
  app->add_option("--graph", p.graph, "edge list file")->required();
  app->add_option("--features", p.features, "node feature CSV")->required();
  auto* lab = app->add_option("--labels", p.labels, "label file (one integer per line)");
  if (labels_required) lab->required();
}

}  // namespace detail

/// Parses argv and dispatches. Output and diagnostics go to the given streams.
inline int run(int argc, const char* const* argv, std::ostream& out = std::cout,
               std::ostream& err = std::cerr) {
  CLI::App app{"Attentive graph clustering: structure-aware Transformer embeddings + k-means"};
  app.require_subcommand(1);

  // train
  TrainOptions topt;
  std::string residual = "input", mode = "structure";
  bool no_lneg = false;
  auto* train_cmd = app.add_subcommand("train", "train a model and cluster its embeddings");
  detail::add_graph_flags(train_cmd, topt.paths, false);
  train_cmd->add_option("--config", topt.config, "JSON config file (flags override it)");
  auto* o_k = train_cmd->add_option("--k", topt.cfg.k, "hop order");
  auto* o_lambda = train_cmd->add_option("--lambda", topt.cfg.lambda, "weight of the positive loss");
  auto* o_gamma = train_cmd->add_option("--gamma", topt.cfg.gamma, "margin strength");
  auto* o_layers = train_cmd->add_option("--layers", topt.cfg.layers);
  auto* o_heads = train_cmd->add_option("--heads", topt.cfg.heads);
  auto* o_dq = train_cmd->add_option("--dq", topt.cfg.d_q);
  auto* o_dv = train_cmd->add_option("--dv", topt.cfg.d_v);
  auto* o_dmodel = train_cmd->add_option("--dmodel", topt.cfg.d_model, "hidden width (default: dv)");
  auto* o_dout = train_cmd->add_option("--dout", topt.cfg.d_out);
  auto* o_epochs = train_cmd->add_option("--epochs", topt.cfg.epochs);
  auto* o_lr = train_cmd->add_option("--lr", topt.cfg.learning_rate);
  auto* o_seed = train_cmd->add_option("--seed", topt.cfg.seed);
  auto* o_pair_cap = train_cmd->add_option("--pair-cap", topt.cfg.pair_cap);
  auto* o_residual = train_cmd->add_option("--residual", residual)->check(CLI::IsMember({"input", "hidden"}));
  auto* o_mode = train_cmd->add_option("--mode", mode)->check(CLI::IsMember({"structure", "vanilla"}));
  auto* o_no_lneg = train_cmd->add_flag("--no-lneg", no_lneg, "drop the rank-margin loss");
  auto* o_max_nb = train_cmd->add_option("--max-neighbors", topt.cfg.max_neighbors, "0 = unlimited");
  auto* o_layer_norm = train_cmd->add_flag("--layer-norm", topt.cfg.layer_norm);
  train_cmd->add_option("--restarts", topt.restarts, "k-means restarts")->check(CLI::PositiveNumber);
  train_cmd->add_option("--eval-seeds", topt.eval_seeds, "k-means seeds")->check(CLI::PositiveNumber);
  train_cmd->add_option("--clusters", topt.clusters, "cluster count (default: from labels)");
  train_cmd->add_option("--out-dir", topt.out_dir);
  train_cmd->add_flag("--sweep", topt.sweep, "grid over k x lambda");
  train_cmd->add_option("--k-grid", topt.k_grid)->delimiter(',');
  train_cmd->add_option("--lambda-grid", topt.lambda_grid)->delimiter(',');

  // analyze
  AnalyzeOptions aopt;
  auto* analyze_cmd = app.add_subcommand("analyze", "graph diagnostics");
  analyze_cmd->require_subcommand(1);
  auto* paths_cmd = analyze_cmd->add_subcommand("paths", "same-label shortest-path histogram");
  auto* grouping_cmd = analyze_cmd->add_subcommand("grouping", "k-means on propagated features");
  auto* rratio_cmd = analyze_cmd->add_subcommand("r-ratio", "higher-order distance ratios");
  auto* maskf_cmd = analyze_cmd->add_subcommand("mask-features", "zero a fraction of feature rows");
  for (auto* sub : {paths_cmd, grouping_cmd, rratio_cmd, maskf_cmd}) {
    detail::add_graph_flags(sub, aopt.paths, sub != maskf_cmd);
    sub->add_option("--out-dir", aopt.out_dir);
    sub->add_option("--seed", aopt.seed);
  }
  for (auto* sub : {grouping_cmd, rratio_cmd}) {
    sub->add_option("--k", aopt.k, "propagation order")->check(CLI::PositiveNumber);
    sub->add_option("--restarts", aopt.restarts)->check(CLI::PositiveNumber);
    sub->add_option("--clusters", aopt.clusters);
  }
  rratio_cmd->add_option("--k-range", aopt.k_range, "a:b");
  rratio_cmd->add_option("--pred", aopt.pred, "predicted labels file");
  maskf_cmd->add_option("--fraction", aopt.fraction);

  // generate
  SBMSpec sbm;
  TreeMatchSpec tree;
  std::string gen_out = "data";
  std::string gen_name;
  auto* gen_cmd = app.add_subcommand("generate", "synthetic datasets");
  gen_cmd->require_subcommand(1);
  auto* sbm_cmd = gen_cmd->add_subcommand("sbm", "stochastic block model");
  sbm_cmd->add_option("--blocks", sbm.block_sizes)->delimiter(',');
  sbm_cmd->add_option("--p-in", sbm.p_in);
  sbm_cmd->add_option("--p-out", sbm.p_out);
  sbm_cmd->add_option("--feature-dim", sbm.feature_dim);
  sbm_cmd->add_option("--mean-scale", sbm.mean_scale);
  sbm_cmd->add_option("--noise", sbm.noise);
  sbm_cmd->add_option("--seed", sbm.seed);
  auto* tree_cmd = gen_cmd->add_subcommand("tree-match", "complete binary tree neighbors-match");
  tree_cmd->add_option("--depth", tree.depth)->required();
  tree_cmd->add_option("--seed", tree.seed);
  for (auto* sub : {sbm_cmd, tree_cmd}) {
    sub->add_option("--out-dir", gen_out);
    sub->add_option("--name", gen_name, "file prefix");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (train_cmd->parsed()) {
      if (!topt.config.empty()) {
        std::ifstream in(topt.config);
        if (!in) throw ConfigError("cannot open config " + topt.config);
        json j;
        try {
          j = json::parse(in);
        } catch (const json::exception& e) {
          throw ConfigError("bad config JSON: " + std::string(e.what()));
        }
        TrainingConfig from_file = config_from_json(j);
        // Explicit flags win over the file.
        auto keep = [](CLI::Option* o, auto& dst, const auto& flag_val) {
          if (o->count() > 0) dst = flag_val;
        };
        const TrainingConfig flags = topt.cfg;
        keep(o_k, from_file.k, flags.k);
        keep(o_lambda, from_file.lambda, flags.lambda);
        keep(o_gamma, from_file.gamma, flags.gamma);
        keep(o_layers, from_file.layers, flags.layers);
        keep(o_heads, from_file.heads, flags.heads);
        keep(o_dq, from_file.d_q, flags.d_q);
        keep(o_dv, from_file.d_v, flags.d_v);
        keep(o_dmodel, from_file.d_model, flags.d_model);
        keep(o_dout, from_file.d_out, flags.d_out);
        keep(o_epochs, from_file.epochs, flags.epochs);
        keep(o_lr, from_file.learning_rate, flags.learning_rate);
        keep(o_seed, from_file.seed, flags.seed);
        keep(o_pair_cap, from_file.pair_cap, flags.pair_cap);
        keep(o_max_nb, from_file.max_neighbors, flags.max_neighbors);
        keep(o_layer_norm, from_file.layer_norm, flags.layer_norm);
        if (o_residual->count() == 0) residual = from_file.residual == ResidualSource::input ? "input" : "hidden";
        if (o_mode->count() == 0) mode = from_file.mode == AttentionMode::structure ? "structure" : "vanilla";
        if (o_no_lneg->count() == 0) no_lneg = !from_file.use_lneg;
        topt.cfg = from_file;
      }
      topt.cfg.residual = residual == "input" ? ResidualSource::input : ResidualSource::hidden;
      topt.cfg.mode = mode == "structure" ? AttentionMode::structure : AttentionMode::vanilla;
      topt.cfg.use_lneg = !no_lneg;
      return cmd_train(topt, out);
    }
    if (paths_cmd->parsed()) return cmd_analyze_paths(aopt, out);
    if (grouping_cmd->parsed()) return cmd_analyze_grouping(aopt, out);
    if (rratio_cmd->parsed()) return cmd_analyze_r_ratio(aopt, out);
    if (maskf_cmd->parsed()) return cmd_analyze_mask_features(aopt, out);
    if (sbm_cmd->parsed())
      return cmd_generate_sbm(sbm, fs::path(gen_out) / (gen_name.empty() ? "sbm" : gen_name), out);
    if (tree_cmd->parsed())
      return cmd_generate_tree(tree, fs::path(gen_out) / (gen_name.empty() ? "tree" : gen_name), out);
  } catch (const ConfigError& e) {
    err << "usage error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  err << app.help();
  return kExitUsage;
}

}  // namespace agcn::cli
