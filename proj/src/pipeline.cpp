// Copyright 2026 The storec Authors.
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

#include "storec/pipeline.hpp"

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <utility>
#include <vector>

#include <json.hpp>

#include "storec/evaluation.hpp"
#include "storec/splits.hpp"

namespace storec::cli {
namespace {

std::string header_line(const RunConfig& rc) {
  return "# {\"config_hash\":\"" + config_hash_hex(rc) + "\"}\n";
}

void require_input(const std::string& path) {
  if (!std::filesystem::exists(path)) {
    throw MissingInputError("missing input file: " + path);
  }
}

std::string manifest_path(const std::string& primary_output,
                          const std::string& command) {
  const std::filesystem::path p(primary_output);
  return (p.parent_path() / ("manifest." + command + ".json")).string();
}

void write_manifest(const RunConfig& rc, const std::string& command,
                    const std::string& primary_output,
                    const std::vector<std::string>& inputs,
                    const std::vector<std::string>& outputs) {
  nlohmann::json j;
  j["command"] = command;
  j["config"] = config_key_values(rc);
  j["config_hash"] = config_hash_hex(rc);
  j["derived_seeds"] = {
      {"gen", hex64(rc.gen_seed())},     {"rel", hex64(rc.rel_seed())},
      {"model", hex64(rc.model_seed())}, {"train", hex64(rc.train_seed())},
      {"eval", hex64(rc.eval_seed())},   {"split", hex64(rc.split_seed())}};
  j["inputs"] = inputs;
  j["outputs"] = outputs;
  write_file(manifest_path(primary_output, command), j.dump(2) + "\n");
}

// The canonical graph serialization starts with its own format header; the
// config-hash line goes right after it so the file still parses and hashes
// the same.
std::string graph_file_contents(const RunConfig& rc,
                                const graph::RelationGraph& g) {
  std::string text = graph::graph_to_string(g);
  const auto eol = text.find('\n');
  check(eol != std::string::npos, "graph serialization missing header line");
  return text.substr(0, eol + 1) + header_line(rc) + text.substr(eol + 1);
}

graph::RelationGraph load_graph_checked(const RunConfig& rc) {
  graph::RelationGraph g = graph::read_graph(rc.path_graph);
  check(g.num_nodes == rc.gen_intentions,
        "graph file node count disagrees with gen.intentions");
  return g;
}

model::LoadedCheckpoint load_checkpoint_checked(
    const RunConfig& rc, const graph::RelationGraph& g) {
  model::LoadedCheckpoint loaded = model::load_checkpoint(rc.path_checkpoint);
  if (loaded.meta.graph_hash != graph::graph_hash(g)) {
    throw ContractViolation(
        "checkpoint was trained against a different graph (hash mismatch); "
        "refusing to evaluate");
  }
  check(loaded.state.config.num_intentions == g.num_nodes,
        "checkpoint intention count disagrees with the graph");
  return loaded;
}

}  // namespace

void cmd_gen_data(const RunConfig& rc) {
  const auto [corpus, world] = data::generate_synthetic(rc.generator());
  write_file(rc.path_corpus, header_line(rc) + data::corpus_to_jsonl(corpus));
  write_file(rc.path_world, header_line(rc) + data::world_to_json(world));
  write_manifest(rc, "gen-data", rc.path_corpus, {},
                 {rc.path_corpus, rc.path_world});
  std::cout << "gen-data: " << corpus.size() << " events, " << rc.gen_users
            << " users -> " << rc.path_corpus << ", " << rc.path_world << "\n";
}

void cmd_build_graph(const RunConfig& rc) {
  require_input(rc.path_corpus);
  require_input(rc.path_world);
  const data::Corpus corpus = data::read_corpus(rc.path_corpus);
  const data::PlantedWorld world = data::read_world(rc.path_world);
  check(world.num_intentions == rc.gen_intentions,
        "world file intention count disagrees with gen.intentions");

  graph::RelationGraph g;
  std::vector<std::string> outputs;
  if (rc.graph_mode == "trained") {
    const std::vector<data::PairLabel> labels =
        data::emit_pair_labels(world, corpus, rc.rel_neg_ratio);
    write_file(rc.path_pairs,
               header_line(rc) + data::pair_labels_to_tsv(labels));
    outputs.push_back(rc.path_pairs);
    const graph::RelationModel model = graph::train_relation_model(
        labels, world.num_intentions, rc.relation());
    g = graph::build_graph(model, rc.rel_top_k);
  } else if (rc.graph_mode == "oracle") {
    g = graph::oracle_graph(world);
  } else {
    g = graph::identity_graph(world.num_intentions);
  }
  write_file(rc.path_graph, graph_file_contents(rc, g));
  outputs.push_back(rc.path_graph);
  write_manifest(rc, "build-graph", rc.path_graph,
                 {rc.path_corpus, rc.path_world}, outputs);
  std::cout << "build-graph: mode=" << rc.graph_mode << " nodes=" << g.num_nodes
            << " edges=" << g.edges.size() << " -> " << rc.path_graph << "\n";
}

void cmd_train(const RunConfig& rc) {
  require_input(rc.path_corpus);
  require_input(rc.path_graph);
  const data::Corpus corpus = data::read_corpus(rc.path_corpus);
  const graph::RelationGraph g = load_graph_checked(rc);
  const data::SplitResult split = data::make_split(
      rc.split_scenario(), corpus, rc.model_max_len, rc.split_seed());
  const train::HistoryIndex history = train::build_history(corpus);
  const model::ModelState init = model::init_model(rc.model_config());
  const eval::TrainRun run =
      eval::run_training(init, split.train, split.val, history, g,
                         rc.train_config(), rc.eval_seed());

  model::CheckpointMeta meta;
  meta.config_hash = config_hash(rc);
  meta.graph_hash = graph::graph_hash(g);
  meta.best_epoch = run.best_epoch;
  meta.val_ndcg10 = run.best_val_ndcg;
  model::save_checkpoint(rc.path_checkpoint, run.best_state, meta);

  std::string csv = header_line(rc) + "epoch,mean_loss,grad_norm,seconds\n";
  char line[160];
  for (const train::EpochStats& s : run.epochs) {
    std::snprintf(line, sizeof(line), "%d,%.17g,%.17g,%.6f\n", s.epoch,
                  s.mean_loss, s.grad_norm, s.seconds);
    csv += line;
  }
  write_file(rc.path_train_log, csv);
  write_file(rc.path_splits,
             header_line(rc) + data::split_manifest_json(split));
  write_manifest(rc, "train", rc.path_checkpoint,
                 {rc.path_corpus, rc.path_graph},
                 {rc.path_checkpoint, rc.path_train_log, rc.path_splits});
  std::cout << "train: epochs=" << run.epochs.size()
            << " best_epoch=" << run.best_epoch << " val_ndcg10=";
  std::snprintf(line, sizeof(line), "%.6f", run.best_val_ndcg);
  std::cout << line << " -> " << rc.path_checkpoint << "\n";
}

void cmd_eval(const RunConfig& rc) {
  require_input(rc.path_corpus);
  require_input(rc.path_graph);
  require_input(rc.path_checkpoint);
  const data::Corpus corpus = data::read_corpus(rc.path_corpus);
  const graph::RelationGraph g = load_graph_checked(rc);
  const model::LoadedCheckpoint loaded = load_checkpoint_checked(rc, g);
  const data::SplitResult split = data::make_split(
      rc.split_scenario(), corpus, rc.model_max_len, rc.split_seed());
  const std::vector<data::LabeledSequence>& rows =
      rc.eval_split == "test" ? split.test : split.val;
  const train::HistoryIndex history = train::build_history(corpus);

  eval::RankLog ranks;
  eval::RankLog* rank_log = rc.path_ranks.empty() ? nullptr : &ranks;
  const eval::EvalReport report =
      eval::evaluate(loaded.state, g, rows, history, rc.eval_seed(),
                     rc.eval_split, rank_log);

  nlohmann::json j;
  j["config"] = config_key_values(rc);
  j["config_hash"] = config_hash_hex(rc);
  j["graph_hash"] = hex64(graph::graph_hash(g));
  j["checkpoint"] = {{"best_epoch", loaded.meta.best_epoch},
                     {"val_ndcg10", loaded.meta.val_ndcg10}};
  j["metrics"] = {{"hit1", report.hit1},
                  {"hit2", report.hit2},
                  {"hit5", report.hit5},
                  {"hit10", report.hit10},
                  {"ndcg10", report.ndcg10}};
  j["users"] = report.users;
  j["split"] = report.split;
  j["seed"] = hex64(report.seed);
  j["shortfall"] = report.shortfall;
  write_file(rc.path_report, j.dump(2) + "\n");

  std::vector<std::string> outputs = {rc.path_report};
  if (rank_log != nullptr) {
    std::string csv = header_line(rc) + "user,rank\n";
    for (const auto& [user, rank] : ranks) {
      csv += std::to_string(user) + "," + std::to_string(rank) + "\n";
    }
    write_file(rc.path_ranks, csv);
    outputs.push_back(rc.path_ranks);
  }
  write_manifest(rc, "eval", rc.path_report,
                 {rc.path_corpus, rc.path_graph, rc.path_checkpoint}, outputs);
  char line[200];
  std::snprintf(line, sizeof(line),
                "eval: split=%s users=%d hit1=%.4f hit10=%.4f ndcg10=%.4f",
                report.split.c_str(), report.users, report.hit1, report.hit10,
                report.ndcg10);
  std::cout << line << " -> " << rc.path_report << "\n";
}

void cmd_gradcheck(const RunConfig& rc) {
  const GradCheckReport report = toy_gradient_check(rc.seed);
  std::string csv = header_line(rc);
  csv +=
      "coords_checked,max_rel_err,worst_param,worst_row,worst_col,analytic,"
      "numeric,pass\n";
  char line[200];
  std::snprintf(line, sizeof(line), "%d,%.17g,%d,%d,%d,%.17g,%.17g,%d\n",
                report.coords_checked, report.max_rel_err, report.worst_param,
                report.worst_row, report.worst_col, report.analytic,
                report.numeric, report.pass ? 1 : 0);
  csv += line;
  write_file(rc.path_gradcheck, csv);
  write_manifest(rc, "gradcheck", rc.path_gradcheck, {}, {rc.path_gradcheck});
  std::snprintf(line, sizeof(line),
                "gradcheck: coords=%d max_rel_err=%.3e pass=%s",
                report.coords_checked, report.max_rel_err,
                report.pass ? "true" : "false");
  std::cout << line << " -> " << rc.path_gradcheck << "\n";
  if (!report.pass) {
    throw ContractViolation("gradcheck failed: max relative error " +
                            std::to_string(report.max_rel_err));
  }
}

void cmd_mad(const RunConfig& rc) {
  require_input(rc.path_graph);
  require_input(rc.path_checkpoint);
  const graph::RelationGraph g = load_graph_checked(rc);
  const model::LoadedCheckpoint loaded = load_checkpoint_checked(rc, g);
  std::string csv = header_line(rc) + "depth,mad,skipped_rows\n";
  std::string summary = "mad:";
  char line[120];
  for (int depth = 1; depth <= rc.mad_max_depth; ++depth) {
    const Matrix reps = eval::node_representations(loaded.state, g, depth);
    int skipped = 0;
    const double value = eval::mad_diagnostic(reps, &skipped);
    std::snprintf(line, sizeof(line), "%d,%.17g,%d\n", depth, value, skipped);
    csv += line;
    std::snprintf(line, sizeof(line), " depth%d=%.4f", depth, value);
    summary += line;
  }
  write_file(rc.path_mad, csv);
  write_manifest(rc, "mad", rc.path_mad,
                 {rc.path_graph, rc.path_checkpoint}, {rc.path_mad});
  std::cout << summary << " -> " << rc.path_mad << "\n";
}

void run_command(const std::string& name, const RunConfig& rc) {
  if (name == "gen-data") {
    cmd_gen_data(rc);
  } else if (name == "build-graph") {
    cmd_build_graph(rc);
  } else if (name == "train") {
    cmd_train(rc);
  } else if (name == "eval") {
    cmd_eval(rc);
  } else if (name == "gradcheck") {
    cmd_gradcheck(rc);
  } else if (name == "mad") {
    cmd_mad(rc);
  } else {
    throw ConfigError("unknown command '" + name + "'");
  }
}

GradCheckReport toy_gradient_check(std::uint64_t seed, int coords, double h,
                                   double tol) {
  model::ModelConfig mcfg;
  mcfg.num_intentions = 6;
  mcfg.d = 4;
  mcfg.max_len = 5;
  mcfg.gcn_layers = 1;
  mcfg.gcn_activation = model::GcnActivation::kElu;
  mcfg.num_blocks = 1;
  mcfg.dropout = 0.2;
  mcfg.seed = 13;
  model::ModelState state = model::init_model(mcfg);
  // Break the identity GCN start so weight gradients are generic.
  Rng wrng(31);
  for (auto& w : state.gcn_w) {
    for (int i = 0; i < w.rows(); ++i) {
      for (int j = 0; j < w.cols(); ++j) w(i, j) += 0.05 * wrng.normal();
    }
  }
  Matrix a = Matrix::Zero(7, 7);
  a(0, 0) = 1.0;
  Rng arng(17);
  for (int i = 1; i <= 6; ++i) {
    for (int j = 1; j <= 6; ++j) a(i, j) = arng.uniform() * 0.3;
  }

  data::LabeledSequence row;
  row.user_id = 1;
  row.inputs = {0, 2, 5, 1, 3};
  row.targets = {0, 5, 1, 3, 6};
  train::HistoryIndex history;
  history[1] = {2, 5};

  std::vector<Matrix> init;
  for (const Matrix* p : std::as_const(state).parameters()) {
    init.push_back(*p);
  }
  auto builder = [&](GradientTape& tape,
                     const std::vector<Var>& params) -> Var {
    model::ModelVars vars = model::group_parameters(params, mcfg);
    Rng drng(99);  // identical masks on every call => smooth in parameters
    train::BatchExample ex = train::make_batch_example(
        row, history, mcfg, 1, /*negative_seed=*/7, &drng);
    return train::build_batch_loss(tape, vars, mcfg, a, {ex}, nullptr);
  };
  return check_gradients(builder, init, h, tol, coords, mix_seed(seed, 1));
}

}  // namespace storec::cli
