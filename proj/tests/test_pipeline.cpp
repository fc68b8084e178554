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

#include <filesystem>
#include <string>

#include <doctest.h>
#include <json.hpp>

#include "storec/evaluation.hpp"
#include "storec/splits.hpp"

namespace storec::cli {
namespace {

namespace fs = std::filesystem;

struct TempDir {
  fs::path path;

  explicit TempDir(const std::string& tag) {
    static int counter = 0;
    path = fs::temp_directory_path() /
           ("storec_" + tag + "_" + std::to_string(++counter));
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }

  std::string file(const std::string& name) const {
    return (path / name).string();
  }
};

// Desk-scale config rooted in `dir`; small enough that a full pipeline run
// stays around a second.
RunConfig tiny_config(const TempDir& dir) {
  RunConfig c;
  c.set("seed", "11");
  c.set("gen.users", "60");
  c.set("gen.intentions", "24");
  c.set("gen.clusters", "4");
  c.set("gen.min_len", "6");
  c.set("gen.max_len", "10");
  c.set("rel.d_g", "8");
  c.set("rel.epochs", "4");
  c.set("rel.top_k", "4");
  c.set("model.d", "6");
  c.set("model.max_len", "12");
  c.set("model.blocks", "1");
  c.set("model.dropout", "0.1");
  c.set("train.lr", "1e-3");
  c.set("train.batch", "16");
  c.set("train.epochs", "2");
  const std::pair<const char*, const char*> artifacts[] = {
      {"paths.corpus", "corpus.jsonl"},   {"paths.world", "world.json"},
      {"paths.pairs", "pairs.tsv"},       {"paths.graph", "graph.tsv"},
      {"paths.checkpoint", "model.ckpt"}, {"paths.train_log", "training.csv"},
      {"paths.splits", "splits.json"},    {"paths.report", "report.json"},
      {"paths.gradcheck", "gradcheck.csv"}, {"paths.mad", "mad.csv"}};
  for (const auto& [key, name] : artifacts) c.set(key, dir.file(name));
  c.validate();
  return c;
}

TEST_CASE("gen-data writes headered artifacts that round-trip") {
  TempDir dir("gen");
  const RunConfig rc = tiny_config(dir);
  cmd_gen_data(rc);
  REQUIRE(fs::exists(rc.path_corpus));
  REQUIRE(fs::exists(rc.path_world));
  REQUIRE(fs::exists(dir.file("manifest.gen-data.json")));

  const std::string raw = read_file(rc.path_corpus);
  CHECK(raw.rfind("# {\"config_hash\":\"" + config_hash_hex(rc), 0) == 0);
  const data::Corpus corpus = data::read_corpus(rc.path_corpus);
  const auto regenerated = data::generate_synthetic(rc.generator());
  CHECK(corpus == regenerated.first);
  const data::PlantedWorld world = data::read_world(rc.path_world);
  CHECK(world.complements == regenerated.second.complements);
  CHECK(world.cluster_of == regenerated.second.cluster_of);

  const nlohmann::json manifest =
      nlohmann::json::parse(read_file(dir.file("manifest.gen-data.json")));
  CHECK(manifest.at("command") == "gen-data");
  CHECK(manifest.at("config_hash") == config_hash_hex(rc));
  CHECK(manifest.at("config").at("gen.users") == "60");
}

TEST_CASE("build-graph produces a loadable graph in every mode") {
  TempDir dir("graph");
  RunConfig rc = tiny_config(dir);
  cmd_gen_data(rc);

  cmd_build_graph(rc);
  graph::RelationGraph learned = graph::read_graph(rc.path_graph);
  CHECK(learned.kind == "learned");
  CHECK(learned.num_nodes == 24);
  CHECK_FALSE(learned.edges.empty());
  // The pair-label artifact parses despite its header line.
  CHECK_FALSE(data::pair_labels_from_tsv(read_file(rc.path_pairs)).empty());

  rc.set("graph.mode", "oracle");
  cmd_build_graph(rc);
  CHECK(graph::read_graph(rc.path_graph).kind == "oracle");

  rc.set("graph.mode", "identity");
  cmd_build_graph(rc);
  const graph::RelationGraph id = graph::read_graph(rc.path_graph);
  CHECK(id.kind == "identity");
  CHECK(id.edges.empty());
}

TEST_CASE("train then eval writes a complete, deterministic report") {
  TempDir dir("train");
  const RunConfig rc = tiny_config(dir);
  cmd_gen_data(rc);
  cmd_build_graph(rc);
  cmd_train(rc);

  const model::LoadedCheckpoint loaded =
      model::load_checkpoint(rc.path_checkpoint);
  CHECK(loaded.meta.config_hash == config_hash(rc));
  CHECK(loaded.meta.graph_hash ==
        graph::graph_hash(graph::read_graph(rc.path_graph)));
  CHECK(loaded.meta.best_epoch >= 0);

  const std::string log = read_file(rc.path_train_log);
  CHECK(log.find("epoch,mean_loss,grad_norm,seconds\n") != std::string::npos);
  CHECK(log.find("\n0,") != std::string::npos);
  CHECK(log.find("\n1,") != std::string::npos);
  CHECK(fs::exists(rc.path_splits));

  cmd_eval(rc);
  const std::string first = read_file(rc.path_report);
  cmd_eval(rc);
  CHECK(read_file(rc.path_report) == first);

  const nlohmann::json report = nlohmann::json::parse(first);
  const auto& metrics = report.at("metrics");
  const double hit1 = metrics.at("hit1").get<double>();
  const double hit2 = metrics.at("hit2").get<double>();
  const double hit5 = metrics.at("hit5").get<double>();
  const double hit10 = metrics.at("hit10").get<double>();
  CHECK(hit1 <= hit2);
  CHECK(hit2 <= hit5);
  CHECK(hit5 <= hit10);
  CHECK(hit10 <= 1.0);
  CHECK(metrics.at("ndcg10").get<double>() >= 0.0);
  CHECK(report.at("split") == "test");
  CHECK(report.at("users").get<int>() > 0);
  CHECK(report.at("config_hash") == config_hash_hex(rc));
}

TEST_CASE("per-user rank log is written when a path is configured") {
  TempDir dir("ranks");
  RunConfig rc = tiny_config(dir);
  cmd_gen_data(rc);
  cmd_build_graph(rc);
  rc.set("train.epochs", "1");
  cmd_train(rc);
  rc.set("paths.ranks", dir.file("ranks.csv"));
  cmd_eval(rc);
  const std::string csv = read_file(rc.path_ranks);
  CHECK(csv.find("user,rank\n") != std::string::npos);
  // One line per evaluated user plus header comment and column names.
  const nlohmann::json report =
      nlohmann::json::parse(read_file(rc.path_report));
  const auto rows = static_cast<std::size_t>(report.at("users").get<int>());
  std::size_t lines = 0;
  for (char ch : csv) lines += ch == '\n' ? 1 : 0;
  CHECK(lines == rows + 2);
}

TEST_CASE("eval refuses a checkpoint trained against a different graph") {
  TempDir dir("mismatch");
  RunConfig rc = tiny_config(dir);
  cmd_gen_data(rc);
  cmd_build_graph(rc);
  rc.set("train.epochs", "1");
  cmd_train(rc);
  rc.set("graph.mode", "identity");
  cmd_build_graph(rc);  // overwrites the graph the checkpoint was tied to
  CHECK_THROWS_WITH_AS(cmd_eval(rc),
                       doctest::Contains("hash mismatch"), ContractViolation);
}

TEST_CASE("missing inputs abort before any artifact is written") {
  TempDir dir("missing");
  const RunConfig rc = tiny_config(dir);
  CHECK_THROWS_AS(cmd_build_graph(rc), MissingInputError);
  CHECK_THROWS_AS(cmd_train(rc), MissingInputError);
  CHECK_THROWS_AS(cmd_eval(rc), MissingInputError);
  CHECK_THROWS_AS(cmd_mad(rc), MissingInputError);
  CHECK(fs::is_empty(dir.path));
}

TEST_CASE("ablation flags carry through training into the checkpoint") {
  TempDir dir("ablate");
  RunConfig rc = tiny_config(dir);
  rc.set("train.epochs", "1");
  cmd_gen_data(rc);

  RunConfig no_gr = rc;
  no_gr.set("ablate", "no-gr");
  no_gr.graph_mode = "identity";
  no_gr.validate();
  cmd_build_graph(no_gr);
  cmd_train(no_gr);
  model::LoadedCheckpoint ck = model::load_checkpoint(no_gr.path_checkpoint);
  CHECK(ck.state.config.disable_graph_regularizer);
  cmd_eval(no_gr);

  RunConfig no_sr = rc;
  no_sr.set("ablate", "no-sr");
  no_sr.validate();
  cmd_build_graph(no_sr);
  cmd_train(no_sr);
  ck = model::load_checkpoint(no_sr.path_checkpoint);
  CHECK(ck.state.config.deterministic_embeddings);
  CHECK((ck.state.t_sigma.array() == 0.0).all());
  cmd_eval(no_sr);
}

TEST_CASE("mad command reports decreasing smoothness depth on a dense graph") {
  TempDir dir("mad");
  RunConfig rc = tiny_config(dir);
  rc.set("graph.mode", "oracle");
  rc.set("train.epochs", "1");
  cmd_gen_data(rc);
  cmd_build_graph(rc);
  cmd_train(rc);
  cmd_mad(rc);
  const std::string csv = read_file(rc.path_mad);
  CHECK(csv.find("depth,mad,skipped_rows\n") != std::string::npos);
  CHECK(csv.find("\n1,") != std::string::npos);
  CHECK(csv.find("\n2,") != std::string::npos);
}

TEST_CASE("gradcheck command passes and records its result") {
  TempDir dir("gradcheck");
  const RunConfig rc = tiny_config(dir);
  cmd_gradcheck(rc);
  const std::string csv = read_file(rc.path_gradcheck);
  CHECK(csv.find("coords_checked,max_rel_err") != std::string::npos);
  CHECK(csv.back() == '\n');
  const GradCheckReport report = toy_gradient_check(5, /*coords=*/80);
  CHECK(report.pass);
  CHECK(report.coords_checked == 80);
  CHECK(report.max_rel_err < 1e-4);
}

TEST_CASE("run_command dispatches and rejects unknown names") {
  TempDir dir("dispatch");
  const RunConfig rc = tiny_config(dir);
  run_command("gen-data", rc);
  CHECK(fs::exists(rc.path_corpus));
  CHECK_THROWS_AS(run_command("serve", rc), ConfigError);
}

}  // namespace
}  // namespace storec::cli
