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

#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "storec/data.hpp"
#include "storec/objective.hpp"
#include "storec/relation_graph.hpp"
#include "storec/stochastic_model.hpp"

namespace storec::cli {

// Flat key=value run configuration shared by every pipeline command. One
// master seed; each stage derives its own seed with a fixed salt so stages
// stay independently reproducible. Unknown keys are rejected.
struct RunConfig {
  std::uint64_t seed = 1;
  std::string scenario = "original";   // original | 24h | purchase
  std::string ablate = "none";         // none | no-gr | no-sr
  std::string graph_mode = "trained";  // trained | oracle | identity

  int gen_users = 2000;
  int gen_intentions = 500;  // M, shared by every stage
  int gen_clusters = 25;
  int gen_min_len = 20;
  int gen_max_len = 40;
  double gen_p_stay = 0.6;
  double gen_p_noise = 0.1;
  double gen_purchase_rate = 0.15;
  double gen_gap_rate = 0.05;
  int gen_complements = 2;

  int rel_d_g = 32;
  double rel_lambda = 2.0;
  double rel_epsilon = 1.0;
  double rel_lr = 1e-2;
  int rel_epochs = 30;
  int rel_batch = 256;
  double rel_init_scale = 0.1;
  int rel_top_k = 10;
  int rel_neg_ratio = 2;

  int model_d = 64;
  int model_max_len = 50;  // L, also the split window
  int model_gcn_layers = 1;
  std::string model_gcn_activation = "linear";
  int model_blocks = 2;
  double model_dropout = 0.2;
  double model_init_scale = 0.1;

  double train_lr = 1e-3;
  int train_batch = 128;
  int train_epochs = 30;
  int train_negatives = 1;

  std::string eval_split = "test";  // val | test
  int mad_max_depth = 2;

  std::string path_corpus = "corpus.jsonl";
  std::string path_world = "world.json";
  std::string path_pairs = "pairs.tsv";
  std::string path_graph = "graph.tsv";
  std::string path_checkpoint = "model.ckpt";
  std::string path_train_log = "training.csv";
  std::string path_splits = "splits.json";
  std::string path_report = "report.json";
  std::string path_ranks;  // empty: per-user rank CSV disabled
  std::string path_gradcheck = "gradcheck.csv";
  std::string path_mad = "mad.csv";

  void set(const std::string& key, const std::string& value);
  void validate() const;  // throws ConfigError

  data::GeneratorConfig generator() const;
  graph::RelationConfig relation() const;
  model::ModelConfig model_config() const;
  train::TrainConfig train_config() const;

  std::uint64_t gen_seed() const { return mix_seed(seed, 1); }
  std::uint64_t rel_seed() const { return mix_seed(seed, 2); }
  std::uint64_t model_seed() const { return mix_seed(seed, 3); }
  std::uint64_t train_seed() const { return mix_seed(seed, 4); }
  std::uint64_t eval_seed() const { return mix_seed(seed, 5); }
  std::uint64_t split_seed() const { return mix_seed(seed, 6); }

  // Name understood by make_split ("original" maps to leave-one-out).
  std::string split_scenario() const;
};

// Parses key=value lines; '#' lines and blanks are ignored.
RunConfig parse_run_config(const std::string& text);

// File (optional), then overrides, then the ablation flag; folds the
// ablation into the effective graph mode and validates the result.
RunConfig load_run_config(const std::string& config_path,
                          const std::vector<std::string>& overrides,
                          const std::string& ablate_flag);

// Sorted key=value lines covering every key; doubles printed with %.17g.
std::string canonical_config(const RunConfig& config);
std::uint64_t config_hash(const RunConfig& config);
std::string config_hash_hex(const RunConfig& config);

// Key -> rendered value, for manifests and report echoes.
std::map<std::string, std::string> config_key_values(const RunConfig& config);

}  // namespace storec::cli
