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
#include <functional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "storec/objective.hpp"
#include "storec/splits.hpp"
#include "storec/stochastic_model.hpp"

namespace storec::eval {

struct RankResult {
  int rank = 0;       // 1-based position of the ground truth
  int shortfall = 0;  // how many of the 100 negatives could not be drawn
};

// Ranks the ground truth inside {gt} + up to 100 sampled negatives by
// ascending Wasserstein distance; ties break by ascending intention id.
RankResult rank_candidates(const model::GaussianEmbedding& pref,
                           int ground_truth, const std::set<int>& history,
                           const model::FrozenTables& tables,
                           std::uint64_t seed);

int hit_at_k(int rank, int k);
double ndcg_at_10(int rank);

struct EvalReport {
  double hit1 = 0.0, hit2 = 0.0, hit5 = 0.0, hit10 = 0.0, ndcg10 = 0.0;
  int users = 0;
  std::uint64_t seed = 0;
  std::string split;
  int shortfall = 0;  // summed across users
};

// (user id, rank) per evaluated row, in row order.
using RankLog = std::vector<std::pair<int, int>>;

using PreferenceFn =
    std::function<model::GaussianEmbedding(const data::LabeledSequence&)>;

// Candidate sets derive from (user, seed); metrics average over rows.
EvalReport evaluate_with(const PreferenceFn& preference,
                         const std::vector<data::LabeledSequence>& rows,
                         const train::HistoryIndex& history,
                         const model::FrozenTables& tables, std::uint64_t seed,
                         const std::string& split_name,
                         RankLog* ranks = nullptr);

// Scores each row's last-position preference Gaussian from the model.
EvalReport evaluate(const model::ModelState& state,
                    const graph::RelationGraph& graph,
                    const std::vector<data::LabeledSequence>& rows,
                    const train::HistoryIndex& history, std::uint64_t seed,
                    const std::string& split_name, RankLog* ranks = nullptr);

// Count-based Bayesian baseline: score = prior x in-sequence likelihood.
struct CbModel {
  int num_intentions = 0;
  std::vector<double> prior;  // index 0 unused
};

CbModel fit_cb_baseline(const std::vector<data::LabeledSequence>& train_rows,
                        int num_intentions);
double cb_score(const CbModel& cb, const std::vector<int>& inputs,
                int intention);
// Every intention ranked by descending score, ties by ascending id.
std::vector<int> cb_baseline(const CbModel& cb,
                             const std::vector<int>& inputs);
EvalReport evaluate_cb(const CbModel& cb,
                       const std::vector<data::LabeledSequence>& rows,
                       const train::HistoryIndex& history, std::uint64_t seed,
                       const std::string& split_name, RankLog* ranks = nullptr);

// Mean average cosine distance between node rows; zero rows are skipped and
// counted. Low values indicate over-smoothing.
double mad_diagnostic(const Matrix& representations, int* skipped = nullptr);

// Concatenated mean/covariance node rows after `depth` propagation hops.
// Hops beyond the trained stack propagate with identity weights and linear
// activation; the padding row is excluded from the result.
Matrix node_representations(const model::ModelState& state,
                            const graph::RelationGraph& graph, int depth);

// Training with model selection on validation NDCG@10.
struct TrainRun {
  model::ModelState best_state;
  int best_epoch = -1;
  double best_val_ndcg = 0.0;
  std::vector<train::EpochStats> epochs;
  std::vector<double> val_ndcg;  // per epoch, same index as `epochs`
};

TrainRun run_training(const model::ModelState& init,
                      const std::vector<data::LabeledSequence>& train_rows,
                      const std::vector<data::LabeledSequence>& val_rows,
                      const train::HistoryIndex& history,
                      const graph::RelationGraph& graph,
                      const train::TrainConfig& config,
                      std::uint64_t eval_seed);

}  // namespace storec::eval
