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
#include <set>
#include <vector>

#include "storec/adam.hpp"
#include "storec/common.hpp"
#include "storec/relation_graph.hpp"
#include "storec/splits.hpp"
#include "storec/stochastic_model.hpp"
#include "storec/tape.hpp"

namespace storec::train {

struct TrainConfig {
  double learning_rate = 1e-3;
  int batch_size = 128;
  int max_epochs = 30;  // desk-scale default; hundreds at production scale
  int negatives_per_position = 1;
  std::uint64_t seed = 1;

  void validate() const;  // throws ConfigError
};

// Squared 2-Wasserstein distance between diagonal Gaussians:
// |mu_a - mu_b|^2 + sum_k (sqrt(sigma_a,k) - sqrt(sigma_b,k))^2.
double wasserstein_sq(const model::GaussianEmbedding& a,
                      const model::GaussianEmbedding& b);

// BPR over distances: -log sigmoid(d(neg) - d(pos)), evaluated stably.
// Targets are Gaussians read from the regularized tables.
double bpr_wasserstein_loss(const model::GaussianEmbedding& pref, int positive,
                            int negative, const model::FrozenTables& tables);

// Uniform draw without replacement from the intentions absent from
// `history`, restricted to [1, num_intentions].
std::vector<int> sample_negatives(const std::set<int>& history,
                                  int num_intentions, int count,
                                  std::uint64_t seed);

// Full per-user interaction sets; negatives are excluded against these.
using HistoryIndex = std::map<int, std::set<int>>;
HistoryIndex build_history(const data::Corpus& corpus);

// One training example staged for the batch loss: a compact sequence, the
// supervised positions with their targets, pre-drawn negatives, and dropout.
struct BatchExample {
  int user_id = 0;
  std::vector<int> ids;        // compact event ids
  int offset = 0;              // positional-row offset
  std::vector<int> pref_rows;  // supervised row index into the sequence
  std::vector<int> positives;  // target id per supervised row
  std::vector<int> negatives;  // sampled id per supervised row
  std::vector<model::BlockDropout> dropout;  // empty => no dropout
};

BatchExample make_batch_example(const data::LabeledSequence& row,
                                const HistoryIndex& history,
                                const model::ModelConfig& config,
                                int negatives_per_position,
                                std::uint64_t negative_seed, Rng* dropout_rng);

// Mean BPR loss over every supervised position in the batch. Regularized
// tables are computed once and shared by preferences and targets. Tracks the
// smallest activated covariance entry consumed by any distance when
// `min_sigma` is non-null.
Var build_batch_loss(GradientTape& tape, const model::ModelVars& vars,
                     const model::ModelConfig& config, const Matrix& a_norm,
                     const std::vector<BatchExample>& batch,
                     double* min_sigma);

struct EpochStats {
  int epoch = 0;
  double mean_loss = 0.0;
  double grad_norm = 0.0;  // mean over batches of the global gradient norm
  double seconds = 0.0;
  double min_sigma = 0.0;  // smallest covariance entry seen by a distance
  int positions = 0;       // supervised positions contributing to the mean
};

// One pass over the training rows: shuffled batches, one Adam step per
// batch. The Adam instance carries the learning rate and persists moments
// across epochs. Batch order, negatives, and dropout derive from
// (seed, epoch). A non-finite loss aborts with a diagnostic naming the
// offending batch.
EpochStats train_epoch(model::ModelState& state, Adam& adam,
                       const std::vector<data::LabeledSequence>& rows,
                       const HistoryIndex& history,
                       const graph::RelationGraph& graph,
                       const TrainConfig& config, int epoch);

}  // namespace storec::train
