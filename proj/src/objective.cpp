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

#include "storec/objective.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

namespace storec::train {

namespace {

constexpr std::uint64_t kEpochSalt = 0x45504f43ULL;  // "EPOC"

double stable_softplus(double x) {
  return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

void track_min(GradientTape& tape, Var activated, double* min_sigma) {
  if (min_sigma == nullptr) return;
  *min_sigma = std::min(*min_sigma, tape.value(activated).minCoeff());
}

}  // namespace

void TrainConfig::validate() const {
  if (!(learning_rate >= 0.0)) {
    throw ConfigError("train: learning_rate must be >= 0");
  }
  if (batch_size < 1) throw ConfigError("train: batch_size must be >= 1");
  if (max_epochs < 0) throw ConfigError("train: max_epochs must be >= 0");
  if (negatives_per_position < 1) {
    throw ConfigError("train: negatives_per_position must be >= 1");
  }
}

double wasserstein_sq(const model::GaussianEmbedding& a,
                      const model::GaussianEmbedding& b) {
  check(a.mean.size() == b.mean.size() &&
            a.cov_diag.size() == b.cov_diag.size() &&
            a.mean.size() == a.cov_diag.size(),
        "wasserstein_sq: dimension mismatch");
  check(a.cov_diag.minCoeff() > 0.0 && b.cov_diag.minCoeff() > 0.0,
        "wasserstein_sq: covariance entries must be strictly positive");
  const double mean_term = (a.mean - b.mean).squaredNorm();
  const double cov_term =
      (a.cov_diag.cwiseSqrt() - b.cov_diag.cwiseSqrt()).squaredNorm();
  return mean_term + cov_term;
}

double bpr_wasserstein_loss(const model::GaussianEmbedding& pref, int positive,
                            int negative, const model::FrozenTables& tables) {
  check(positive != negative, "bpr_wasserstein_loss: positive == negative");
  const double d_pos =
      wasserstein_sq(pref, model::table_gaussian(tables, positive));
  const double d_neg =
      wasserstein_sq(pref, model::table_gaussian(tables, negative));
  // -log sigmoid(d_neg - d_pos) = softplus(d_pos - d_neg).
  return stable_softplus(d_pos - d_neg);
}

std::vector<int> sample_negatives(const std::set<int>& history,
                                  int num_intentions, int count,
                                  std::uint64_t seed) {
  check(count >= 0, "sample_negatives: negative count requested");
  std::vector<int> pool;
  pool.reserve(num_intentions);
  for (int m = 1; m <= num_intentions; ++m) {
    if (history.count(m) == 0) pool.push_back(m);
  }
  check(static_cast<int>(pool.size()) >= count,
        "sample_negatives: candidate pool smaller than requested count");
  Rng rng(seed);
  std::vector<int> out;
  out.reserve(count);
  const int last = static_cast<int>(pool.size()) - 1;
  for (int i = 0; i < count; ++i) {
    const int j = rng.uniform_int(i, last);
    std::swap(pool[i], pool[j]);
    out.push_back(pool[i]);
  }
  return out;
}

HistoryIndex build_history(const data::Corpus& corpus) {
  HistoryIndex out;
  for (const data::Event& e : corpus) out[e.user_id].insert(e.intention_id);
  return out;
}

BatchExample make_batch_example(const data::LabeledSequence& row,
                                const HistoryIndex& history,
                                const model::ModelConfig& config,
                                int negatives_per_position,
                                std::uint64_t negative_seed, Rng* dropout_rng) {
  BatchExample ex;
  ex.user_id = row.user_id;
  model::CompactSequence c = model::compact_sequence(row.inputs);
  ex.ids = std::move(c.ids);
  ex.offset = c.offset;
  check(!ex.ids.empty(), "train: sequence has no events");
  check(row.targets.size() == row.inputs.size(),
        "train: row targets misaligned with inputs");

  for (std::size_t k = 0; k < ex.ids.size(); ++k) {
    const int target = row.targets[ex.offset + k];
    if (target == 0) continue;
    for (int r = 0; r < negatives_per_position; ++r) {
      ex.pref_rows.push_back(static_cast<int>(k));
      ex.positives.push_back(target);
    }
  }
  if (!ex.positives.empty()) {
    auto it = history.find(row.user_id);
    check(it != history.end(), "train: user missing from history index");
    ex.negatives = sample_negatives(it->second, config.num_intentions,
                                    static_cast<int>(ex.positives.size()),
                                    negative_seed);
  }
  if (dropout_rng != nullptr && config.dropout > 0.0) {
    ex.dropout = model::sample_dropout(*dropout_rng,
                                       static_cast<int>(ex.ids.size()),
                                       config.d, config.num_blocks,
                                       config.dropout);
  }
  return ex;
}

Var build_batch_loss(GradientTape& tape, const model::ModelVars& vars,
                     const model::ModelConfig& config, const Matrix& a_norm,
                     const std::vector<BatchExample>& batch,
                     double* min_sigma) {
  model::TableVars tables = model::regularize_tables_tape(
      tape, vars.t_mu, vars.t_sigma, a_norm, vars.gcn_w,
      config.gcn_activation, config.disable_graph_regularizer);
  const bool with_sigma = !config.deterministic_embeddings;

  std::vector<Var> sums;
  int total_rows = 0;
  for (const BatchExample& ex : batch) {
    if (ex.positives.empty()) continue;
    model::SequenceVars seq = model::forward_sequence_tape(
        tape, vars, tables, config, ex.ids, ex.offset,
        ex.dropout.empty() ? nullptr : &ex.dropout);

    Var pref_mu = tape.rows(seq.mu, ex.pref_rows);
    Var pos_mu = tape.rows(tables.mu, ex.positives);
    Var neg_mu = tape.rows(tables.mu, ex.negatives);
    Var d_pos = tape.row_sum(tape.square(tape.sub(pref_mu, pos_mu)));
    Var d_neg = tape.row_sum(tape.square(tape.sub(pref_mu, neg_mu)));
    if (with_sigma) {
      Var pref_sg = tape.rows(seq.sigma_act, ex.pref_rows);
      Var pos_sg = tape.elu1(tape.rows(tables.sigma_raw, ex.positives));
      Var neg_sg = tape.elu1(tape.rows(tables.sigma_raw, ex.negatives));
      track_min(tape, pref_sg, min_sigma);
      track_min(tape, pos_sg, min_sigma);
      track_min(tape, neg_sg, min_sigma);
      Var pref_sd = tape.sqrt(pref_sg);
      d_pos = tape.add(d_pos, tape.row_sum(tape.square(
                                  tape.sub(pref_sd, tape.sqrt(pos_sg)))));
      d_neg = tape.add(d_neg, tape.row_sum(tape.square(
                                  tape.sub(pref_sd, tape.sqrt(neg_sg)))));
    }
    sums.push_back(tape.sum(tape.softplus(tape.sub(d_pos, d_neg))));
    total_rows += static_cast<int>(ex.positives.size());
  }
  check(total_rows > 0, "train: batch has no supervised positions");
  return tape.scale(tape.add_n(sums), 1.0 / total_rows);
}

EpochStats train_epoch(model::ModelState& state, Adam& adam,
                       const std::vector<data::LabeledSequence>& rows,
                       const HistoryIndex& history,
                       const graph::RelationGraph& graph,
                       const TrainConfig& config, int epoch) {
  config.validate();
  check(!rows.empty(), "train_epoch: no training rows");
  const auto start = std::chrono::steady_clock::now();

  Rng rng(mix_seed(mix_seed(config.seed, kEpochSalt),
                   static_cast<std::uint64_t>(epoch)));
  std::vector<int> order(rows.size());
  std::iota(order.begin(), order.end(), 0);
  rng.shuffle(order);

  EpochStats stats;
  stats.epoch = epoch;
  stats.min_sigma = std::numeric_limits<double>::infinity();
  double loss_weighted = 0.0;
  double grad_norm_sum = 0.0;
  int batches = 0;

  std::vector<Matrix*> params = state.parameters();
  for (std::size_t begin = 0; begin < order.size();
       begin += config.batch_size) {
    const std::size_t end =
        std::min(order.size(), begin + config.batch_size);
    std::vector<BatchExample> batch;
    batch.reserve(end - begin);
    int batch_rows = 0;
    for (std::size_t i = begin; i < end; ++i) {
      BatchExample ex =
          make_batch_example(rows[order[i]], history, state.config,
                             config.negatives_per_position, rng.next(), &rng);
      batch_rows += static_cast<int>(ex.positives.size());
      batch.push_back(std::move(ex));
    }
    if (batch_rows == 0) continue;

    try {
      GradientTape tape;
      model::ModelVars vars =
          model::stage_parameters(tape, state, /*trainable=*/true);
      Var loss = build_batch_loss(tape, vars, state.config, graph.normalized,
                                  batch, &stats.min_sigma);
      tape.backward(loss);

      std::vector<const Matrix*> grads;
      grads.reserve(vars.flat.size());
      double sq_norm = 0.0;
      for (Var v : vars.flat) {
        const Matrix& g = tape.grad(v);
        sq_norm += g.squaredNorm();
        grads.push_back(&g);
      }
      adam.step(params, grads);

      loss_weighted += tape.scalar(loss) * batch_rows;
      stats.positions += batch_rows;
      grad_norm_sum += std::sqrt(sq_norm);
      ++batches;
    } catch (const NumericError& e) {
      std::ostringstream diag;
      diag << e.what() << " [epoch " << epoch << ", batch " << batches
           << ", users";
      for (const BatchExample& ex : batch) diag << ' ' << ex.user_id;
      diag << ']';
      throw NumericError(diag.str());
    }
  }
  check(stats.positions > 0, "train_epoch: no supervised positions");
  // With variances pinned to 1, the distances consume the constant 1.
  if (state.config.deterministic_embeddings) stats.min_sigma = 1.0;
  stats.mean_loss = loss_weighted / stats.positions;
  stats.grad_norm = grad_norm_sum / batches;
  stats.seconds = std::chrono::duration<double>(
                      std::chrono::steady_clock::now() - start)
                      .count();
  return stats;
}

}  // namespace storec::train
