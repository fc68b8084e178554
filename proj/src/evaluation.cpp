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

#include "storec/evaluation.hpp"

#include <algorithm>
#include <cmath>

#include "storec/adam.hpp"
#include "storec/common.hpp"

namespace storec::eval {
namespace {

constexpr int kNegatives = 100;

const std::set<int>& history_of(const train::HistoryIndex& history, int user) {
  static const std::set<int> kEmpty;
  auto it = history.find(user);
  return it == history.end() ? kEmpty : it->second;
}

struct Candidates {
  std::vector<int> negatives;
  int shortfall = 0;
};

Candidates draw_candidates(int ground_truth, const std::set<int>& history,
                           int num_intentions, std::uint64_t seed) {
  std::set<int> excluded = history;
  excluded.insert(ground_truth);
  int taken = 0;
  for (int id : excluded) {
    if (id >= 1 && id <= num_intentions) ++taken;
  }
  const int count = std::min(kNegatives, num_intentions - taken);
  Candidates out;
  out.negatives = train::sample_negatives(excluded, num_intentions, count, seed);
  out.shortfall = kNegatives - count;
  return out;
}

using RankFn = std::function<RankResult(const data::LabeledSequence&)>;

EvalReport aggregate(const RankFn& rank_of,
                     const std::vector<data::LabeledSequence>& rows,
                     std::uint64_t seed, const std::string& split_name,
                     RankLog* ranks) {
  check(!rows.empty(), "evaluate: empty split '" + split_name + "'");
  if (ranks != nullptr) ranks->clear();
  EvalReport rep;
  rep.seed = seed;
  rep.split = split_name;
  for (const auto& row : rows) {
    check(row.label >= 1, "evaluate: row without a held-out label");
    const RankResult r = rank_of(row);
    rep.hit1 += hit_at_k(r.rank, 1);
    rep.hit2 += hit_at_k(r.rank, 2);
    rep.hit5 += hit_at_k(r.rank, 5);
    rep.hit10 += hit_at_k(r.rank, 10);
    rep.ndcg10 += ndcg_at_10(r.rank);
    rep.shortfall += r.shortfall;
    if (ranks != nullptr) ranks->emplace_back(row.user_id, r.rank);
  }
  rep.users = static_cast<int>(rows.size());
  rep.hit1 /= rep.users;
  rep.hit2 /= rep.users;
  rep.hit5 /= rep.users;
  rep.hit10 /= rep.users;
  rep.ndcg10 /= rep.users;
  return rep;
}

}  // namespace

RankResult rank_candidates(const model::GaussianEmbedding& pref,
                           int ground_truth, const std::set<int>& history,
                           const model::FrozenTables& tables,
                           std::uint64_t seed) {
  const int m = static_cast<int>(tables.mu.rows()) - 1;
  check(ground_truth >= 1 && ground_truth <= m,
        "rank_candidates: ground truth outside [1, M]");
  const Candidates cand = draw_candidates(ground_truth, history, m, seed);
  const double d_truth =
      train::wasserstein_sq(pref, model::table_gaussian(tables, ground_truth));
  int rank = 1;
  for (int c : cand.negatives) {
    const double d =
        train::wasserstein_sq(pref, model::table_gaussian(tables, c));
    if (d < d_truth || (d == d_truth && c < ground_truth)) ++rank;
  }
  return {rank, cand.shortfall};
}

int hit_at_k(int rank, int k) {
  check(rank >= 1 && k >= 1, "hit_at_k: rank and K are 1-based");
  return rank <= k ? 1 : 0;
}

double ndcg_at_10(int rank) {
  check(rank >= 1, "ndcg_at_10: rank is 1-based");
  if (rank > 10) return 0.0;
  return 1.0 / std::log2(static_cast<double>(rank) + 1.0);
}

EvalReport evaluate_with(const PreferenceFn& preference,
                         const std::vector<data::LabeledSequence>& rows,
                         const train::HistoryIndex& history,
                         const model::FrozenTables& tables, std::uint64_t seed,
                         const std::string& split_name, RankLog* ranks) {
  return aggregate(
      [&](const data::LabeledSequence& row) {
        const model::GaussianEmbedding pref = preference(row);
        return rank_candidates(
            pref, row.label, history_of(history, row.user_id), tables,
            mix_seed(seed, static_cast<std::uint64_t>(row.user_id)));
      },
      rows, seed, split_name, ranks);
}

EvalReport evaluate(const model::ModelState& state,
                    const graph::RelationGraph& graph,
                    const std::vector<data::LabeledSequence>& rows,
                    const train::HistoryIndex& history, std::uint64_t seed,
                    const std::string& split_name, RankLog* ranks) {
  const model::FrozenTables tables = model::freeze_tables(state, graph);
  const PreferenceFn last_position = [&](const data::LabeledSequence& row) {
    const model::Preference p = model::infer_preference(row.inputs, state, tables);
    const Eigen::Index last = p.mu.rows() - 1;
    model::GaussianEmbedding g;
    g.mean = p.mu.row(last).transpose();
    g.cov_diag = p.sigma.row(last).transpose();
    return g;
  };
  return evaluate_with(last_position, rows, history, tables, seed, split_name,
                       ranks);
}

CbModel fit_cb_baseline(const std::vector<data::LabeledSequence>& train_rows,
                        int num_intentions) {
  check(num_intentions >= 1, "fit_cb_baseline: num_intentions must be >= 1");
  CbModel cb;
  cb.num_intentions = num_intentions;
  cb.prior.assign(static_cast<std::size_t>(num_intentions) + 1, 0.0);
  double total = 0.0;
  for (const auto& row : train_rows) {
    for (int id : row.inputs) {
      if (id == 0) continue;
      check(id >= 1 && id <= num_intentions,
            "fit_cb_baseline: event id outside [1, M]");
      cb.prior[static_cast<std::size_t>(id)] += 1.0;
      total += 1.0;
    }
  }
  check(total > 0.0, "fit_cb_baseline: training rows carry no events");
  for (double& p : cb.prior) p /= total;
  return cb;
}

double cb_score(const CbModel& cb, const std::vector<int>& inputs,
                int intention) {
  check(intention >= 1 && intention <= cb.num_intentions,
        "cb_score: intention outside [1, M]");
  int events = 0;
  int matches = 0;
  for (int id : inputs) {
    if (id == 0) continue;
    ++events;
    if (id == intention) ++matches;
  }
  check(events > 0, "cb_score: sequence has no events");
  return cb.prior[static_cast<std::size_t>(intention)] *
         (static_cast<double>(matches) / events);
}

std::vector<int> cb_baseline(const CbModel& cb,
                             const std::vector<int>& inputs) {
  std::vector<int> order(static_cast<std::size_t>(cb.num_intentions));
  std::vector<double> score(order.size());
  for (int m = 1; m <= cb.num_intentions; ++m) {
    order[static_cast<std::size_t>(m - 1)] = m;
    score[static_cast<std::size_t>(m - 1)] = cb_score(cb, inputs, m);
  }
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    const double sa = score[static_cast<std::size_t>(a - 1)];
    const double sb = score[static_cast<std::size_t>(b - 1)];
    if (sa != sb) return sa > sb;
    return a < b;
  });
  return order;
}

EvalReport evaluate_cb(const CbModel& cb,
                       const std::vector<data::LabeledSequence>& rows,
                       const train::HistoryIndex& history, std::uint64_t seed,
                       const std::string& split_name, RankLog* ranks) {
  return aggregate(
      [&](const data::LabeledSequence& row) {
        const Candidates cand = draw_candidates(
            row.label, history_of(history, row.user_id), cb.num_intentions,
            mix_seed(seed, static_cast<std::uint64_t>(row.user_id)));
        const double s_truth = cb_score(cb, row.inputs, row.label);
        int rank = 1;
        for (int c : cand.negatives) {
          const double s = cb_score(cb, row.inputs, c);
          if (s > s_truth || (s == s_truth && c < row.label)) ++rank;
        }
        return RankResult{rank, cand.shortfall};
      },
      rows, seed, split_name, ranks);
}

double mad_diagnostic(const Matrix& representations, int* skipped) {
  check(representations.rows() >= 2, "mad_diagnostic: need at least 2 rows");
  std::vector<Eigen::Index> valid;
  for (Eigen::Index i = 0; i < representations.rows(); ++i) {
    if (representations.row(i).norm() > 0.0) valid.push_back(i);
  }
  if (skipped != nullptr) {
    *skipped = static_cast<int>(representations.rows()) -
               static_cast<int>(valid.size());
  }
  check(valid.size() >= 2, "mad_diagnostic: need at least 2 non-zero rows");
  Matrix unit(static_cast<Eigen::Index>(valid.size()), representations.cols());
  for (std::size_t i = 0; i < valid.size(); ++i) {
    unit.row(static_cast<Eigen::Index>(i)) =
        representations.row(valid[i]).normalized();
  }
  const Matrix gram = unit * unit.transpose();
  const Eigen::Index v = gram.rows();
  double total = 0.0;
  for (Eigen::Index i = 0; i < v; ++i) {
    // Subtract the computed self-similarity, not the ideal 1.0, so rounding
    // in the normalization cancels out of the off-diagonal average.
    const double others = gram.row(i).sum() - gram(i, i);
    total += 1.0 - others / static_cast<double>(v - 1);
  }
  return total / static_cast<double>(v);
}

Matrix node_representations(const model::ModelState& state,
                            const graph::RelationGraph& graph, int depth) {
  check(depth >= 1, "node_representations: depth must be >= 1");
  check(graph.normalized.rows() == state.t_mu.rows(),
        "node_representations: graph size does not match the tables");
  Matrix x(state.t_mu.rows(), state.t_mu.cols() + state.t_sigma.cols());
  x << state.t_mu, state.t_sigma;
  const Matrix pad_row = x.row(0);
  const int trained = static_cast<int>(state.gcn_w.size());
  for (int l = 0; l < depth; ++l) {
    Matrix next = graph.normalized * x;
    if (l < trained) {
      next = next * state.gcn_w[static_cast<std::size_t>(l)];
      if (state.config.gcn_activation == model::GcnActivation::kElu) {
        next = next.unaryExpr(
            [](double v) { return v > 0 ? v : std::expm1(v); });
      } else if (state.config.gcn_activation == model::GcnActivation::kRelu) {
        next = next.cwiseMax(0.0);
      }
    }
    next.row(0) = pad_row;  // padding bypasses propagation
    x = std::move(next);
  }
  return x.bottomRows(x.rows() - 1);
}

TrainRun run_training(const model::ModelState& init,
                      const std::vector<data::LabeledSequence>& train_rows,
                      const std::vector<data::LabeledSequence>& val_rows,
                      const train::HistoryIndex& history,
                      const graph::RelationGraph& graph,
                      const train::TrainConfig& config,
                      std::uint64_t eval_seed) {
  config.validate();
  check(!train_rows.empty(), "run_training: empty training split");
  check(!val_rows.empty(), "run_training: empty validation split");
  model::ModelState state = init;
  Adam adam(AdamConfig{.lr = config.learning_rate});
  TrainRun run;
  run.best_state = state;
  for (int epoch = 0; epoch < config.max_epochs; ++epoch) {
    run.epochs.push_back(train::train_epoch(state, adam, train_rows, history,
                                            graph, config, epoch));
    const EvalReport val =
        evaluate(state, graph, val_rows, history, eval_seed, "val");
    run.val_ndcg.push_back(val.ndcg10);
    // Strict improvement keeps the earliest epoch on ties.
    if (run.best_epoch < 0 || val.ndcg10 > run.best_val_ndcg) {
      run.best_state = state;
      run.best_epoch = epoch;
      run.best_val_ndcg = val.ndcg10;
    }
  }
  return run;
}

}  // namespace storec::eval
