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

#include "storec/stochastic_model.hpp"

#include <cmath>
#include <cstdio>
#include <vector>

#include <doctest.h>

#include "storec/relation_graph.hpp"

namespace storec::model {
namespace {

Matrix random_matrix(Rng& rng, int rows, int cols, double scale = 1.0) {
  Matrix m(rows, cols);
  for (int i = 0; i < rows; ++i) {
    for (int j = 0; j < cols; ++j) m(i, j) = scale * rng.normal();
  }
  return m;
}

ModelConfig tiny_config() {
  ModelConfig c;
  c.num_intentions = 6;
  c.d = 4;
  c.max_len = 5;
  c.gcn_layers = 1;
  c.num_blocks = 2;
  c.dropout = 0.0;
  c.seed = 7;
  return c;
}

Matrix softmax_rows_reference(const Matrix& scores) {
  Matrix out = scores;
  for (int i = 0; i < out.rows(); ++i) {
    const double mx = out.row(i).maxCoeff();
    out.row(i) = (out.row(i).array() - mx).exp();
    out.row(i) /= out.row(i).sum();
  }
  return out;
}

TEST_CASE("covariance activation is elu(x)+1 and strictly positive") {
  CHECK(covariance_activation(0.0) == doctest::Approx(1.0));
  CHECK(covariance_activation(2.0) == doctest::Approx(3.0));
  CHECK(covariance_activation(-20.0) == doctest::Approx(std::exp(-20.0)));
  // A literal elu(x)+1 rounds to zero near x = -40; the fused form must not.
  CHECK(covariance_activation(-40.0) > 0.0);
  CHECK(covariance_activation(-700.0) > 0.0);
  Rng rng(11);
  Matrix raw = random_matrix(rng, 8, 8, 10.0);
  Matrix act = covariance_activation(raw);
  CHECK(act.minCoeff() > 0.0);
  for (int i = 0; i < raw.size(); ++i) {
    const double x = raw.reshaped()(i);
    const double manual = (x > 0 ? x : std::expm1(x)) + 1.0;
    CHECK(act.reshaped()(i) == doctest::Approx(manual).epsilon(1e-12));
  }
}

TEST_CASE("regularize_tables with identity graph and weights is bitwise") {
  Rng rng(3);
  const int m1 = 9, d = 5;
  Matrix t_mu = random_matrix(rng, m1, d);
  Matrix t_sigma = random_matrix(rng, m1, d);
  RegularizedTables out = regularize_tables(
      t_mu, t_sigma, Matrix::Identity(m1, m1),
      {Matrix::Identity(2 * d, 2 * d)}, GcnActivation::kLinear);
  CHECK((out.mu.array() == t_mu.array()).all());
  CHECK((out.sigma_raw.array() == t_sigma.array()).all());
}

TEST_CASE("two-node all-0.5 propagation averages the rows") {
  // Row 0 is padding; nodes 1..2 share adjacency weight 0.5 everywhere.
  const int d = 3;
  Matrix t_mu(3, d), t_sigma(3, d);
  t_mu << 0, 0, 0, 1, 2, 3, 5, 6, 7;
  t_sigma << 0, 0, 0, -1, 0, 1, 3, 3, 3;
  Matrix a = Matrix::Zero(3, 3);
  a(0, 0) = 1.0;
  a.block(1, 1, 2, 2).setConstant(0.5);
  RegularizedTables out =
      regularize_tables(t_mu, t_sigma, a, {Matrix::Identity(2 * d, 2 * d)},
                        GcnActivation::kLinear);
  for (int r = 1; r <= 2; ++r) {
    for (int c = 0; c < d; ++c) {
      CHECK(out.mu(r, c) ==
            doctest::Approx(0.5 * (t_mu(1, c) + t_mu(2, c))).epsilon(1e-15));
      CHECK(out.sigma_raw(r, c) ==
            doctest::Approx(0.5 * (t_sigma(1, c) + t_sigma(2, c)))
                .epsilon(1e-15));
    }
  }
  CHECK((out.mu.row(0).array() == 0.0).all());
}

TEST_CASE("random 3-node propagation matches dense re-evaluation") {
  Rng rng(17);
  const int m1 = 4, d = 6;
  Matrix t_mu = random_matrix(rng, m1, d);
  Matrix t_sigma = random_matrix(rng, m1, d);
  Matrix a = random_matrix(rng, m1, m1).cwiseAbs();
  Matrix w = random_matrix(rng, 2 * d, 2 * d, 0.5);
  for (GcnActivation act :
       {GcnActivation::kLinear, GcnActivation::kElu, GcnActivation::kRelu}) {
    RegularizedTables out = regularize_tables(t_mu, t_sigma, a, {w}, act);
    Matrix x0(m1, 2 * d);
    x0 << t_mu, t_sigma;
    Matrix x = a * x0 * w;
    if (act == GcnActivation::kElu) {
      x = x.unaryExpr([](double v) { return v > 0 ? v : std::expm1(v); });
    } else if (act == GcnActivation::kRelu) {
      x = x.cwiseMax(0.0);
    }
    x.row(0) = x0.row(0);  // padding bypass
    CHECK((out.mu - x.leftCols(d)).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((out.sigma_raw - x.rightCols(d)).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("regularize_tables rejects dimension mismatches") {
  Rng rng(5);
  Matrix t_mu = random_matrix(rng, 4, 3);
  Matrix t_sigma = random_matrix(rng, 4, 3);
  CHECK_THROWS_AS(regularize_tables(t_mu, t_sigma, Matrix::Identity(5, 5),
                                    {Matrix::Identity(6, 6)},
                                    GcnActivation::kLinear),
                  ContractViolation);
  CHECK_THROWS_AS(regularize_tables(t_mu, t_sigma, Matrix::Identity(4, 4),
                                    {Matrix::Identity(4, 4)},
                                    GcnActivation::kLinear),
                  ContractViolation);
}

TEST_CASE("embed_sequence with zero positional tables returns table rows") {
  Rng rng(23);
  const int m1 = 7, d = 4, len = 5;
  Matrix t_mu = random_matrix(rng, m1, d);
  Matrix t_sigma = random_matrix(rng, m1, d);
  Matrix zero = Matrix::Zero(len, d);
  SequenceEmbedding e =
      embed_sequence({0, 0, 3, 1, 6}, t_mu, t_sigma, zero, zero);
  CHECK(e.offset == 2);
  CHECK(e.ids == std::vector<int>{3, 1, 6});
  CHECK((e.mu.row(0) - t_mu.row(3)).cwiseAbs().maxCoeff() == 0.0);
  CHECK((e.mu.row(1) - t_mu.row(1)).cwiseAbs().maxCoeff() == 0.0);
  CHECK((e.sigma_raw.row(2) - t_sigma.row(6)).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("repeated intention differs exactly by the positional rows") {
  Rng rng(29);
  const int m1 = 5, d = 4, len = 6;
  Matrix t_mu = random_matrix(rng, m1, d);
  Matrix t_sigma = random_matrix(rng, m1, d);
  Matrix p_mu = random_matrix(rng, len, d);
  Matrix p_sigma = random_matrix(rng, len, d);
  SequenceEmbedding e =
      embed_sequence({0, 0, 0, 0, 2, 2}, t_mu, t_sigma, p_mu, p_sigma);
  Matrix diff = e.mu.row(1) - e.mu.row(0);
  Matrix pdiff = p_mu.row(5) - p_mu.row(4);
  CHECK((diff - pdiff).cwiseAbs().maxCoeff() < 1e-15);
}

TEST_CASE("embed_sequence matches a hand-assembled three-event lookup") {
  Rng rng(31);
  const int m1 = 10, d = 3, len = 4;
  Matrix t_mu = random_matrix(rng, m1, d);
  Matrix t_sigma = random_matrix(rng, m1, d);
  Matrix p_mu = random_matrix(rng, len, d);
  Matrix p_sigma = random_matrix(rng, len, d);
  std::vector<int> seq = {0, 4, 9, 4};
  SequenceEmbedding e = embed_sequence(seq, t_mu, t_sigma, p_mu, p_sigma);
  REQUIRE(e.ids.size() == 3);
  const int picks[3] = {4, 9, 4};
  for (int k = 0; k < 3; ++k) {
    Matrix want_mu = t_mu.row(picks[k]) + p_mu.row(k + 1);
    Matrix want_sg = t_sigma.row(picks[k]) + p_sigma.row(k + 1);
    CHECK((e.mu.row(k) - want_mu).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((e.sigma_raw.row(k) - want_sg).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("embed_sequence rejects out-of-range ids and interior padding") {
  Matrix t = Matrix::Zero(4, 2);
  Matrix p = Matrix::Zero(3, 2);
  CHECK_THROWS_AS(embed_sequence({1, 9, 2}, t, t, p, p), ContractViolation);
  CHECK_THROWS_AS(embed_sequence({1, 0, 2}, t, t, p, p), ContractViolation);
  CHECK_THROWS_AS(embed_sequence({1, 2, 3, 1}, t, t, p, p),
                  ContractViolation);
}

TEST_CASE("causal mask lets padding attend only to itself") {
  Matrix m = causal_mask({0, 0, 3, 5});
  Matrix want(4, 4);
  want << 1, 0, 0, 0,
          0, 1, 0, 0,
          0, 0, 1, 0,
          0, 0, 1, 1;
  CHECK((m - want).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("single valid position attends to itself with probability one") {
  Rng rng(41);
  const int d = 4;
  BlockParams params;
  for (auto* br : {&params.mu, &params.sigma}) {
    br->wq = random_matrix(rng, d, d);
    br->wk = random_matrix(rng, d, d);
    br->wv = random_matrix(rng, d, d);
    br->w1 = random_matrix(rng, d, d);
    br->b1 = random_matrix(rng, 1, d);
    br->w2 = random_matrix(rng, d, d);
    br->b2 = random_matrix(rng, 1, d);
  }
  Matrix e_mu = random_matrix(rng, 1, d);
  Matrix e_sigma = random_matrix(rng, 1, d);
  AttentionTrace trace;
  dual_attention_block(e_mu, e_sigma, params, Matrix::Ones(1, 1), &trace);
  CHECK(trace.probs_mu(0, 0) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(trace.probs_sigma(0, 0) == doctest::Approx(1.0).epsilon(1e-15));
  // The pre-FFN context is exactly that position's V row.
  Matrix v_mu = e_mu * params.mu.wv;
  CHECK((trace.context_mu - v_mu).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("identical key rows split attention evenly under the causal mask") {
  Rng rng(43);
  const int d = 4;
  BlockParams params;
  for (auto* br : {&params.mu, &params.sigma}) {
    br->wq = random_matrix(rng, d, d);
    br->wk = random_matrix(rng, d, d);
    br->wv = random_matrix(rng, d, d);
    br->w1 = random_matrix(rng, d, d);
    br->b1 = Matrix::Zero(1, d);
    br->w2 = random_matrix(rng, d, d);
    br->b2 = Matrix::Zero(1, d);
  }
  // Identical input rows give identical K rows, so position 2 splits 0.5/0.5.
  Matrix row = random_matrix(rng, 1, d);
  Matrix e(2, d);
  e << row, row;
  Matrix allowed(2, 2);
  allowed << 1, 0, 1, 1;
  AttentionTrace trace;
  dual_attention_block(e, e, params, allowed, &trace);
  CHECK(trace.probs_mu(1, 0) == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(trace.probs_mu(1, 1) == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(trace.probs_mu(0, 0) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(trace.probs_mu(0, 1) == 0.0);
}

TEST_CASE("attention matches an independent softmax evaluation") {
  Rng rng(47);
  const int n = 4, d = 6;
  BlockParams params;
  for (auto* br : {&params.mu, &params.sigma}) {
    br->wq = random_matrix(rng, d, d);
    br->wk = random_matrix(rng, d, d);
    br->wv = random_matrix(rng, d, d);
    br->w1 = random_matrix(rng, d, d);
    br->b1 = random_matrix(rng, 1, d);
    br->w2 = random_matrix(rng, d, d);
    br->b2 = random_matrix(rng, 1, d);
  }
  Matrix e_mu = random_matrix(rng, n, d);
  Matrix e_sigma = random_matrix(rng, n, d);
  AttentionTrace trace;
  dual_attention_block(e_mu, e_sigma, params, Matrix::Ones(n, n), &trace);

  for (int i = 0; i < n; ++i) {
    CHECK(trace.probs_mu.row(i).sum() == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(trace.probs_sigma.row(i).sum() ==
          doctest::Approx(1.0).epsilon(1e-12));
  }
  Matrix scores = (e_mu * params.mu.wq) * (e_mu * params.mu.wk).transpose() /
                  std::sqrt(static_cast<double>(d));
  Matrix want = softmax_rows_reference(scores);
  CHECK((trace.probs_mu - want).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("infer_preference returns positive variances per event position") {
  ModelConfig cfg = tiny_config();
  ModelState state = init_model(cfg);
  graph::RelationGraph g = graph::identity_graph(cfg.num_intentions);
  Preference p = infer_preference({0, 0, 2, 5, 1}, state, g);
  CHECK(p.positions == std::vector<int>{2, 3, 4});
  CHECK(p.mu.rows() == 3);
  CHECK(p.sigma.minCoeff() > 0.0);
  CHECK_THROWS_AS(infer_preference({0, 0, 0, 0, 0}, state, g),
                  ContractViolation);
}

TEST_CASE("inference is deterministic and causal bit-for-bit") {
  ModelConfig cfg = tiny_config();
  ModelState state = init_model(cfg);
  graph::RelationGraph g = graph::identity_graph(cfg.num_intentions);
  FrozenTables tables = freeze_tables(state, g);

  std::vector<int> seq = {0, 3, 1, 4, 2};
  Preference a = infer_preference(seq, state, tables);
  Preference b = infer_preference(seq, state, tables);
  CHECK((a.mu.array() == b.mu.array()).all());
  CHECK((a.sigma.array() == b.sigma.array()).all());

  // Perturb the final event: all earlier positions must be bit-identical.
  std::vector<int> perturbed = seq;
  perturbed.back() = 6;
  Preference c = infer_preference(perturbed, state, tables);
  CHECK((a.mu.topRows(3).array() == c.mu.topRows(3).array()).all());
  CHECK((a.sigma.topRows(3).array() == c.sigma.topRows(3).array()).all());
  CHECK((a.mu.row(3).array() != c.mu.row(3).array()).any());
}

TEST_CASE("disabling the regularizer equals identity propagation bitwise") {
  ModelConfig cfg = tiny_config();
  ModelState state = init_model(cfg);

  ModelState bypass = state;
  bypass.config.disable_graph_regularizer = true;
  // Identity graph, identity weights, linear activation on the other side.
  ModelState ident = state;
  ident.config.gcn_activation = GcnActivation::kLinear;
  for (auto& w : ident.gcn_w) w = Matrix::Identity(2 * cfg.d, 2 * cfg.d);
  graph::RelationGraph g = graph::identity_graph(cfg.num_intentions);

  std::vector<int> seq = {0, 2, 6, 1, 3};
  Preference a = infer_preference(seq, bypass, g);
  Preference b = infer_preference(seq, ident, g);
  CHECK((a.mu.array() == b.mu.array()).all());
  CHECK((a.sigma.array() == b.sigma.array()).all());
}

TEST_CASE("tape forward differentiates through tables and attention") {
  // Smoke-level: gradients reach the intention tables, the GCN weights, and
  // both branches. Exhaustive finite-difference checks live with the loss.
  ModelConfig cfg = tiny_config();
  cfg.num_blocks = 1;
  ModelState state = init_model(cfg);
  graph::RelationGraph g = graph::identity_graph(cfg.num_intentions);

  GradientTape tape;
  ModelVars vars = stage_parameters(tape, state, /*trainable=*/true);
  TableVars tables =
      regularize_tables_tape(tape, vars.t_mu, vars.t_sigma, g.normalized,
                             vars.gcn_w, cfg.gcn_activation, false);
  SequenceVars seq =
      forward_sequence_tape(tape, vars, tables, cfg, {2, 5, 3}, 2, nullptr);
  Var loss = tape.add(tape.sum(tape.square(seq.mu)),
                      tape.sum(tape.square(seq.sigma_act)));
  tape.backward(loss);
  CHECK(tape.grad(vars.t_mu).cwiseAbs().maxCoeff() > 0.0);
  CHECK(tape.grad(vars.t_sigma).cwiseAbs().maxCoeff() > 0.0);
  CHECK(tape.grad(vars.gcn_w[0]).cwiseAbs().maxCoeff() > 0.0);
  CHECK(tape.grad(vars.blocks[0].mu.wq).cwiseAbs().maxCoeff() > 0.0);
  CHECK(tape.grad(vars.blocks[0].sigma.w2).cwiseAbs().maxCoeff() > 0.0);
  CHECK(tape.grad(vars.p_mu).cwiseAbs().maxCoeff() > 0.0);
}

TEST_CASE("dropout masks scale kept entries and zero dropped ones") {
  Rng rng(53);
  std::vector<BlockDropout> masks = sample_dropout(rng, 10, 8, 2, 0.2);
  REQUIRE(masks.size() == 2);
  int zeros = 0, keeps = 0;
  for (const auto& b : masks) {
    for (const Matrix* m : {&b.att_mu, &b.ffn_mu, &b.att_sigma, &b.ffn_sigma}) {
      REQUIRE(m->rows() == 10);
      for (int i = 0; i < m->size(); ++i) {
        const double v = m->reshaped()(i);
        if (v == 0.0) {
          ++zeros;
        } else {
          CHECK(v == doctest::Approx(1.25).epsilon(1e-15));
          ++keeps;
        }
      }
    }
  }
  CHECK(zeros > 0);
  CHECK(keeps > zeros);
  std::vector<BlockDropout> off = sample_dropout(rng, 10, 8, 2, 0.0);
  CHECK(off[0].att_mu.size() == 0);
}

TEST_CASE("no-sr ablation pins every variance to one") {
  ModelConfig cfg = tiny_config();
  cfg.deterministic_embeddings = true;
  ModelState state = init_model(cfg);
  CHECK(state.t_sigma.cwiseAbs().maxCoeff() == 0.0);
  graph::RelationGraph g = graph::identity_graph(cfg.num_intentions);
  Preference p = infer_preference({0, 1, 2, 3, 4}, state, g);
  CHECK((p.sigma.array() == 1.0).all());
  FrozenTables t = freeze_tables(state, g);
  CHECK((t.sigma_act.array() == 1.0).all());
}

TEST_CASE("checkpoint round trip preserves parameters and metadata") {
  ModelConfig cfg = tiny_config();
  cfg.gcn_activation = GcnActivation::kElu;
  ModelState state = init_model(cfg);
  state.t_mu(3, 1) = 0.123456789012345;
  CheckpointMeta meta;
  meta.config_hash = 0xabcdef0123456789ULL;
  meta.graph_hash = 0x1122334455667788ULL;
  meta.best_epoch = 17;
  meta.val_ndcg10 = 0.4375;

  const std::string path = "ckpt_roundtrip.bin";
  save_checkpoint(path, state, meta);
  LoadedCheckpoint loaded = load_checkpoint(path);
  std::remove(path.c_str());

  CHECK(loaded.meta.config_hash == meta.config_hash);
  CHECK(loaded.meta.graph_hash == meta.graph_hash);
  CHECK(loaded.meta.best_epoch == 17);
  CHECK(loaded.meta.val_ndcg10 == doctest::Approx(0.4375));
  CHECK(loaded.state.config.gcn_activation == GcnActivation::kElu);
  std::vector<Matrix*> a = state.parameters();
  std::vector<Matrix*> b = loaded.state.parameters();
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK((a[i]->array() == b[i]->array()).all());
  }
}

TEST_CASE("checkpoint loader rejects tags and truncation") {
  ModelState state = init_model(tiny_config());
  const std::string path = "ckpt_reject.bin";
  save_checkpoint(path, state, CheckpointMeta{});
  std::string text = read_file(path);
  write_file(path, "WRONGTAG v9\n" + text.substr(text.find('\n') + 1));
  CHECK_THROWS_AS(load_checkpoint(path), IoError);
  write_file(path, text.substr(0, text.size() - 9));
  CHECK_THROWS_AS(load_checkpoint(path), IoError);
  std::remove(path.c_str());
  CHECK_THROWS_AS(load_checkpoint("no_such_checkpoint.bin"), IoError);
}

TEST_CASE("model config json survives a round trip") {
  ModelConfig cfg = tiny_config();
  cfg.dropout = 0.15;
  cfg.gcn_activation = GcnActivation::kRelu;
  cfg.deterministic_embeddings = true;
  ModelConfig back = ModelConfig::from_json(cfg.to_json());
  CHECK(back.num_intentions == cfg.num_intentions);
  CHECK(back.d == cfg.d);
  CHECK(back.max_len == cfg.max_len);
  CHECK(back.dropout == doctest::Approx(0.15));
  CHECK(back.gcn_activation == GcnActivation::kRelu);
  CHECK(back.deterministic_embeddings);
  CHECK_THROWS_AS(ModelConfig::from_json("{\"d\": 4}"), IoError);
}

TEST_CASE("parameter order is stable and named consistently") {
  ModelState state = init_model(tiny_config());
  std::vector<Matrix*> params = state.parameters();
  std::vector<std::string> names = state.parameter_names();
  REQUIRE(params.size() == names.size());
  // 4 tables + 1 GCN layer + 2 blocks x 2 branches x 7 tensors.
  CHECK(params.size() == 4 + 1 + 2 * 14);
  CHECK(names[0] == "t_mu");
  CHECK(names[4] == "gcn_w0");
  CHECK(names[5] == "block0.mu.wq");
  CHECK(names.back() == "block1.sigma.b2");
}

}  // namespace
}  // namespace storec::model
