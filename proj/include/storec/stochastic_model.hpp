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
#include <string>
#include <vector>

#include "storec/common.hpp"
#include "storec/relation_graph.hpp"
#include "storec/tape.hpp"

namespace storec::model {

// A diagonal Gaussian over the embedding space.
struct GaussianEmbedding {
  Vector mean;
  Vector cov_diag;  // strictly positive
};

// Elementwise activation applied between GCN propagation layers.
enum class GcnActivation { kLinear, kElu, kRelu };

GcnActivation gcn_activation_from_string(const std::string& name);
std::string to_string(GcnActivation act);

struct ModelConfig {
  int num_intentions = 500;  // M; intention tables carry M+1 rows, row 0 pads
  int d = 64;
  int max_len = 50;  // L
  int gcn_layers = 1;
  GcnActivation gcn_activation = GcnActivation::kLinear;
  int num_blocks = 2;
  double dropout = 0.2;
  double init_scale = 0.1;
  std::uint64_t seed = 1;
  bool disable_graph_regularizer = false;  // "no-gr": tables bypass the GCN
  bool deterministic_embeddings = false;   // "no-sr": every variance pinned to 1

  void validate() const;  // throws ConfigError
  std::string to_json() const;
  static ModelConfig from_json(const std::string& text);
};

// One attention + feed-forward stack; mean and covariance branches each own
// a disjoint copy.
struct BranchParams {
  Matrix wq, wk, wv;  // d x d projections
  Matrix w1, w2;      // d x d position-wise FFN
  Matrix b1, b2;      // 1 x d biases
};

struct BlockParams {
  BranchParams mu;
  BranchParams sigma;
};

// All trainable state. Matrices are mutated in place by the optimizer;
// a copy is a frozen snapshot.
struct ModelState {
  ModelConfig config;
  Matrix t_mu, t_sigma;  // (M+1) x d intention tables, row 0 is padding
  Matrix p_mu, p_sigma;  // L x d positional tables
  std::vector<Matrix> gcn_w;        // gcn_layers matrices, each 2d x 2d
  std::vector<BlockParams> blocks;  // num_blocks

  // Fixed parameter order shared by the optimizer, the tape staging below,
  // and the checkpoint format.
  std::vector<Matrix*> parameters();
  std::vector<const Matrix*> parameters() const;
  std::vector<std::string> parameter_names() const;
};

ModelState init_model(const ModelConfig& config);

// elu(x) + 1: strictly positive for every finite x (exp(x) on the negative
// side, so large negative inputs do not round the variance to zero).
double covariance_activation(double x);
Matrix covariance_activation(const Matrix& raw);

// Non-padding suffix of a left-padded input; interior padding is rejected.
struct CompactSequence {
  std::vector<int> ids;  // intention ids in order, all non-zero
  int offset = 0;        // index of the first event in the padded input
};

CompactSequence compact_sequence(const std::vector<int>& padded);

// ---------------------------------------------------------------------------
// Tape-side forward pass. The same staging is used for training (parameters)
// and inference (constants), so both paths compute bit-identical values.

struct BranchVars {
  Var wq, wk, wv, w1, w2, b1, b2;
};

struct BlockVars {
  BranchVars mu;
  BranchVars sigma;
};

struct ModelVars {
  Var t_mu, t_sigma, p_mu, p_sigma;
  std::vector<Var> gcn_w;
  std::vector<BlockVars> blocks;
  std::vector<Var> flat;  // same order as ModelState::parameters()
};

// Groups a flat Var list (in ModelState::parameters() order) into named
// handles. Throws ContractViolation when the count disagrees with `config`.
ModelVars group_parameters(const std::vector<Var>& flat,
                           const ModelConfig& config);

// Records every parameter on the tape, as trainable leaves or constants.
ModelVars stage_parameters(GradientTape& tape, const ModelState& state,
                           bool trainable);

struct TableVars {
  Var mu;         // (M+1) x d
  Var sigma_raw;  // (M+1) x d, pre-activation
};

// GCN propagation over the concatenated tables: X(0) = Tmu || Tsigma,
// X(l) = act(A X(l-1) W(l-1)). Row 0 (padding) bypasses propagation and is
// passed through unchanged. With `disabled`, returns the raw tables untouched.
TableVars regularize_tables_tape(GradientTape& tape, Var t_mu, Var t_sigma,
                                 const Matrix& a_norm,
                                 const std::vector<Var>& weights,
                                 GcnActivation activation, bool disabled);

// Per-block dropout masks (entries 0 or 1/(1-p)); empty matrices disable
// dropout for that sub-layer.
struct BlockDropout {
  Matrix att_mu, ffn_mu, att_sigma, ffn_sigma;
};

std::vector<BlockDropout> sample_dropout(Rng& rng, int n, int d, int blocks,
                                         double rate);

struct SequenceVars {
  Var mu;         // n x d preference means, one row per event
  Var sigma_act;  // n x d activated variances; invalid when variances pinned
};

// Full dual-Transformer forward over one compact sequence (no padding rows).
// `ids` are intention ids in [1, M]; `offset` selects positional rows
// [offset, offset+n). `dropout` may be null (inference) or sized num_blocks.
SequenceVars forward_sequence_tape(GradientTape& tape, const ModelVars& vars,
                                   const TableVars& tables,
                                   const ModelConfig& config,
                                   const std::vector<int>& ids, int offset,
                                   const std::vector<BlockDropout>* dropout);

// ---------------------------------------------------------------------------
// Value-side API.

struct RegularizedTables {
  Matrix mu;         // (M+1) x d
  Matrix sigma_raw;  // (M+1) x d, pre-activation
};

// Free-standing GCN propagation used by tests; `a_norm` is (M+1)x(M+1).
RegularizedTables regularize_tables(const Matrix& t_mu, const Matrix& t_sigma,
                                    const Matrix& a_norm,
                                    const std::vector<Matrix>& weights,
                                    GcnActivation activation);
// Applies the model's own graph/weights/flags.
RegularizedTables regularize_tables(const ModelState& state,
                                    const graph::RelationGraph& graph);

// Attention mask: position t may attend to j iff j <= t and j is either a
// real event or t itself (padding rows attend only to themselves).
Matrix causal_mask(const std::vector<int>& ids);

struct SequenceEmbedding {
  std::vector<int> ids;  // compact non-padding ids, in order
  int offset = 0;        // first non-padding position in the padded input
  Matrix mu;             // n x d
  Matrix sigma_raw;      // n x d
};

// Table lookup plus positional rows over the non-padding suffix of `padded`.
SequenceEmbedding embed_sequence(const std::vector<int>& padded,
                                 const Matrix& that_mu,
                                 const Matrix& that_sigma,
                                 const Matrix& p_mu, const Matrix& p_sigma);

struct AttentionTrace {
  Matrix probs_mu, probs_sigma;      // attention matrices
  Matrix context_mu, context_sigma;  // probs * V, before FFN / residual
};

// One dual post-norm block on explicit inputs; used by tests. `allowed` is
// the 0/1 attention mask.
std::pair<Matrix, Matrix> dual_attention_block(const Matrix& e_mu,
                                               const Matrix& e_sigma,
                                               const BlockParams& params,
                                               const Matrix& allowed,
                                               AttentionTrace* trace = nullptr);

// Regularized tables with the covariance activation applied once, shared
// across many sequence forwards of a frozen model.
struct FrozenTables {
  Matrix mu;         // (M+1) x d
  Matrix sigma_raw;  // (M+1) x d
  Matrix sigma_act;  // (M+1) x d, strictly positive rows 1..M
};

FrozenTables freeze_tables(const ModelState& state,
                           const graph::RelationGraph& graph);

struct Preference {
  std::vector<int> positions;  // indices into the padded input, ascending
  Matrix mu;                   // n x d
  Matrix sigma;                // n x d activated variances, strictly positive
};

// Per-position preference Gaussians at every non-padding position.
Preference infer_preference(const std::vector<int>& padded,
                            const ModelState& state,
                            const FrozenTables& tables);
Preference infer_preference(const std::vector<int>& padded,
                            const ModelState& state,
                            const graph::RelationGraph& graph);

GaussianEmbedding table_gaussian(const FrozenTables& tables, int id);

// ---------------------------------------------------------------------------
// Checkpoint: versioned single file with a JSON header (config echo, hashes,
// selection metadata, tensor shapes) followed by raw little-endian float64.

struct CheckpointMeta {
  std::uint64_t config_hash = 0;
  std::uint64_t graph_hash = 0;
  int best_epoch = -1;
  double val_ndcg10 = 0.0;
};

void save_checkpoint(const std::string& path, const ModelState& state,
                     const CheckpointMeta& meta);

struct LoadedCheckpoint {
  ModelState state;
  CheckpointMeta meta;
};

LoadedCheckpoint load_checkpoint(const std::string& path);

}  // namespace storec::model
