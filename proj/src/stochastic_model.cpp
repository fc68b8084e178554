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
#include <cstring>
#include <utility>

#include <json.hpp>

namespace storec::model {

namespace {

constexpr std::uint64_t kInitSalt = 0x4d4f444cULL;  // "MODL"
constexpr const char* kCheckpointTag = "STORECCKPT v1";

Matrix gaussian(Rng& rng, int rows, int cols, double scale) {
  Matrix m(rows, cols);
  for (int i = 0; i < rows; ++i) {
    for (int j = 0; j < cols; ++j) m(i, j) = scale * rng.normal();
  }
  return m;
}

// Parameter order shared by the optimizer, tape staging, and checkpoints.
template <typename State, typename Ptr>
void collect_parameters(State& s, std::vector<Ptr>& out) {
  out.push_back(&s.t_mu);
  out.push_back(&s.t_sigma);
  out.push_back(&s.p_mu);
  out.push_back(&s.p_sigma);
  for (auto& w : s.gcn_w) out.push_back(&w);
  for (auto& b : s.blocks) {
    for (auto* br : {&b.mu, &b.sigma}) {
      out.push_back(&br->wq);
      out.push_back(&br->wk);
      out.push_back(&br->wv);
      out.push_back(&br->w1);
      out.push_back(&br->b1);
      out.push_back(&br->w2);
      out.push_back(&br->b2);
    }
  }
}

Matrix lower_triangular_ones(int n) {
  Matrix m = Matrix::Zero(n, n);
  for (int t = 0; t < n; ++t) {
    for (int j = 0; j <= t; ++j) m(t, j) = 1.0;
  }
  return m;
}

struct BranchBlockVars {
  Var probs;
  Var context;  // probs * V, before the residual path
  Var out;
};

// One post-norm attention + FFN stack on compact rows.
BranchBlockVars branch_block(GradientTape& t, Var x, const BranchVars& p,
                             const Matrix& allowed, double inv_sqrt_d,
                             const Matrix* drop_att, const Matrix* drop_ffn) {
  BranchBlockVars r;
  Var q = t.matmul(x, p.wq);
  Var k = t.matmul(x, p.wk);
  Var v = t.matmul(x, p.wv);
  r.probs = t.softmax_rows_masked(t.scale(t.matmul(q, t.transpose(k)),
                                          inv_sqrt_d),
                                  allowed);
  r.context = t.matmul(r.probs, v);
  Var att = r.context;
  if (drop_att != nullptr && drop_att->size() > 0) {
    att = t.mul(att, t.constant(*drop_att));
  }
  x = t.layer_norm_rows(t.add(x, att));
  Var h = t.elu(t.add_row_vector(t.matmul(x, p.w1), p.b1));
  h = t.add_row_vector(t.matmul(h, p.w2), p.b2);
  if (drop_ffn != nullptr && drop_ffn->size() > 0) {
    h = t.mul(h, t.constant(*drop_ffn));
  }
  r.out = t.layer_norm_rows(t.add(x, h));
  return r;
}

BranchVars stage_branch(GradientTape& tape, const BranchParams& p) {
  BranchVars v;
  v.wq = tape.constant(p.wq);
  v.wk = tape.constant(p.wk);
  v.wv = tape.constant(p.wv);
  v.w1 = tape.constant(p.w1);
  v.b1 = tape.constant(p.b1);
  v.w2 = tape.constant(p.w2);
  v.b2 = tape.constant(p.b2);
  return v;
}

}  // namespace

GcnActivation gcn_activation_from_string(const std::string& name) {
  if (name == "linear") return GcnActivation::kLinear;
  if (name == "elu") return GcnActivation::kElu;
  if (name == "relu") return GcnActivation::kRelu;
  throw ConfigError("unknown GCN activation: " + name);
}

std::string to_string(GcnActivation act) {
  switch (act) {
    case GcnActivation::kLinear: return "linear";
    case GcnActivation::kElu: return "elu";
    case GcnActivation::kRelu: return "relu";
  }
  throw ConfigError("invalid GCN activation value");
}

void ModelConfig::validate() const {
  if (num_intentions < 1) throw ConfigError("model: num_intentions must be >= 1");
  if (d < 1) throw ConfigError("model: d must be >= 1");
  if (max_len < 1) throw ConfigError("model: max_len must be >= 1");
  if (gcn_layers < 1) throw ConfigError("model: gcn_layers must be >= 1");
  if (num_blocks < 1) throw ConfigError("model: num_blocks must be >= 1");
  if (!(dropout >= 0.0 && dropout < 1.0)) {
    throw ConfigError("model: dropout must be in [0, 1)");
  }
  if (!(init_scale > 0.0)) throw ConfigError("model: init_scale must be > 0");
}

std::string ModelConfig::to_json() const {
  nlohmann::json j;
  j["num_intentions"] = num_intentions;
  j["d"] = d;
  j["max_len"] = max_len;
  j["gcn_layers"] = gcn_layers;
  j["gcn_activation"] = to_string(gcn_activation);
  j["num_blocks"] = num_blocks;
  j["dropout"] = dropout;
  j["init_scale"] = init_scale;
  j["seed"] = seed;
  j["disable_graph_regularizer"] = disable_graph_regularizer;
  j["deterministic_embeddings"] = deterministic_embeddings;
  return j.dump();
}

ModelConfig ModelConfig::from_json(const std::string& text) {
  nlohmann::json j = nlohmann::json::parse(text, nullptr, false);
  if (j.is_discarded() || !j.is_object()) {
    throw IoError("model config: malformed JSON");
  }
  ModelConfig c;
  try {
    c.num_intentions = j.at("num_intentions").get<int>();
    c.d = j.at("d").get<int>();
    c.max_len = j.at("max_len").get<int>();
    c.gcn_layers = j.at("gcn_layers").get<int>();
    c.gcn_activation =
        gcn_activation_from_string(j.at("gcn_activation").get<std::string>());
    c.num_blocks = j.at("num_blocks").get<int>();
    c.dropout = j.at("dropout").get<double>();
    c.init_scale = j.at("init_scale").get<double>();
    c.seed = j.at("seed").get<std::uint64_t>();
    c.disable_graph_regularizer = j.at("disable_graph_regularizer").get<bool>();
    c.deterministic_embeddings = j.at("deterministic_embeddings").get<bool>();
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("model config: ") + e.what());
  }
  c.validate();
  return c;
}

std::vector<Matrix*> ModelState::parameters() {
  std::vector<Matrix*> out;
  collect_parameters(*this, out);
  return out;
}

std::vector<const Matrix*> ModelState::parameters() const {
  std::vector<const Matrix*> out;
  collect_parameters(*this, out);
  return out;
}

std::vector<std::string> ModelState::parameter_names() const {
  std::vector<std::string> names = {"t_mu", "t_sigma", "p_mu", "p_sigma"};
  for (std::size_t l = 0; l < gcn_w.size(); ++l) {
    names.push_back("gcn_w" + std::to_string(l));
  }
  for (std::size_t b = 0; b < blocks.size(); ++b) {
    for (const char* branch : {"mu", "sigma"}) {
      for (const char* w : {"wq", "wk", "wv", "w1", "b1", "w2", "b2"}) {
        names.push_back("block" + std::to_string(b) + "." + branch + "." + w);
      }
    }
  }
  return names;
}

ModelState init_model(const ModelConfig& config) {
  config.validate();
  ModelState s;
  s.config = config;
  const int m1 = config.num_intentions + 1;
  const int d = config.d;
  Rng rng(mix_seed(config.seed, kInitSalt));

  s.t_mu = gaussian(rng, m1, d, config.init_scale);
  s.t_sigma = gaussian(rng, m1, d, config.init_scale);
  s.t_mu.row(0).setZero();
  s.t_sigma.row(0).setZero();
  s.p_mu = gaussian(rng, config.max_len, d, config.init_scale);
  s.p_sigma = gaussian(rng, config.max_len, d, config.init_scale);

  // Identity start: the regularizer begins as pure neighborhood averaging.
  s.gcn_w.assign(config.gcn_layers, Matrix::Identity(2 * d, 2 * d));

  const double proj_scale = 1.0 / std::sqrt(static_cast<double>(d));
  s.blocks.resize(config.num_blocks);
  for (auto& b : s.blocks) {
    for (auto* br : {&b.mu, &b.sigma}) {
      br->wq = gaussian(rng, d, d, proj_scale);
      br->wk = gaussian(rng, d, d, proj_scale);
      br->wv = gaussian(rng, d, d, proj_scale);
      br->w1 = gaussian(rng, d, d, proj_scale);
      br->b1 = Matrix::Zero(1, d);
      br->w2 = gaussian(rng, d, d, proj_scale);
      br->b2 = Matrix::Zero(1, d);
    }
  }

  if (config.deterministic_embeddings) {
    // Variances are pinned to 1; the covariance pathway never runs and its
    // parameters stay at zero (no gradient ever reaches them).
    s.t_sigma.setZero();
    s.p_sigma.setZero();
    for (auto& b : s.blocks) {
      for (Matrix* m : {&b.sigma.wq, &b.sigma.wk, &b.sigma.wv, &b.sigma.w1,
                        &b.sigma.b1, &b.sigma.w2, &b.sigma.b2}) {
        m->setZero();
      }
    }
  }
  return s;
}

double covariance_activation(double x) {
  return x > 0 ? x + 1.0 : std::exp(x);
}

Matrix covariance_activation(const Matrix& raw) {
  return raw.unaryExpr([](double x) { return covariance_activation(x); });
}

CompactSequence compact_sequence(const std::vector<int>& padded) {
  CompactSequence out;
  std::size_t first = 0;
  while (first < padded.size() && padded[first] == 0) ++first;
  out.offset = static_cast<int>(first);
  for (std::size_t i = first; i < padded.size(); ++i) {
    check(padded[i] != 0, "compact_sequence: interior padding position");
    out.ids.push_back(padded[i]);
  }
  return out;
}

ModelVars group_parameters(const std::vector<Var>& flat,
                           const ModelConfig& config) {
  const std::size_t expected =
      4 + static_cast<std::size_t>(config.gcn_layers) +
      static_cast<std::size_t>(config.num_blocks) * 14;
  check(flat.size() == expected, "group_parameters: parameter count mismatch");
  ModelVars v;
  v.flat = flat;
  std::size_t i = 0;
  v.t_mu = flat[i++];
  v.t_sigma = flat[i++];
  v.p_mu = flat[i++];
  v.p_sigma = flat[i++];
  v.gcn_w.assign(flat.begin() + i, flat.begin() + i + config.gcn_layers);
  i += config.gcn_layers;
  v.blocks.resize(config.num_blocks);
  for (auto& b : v.blocks) {
    for (auto* br : {&b.mu, &b.sigma}) {
      br->wq = flat[i++];
      br->wk = flat[i++];
      br->wv = flat[i++];
      br->w1 = flat[i++];
      br->b1 = flat[i++];
      br->w2 = flat[i++];
      br->b2 = flat[i++];
    }
  }
  return v;
}

ModelVars stage_parameters(GradientTape& tape, const ModelState& state,
                           bool trainable) {
  std::vector<Var> flat;
  for (const Matrix* p : state.parameters()) {
    flat.push_back(trainable ? tape.parameter(*p) : tape.constant(*p));
  }
  return group_parameters(flat, state.config);
}

TableVars regularize_tables_tape(GradientTape& tape, Var t_mu, Var t_sigma,
                                 const Matrix& a_norm,
                                 const std::vector<Var>& weights,
                                 GcnActivation activation, bool disabled) {
  if (disabled) return {t_mu, t_sigma};
  const Matrix& mu = tape.value(t_mu);
  const int m1 = static_cast<int>(mu.rows());
  const int d = static_cast<int>(mu.cols());
  check(tape.value(t_sigma).rows() == m1 && tape.value(t_sigma).cols() == d,
        "regularize_tables: mean/covariance table shape mismatch");
  check(a_norm.rows() == m1 && a_norm.cols() == m1,
        "regularize_tables: graph node count must match table rows");
  for (Var w : weights) {
    check(tape.value(w).rows() == 2 * d && tape.value(w).cols() == 2 * d,
          "regularize_tables: layer weights must be 2d x 2d");
  }

  Var x0 = tape.concat_cols(t_mu, t_sigma);
  Var a = tape.constant(a_norm);
  Var x = x0;
  for (Var w : weights) {
    x = tape.matmul(tape.matmul(a, x), w);
    switch (activation) {
      case GcnActivation::kLinear: break;
      case GcnActivation::kElu: x = tape.elu(x); break;
      case GcnActivation::kRelu: x = tape.relu(x); break;
    }
  }
  // The padding row takes no part in propagation.
  Var out = tape.concat_rows(tape.slice_rows(x0, 0, 1),
                             tape.slice_rows(x, 1, m1 - 1));
  return {tape.slice_cols(out, 0, d), tape.slice_cols(out, d, d)};
}

std::vector<BlockDropout> sample_dropout(Rng& rng, int n, int d, int blocks,
                                         double rate) {
  std::vector<BlockDropout> out(blocks);
  if (rate <= 0.0) return out;
  const double keep = 1.0 / (1.0 - rate);
  auto mask = [&]() {
    Matrix m(n, d);
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < d; ++j) m(i, j) = rng.uniform() < rate ? 0.0 : keep;
    }
    return m;
  };
  for (auto& b : out) {
    b.att_mu = mask();
    b.ffn_mu = mask();
    b.att_sigma = mask();
    b.ffn_sigma = mask();
  }
  return out;
}

SequenceVars forward_sequence_tape(GradientTape& tape, const ModelVars& vars,
                                   const TableVars& tables,
                                   const ModelConfig& config,
                                   const std::vector<int>& ids, int offset,
                                   const std::vector<BlockDropout>* dropout) {
  const int n = static_cast<int>(ids.size());
  check(n >= 1, "forward: sequence has no events");
  check(offset >= 0 && offset + n <= config.max_len,
        "forward: sequence exceeds maximum length");
  for (int id : ids) {
    check(id >= 1 && id <= config.num_intentions,
          "forward: intention id out of table range");
  }
  check(dropout == nullptr ||
            static_cast<int>(dropout->size()) == config.num_blocks,
        "forward: dropout masks must cover every block");

  const Matrix allowed = lower_triangular_ones(n);
  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(config.d));
  const bool with_sigma = !config.deterministic_embeddings;

  Var e_mu = tape.add(tape.rows(tables.mu, ids),
                      tape.slice_rows(vars.p_mu, offset, n));
  Var e_sg;
  if (with_sigma) {
    e_sg = tape.add(tape.rows(tables.sigma_raw, ids),
                    tape.slice_rows(vars.p_sigma, offset, n));
  }
  for (int b = 0; b < config.num_blocks; ++b) {
    const BlockDropout* dm = dropout ? &(*dropout)[b] : nullptr;
    e_mu = branch_block(tape, e_mu, vars.blocks[b].mu, allowed, inv_sqrt_d,
                        dm ? &dm->att_mu : nullptr, dm ? &dm->ffn_mu : nullptr)
               .out;
    if (with_sigma) {
      e_sg = branch_block(tape, e_sg, vars.blocks[b].sigma, allowed,
                          inv_sqrt_d, dm ? &dm->att_sigma : nullptr,
                          dm ? &dm->ffn_sigma : nullptr)
                 .out;
    }
  }
  SequenceVars out;
  out.mu = e_mu;
  if (with_sigma) out.sigma_act = tape.elu1(e_sg);
  return out;
}

RegularizedTables regularize_tables(const Matrix& t_mu, const Matrix& t_sigma,
                                    const Matrix& a_norm,
                                    const std::vector<Matrix>& weights,
                                    GcnActivation activation) {
  GradientTape tape;
  std::vector<Var> ws;
  ws.reserve(weights.size());
  for (const Matrix& w : weights) ws.push_back(tape.constant(w));
  TableVars tv = regularize_tables_tape(tape, tape.constant(t_mu),
                                        tape.constant(t_sigma), a_norm, ws,
                                        activation, /*disabled=*/false);
  return {tape.value(tv.mu), tape.value(tv.sigma_raw)};
}

RegularizedTables regularize_tables(const ModelState& state,
                                    const graph::RelationGraph& graph) {
  if (state.config.disable_graph_regularizer) {
    return {state.t_mu, state.t_sigma};
  }
  return regularize_tables(state.t_mu, state.t_sigma, graph.normalized,
                           state.gcn_w, state.config.gcn_activation);
}

Matrix causal_mask(const std::vector<int>& ids) {
  const int n = static_cast<int>(ids.size());
  check(n >= 1, "causal_mask: empty sequence");
  Matrix m = Matrix::Zero(n, n);
  for (int t = 0; t < n; ++t) {
    for (int j = 0; j <= t; ++j) {
      if (ids[j] != 0 || j == t) m(t, j) = 1.0;
    }
  }
  return m;
}

SequenceEmbedding embed_sequence(const std::vector<int>& padded,
                                 const Matrix& that_mu,
                                 const Matrix& that_sigma,
                                 const Matrix& p_mu, const Matrix& p_sigma) {
  check(static_cast<int>(padded.size()) <= p_mu.rows(),
        "embed_sequence: sequence longer than positional table");
  check(p_mu.rows() == p_sigma.rows() && p_mu.cols() == p_sigma.cols() &&
            that_mu.cols() == p_mu.cols() && that_sigma.cols() == p_mu.cols(),
        "embed_sequence: table width mismatch");
  SequenceEmbedding out;
  CompactSequence c = compact_sequence(padded);
  out.ids = std::move(c.ids);
  out.offset = c.offset;
  const int n = static_cast<int>(out.ids.size());
  const int d = static_cast<int>(that_mu.cols());
  out.mu.resize(n, d);
  out.sigma_raw.resize(n, d);
  for (int k = 0; k < n; ++k) {
    const int id = out.ids[k];
    check(id >= 1 && id < that_mu.rows(),
          "embed_sequence: intention id out of table range");
    out.mu.row(k) = that_mu.row(id) + p_mu.row(out.offset + k);
    out.sigma_raw.row(k) = that_sigma.row(id) + p_sigma.row(out.offset + k);
  }
  return out;
}

std::pair<Matrix, Matrix> dual_attention_block(const Matrix& e_mu,
                                               const Matrix& e_sigma,
                                               const BlockParams& params,
                                               const Matrix& allowed,
                                               AttentionTrace* trace) {
  check(e_mu.rows() == e_sigma.rows() && e_mu.cols() == e_sigma.cols(),
        "dual_attention_block: branch input shapes differ");
  check(allowed.rows() == e_mu.rows() && allowed.cols() == e_mu.rows(),
        "dual_attention_block: mask shape mismatch");
  const double inv_sqrt_d =
      1.0 / std::sqrt(static_cast<double>(params.mu.wq.cols()));
  GradientTape tape;
  BranchBlockVars mu =
      branch_block(tape, tape.constant(e_mu), stage_branch(tape, params.mu),
                   allowed, inv_sqrt_d, nullptr, nullptr);
  BranchBlockVars sg =
      branch_block(tape, tape.constant(e_sigma),
                   stage_branch(tape, params.sigma), allowed, inv_sqrt_d,
                   nullptr, nullptr);
  if (trace != nullptr) {
    trace->probs_mu = tape.value(mu.probs);
    trace->probs_sigma = tape.value(sg.probs);
    trace->context_mu = tape.value(mu.context);
    trace->context_sigma = tape.value(sg.context);
  }
  return {tape.value(mu.out), tape.value(sg.out)};
}

FrozenTables freeze_tables(const ModelState& state,
                           const graph::RelationGraph& graph) {
  RegularizedTables reg = regularize_tables(state, graph);
  FrozenTables out;
  out.mu = std::move(reg.mu);
  out.sigma_raw = std::move(reg.sigma_raw);
  if (state.config.deterministic_embeddings) {
    out.sigma_act = Matrix::Ones(out.sigma_raw.rows(), out.sigma_raw.cols());
  } else {
    out.sigma_act = covariance_activation(out.sigma_raw);
  }
  check(out.sigma_act.minCoeff() > 0.0,
        "freeze_tables: non-positive covariance entry");
  return out;
}

Preference infer_preference(const std::vector<int>& padded,
                            const ModelState& state,
                            const FrozenTables& tables) {
  CompactSequence c = compact_sequence(padded);
  check(!c.ids.empty(), "infer_preference: sequence has no events");
  GradientTape tape;
  ModelVars vars = stage_parameters(tape, state, /*trainable=*/false);
  TableVars tv{tape.constant(tables.mu), tape.constant(tables.sigma_raw)};
  SequenceVars seq = forward_sequence_tape(tape, vars, tv, state.config,
                                           c.ids, c.offset, nullptr);
  Preference p;
  const int n = static_cast<int>(c.ids.size());
  p.positions.resize(n);
  for (int k = 0; k < n; ++k) p.positions[k] = c.offset + k;
  p.mu = tape.value(seq.mu);
  if (state.config.deterministic_embeddings) {
    p.sigma = Matrix::Ones(n, state.config.d);
  } else {
    p.sigma = tape.value(seq.sigma_act);
  }
  check(p.sigma.minCoeff() > 0.0,
        "infer_preference: non-positive covariance entry");
  return p;
}

Preference infer_preference(const std::vector<int>& padded,
                            const ModelState& state,
                            const graph::RelationGraph& graph) {
  return infer_preference(padded, state, freeze_tables(state, graph));
}

GaussianEmbedding table_gaussian(const FrozenTables& tables, int id) {
  check(id >= 1 && id < tables.mu.rows(),
        "table_gaussian: intention id out of table range");
  GaussianEmbedding g;
  g.mean = tables.mu.row(id).transpose();
  g.cov_diag = tables.sigma_act.row(id).transpose();
  return g;
}

void save_checkpoint(const std::string& path, const ModelState& state,
                     const CheckpointMeta& meta) {
  nlohmann::json j;
  j["format"] = kCheckpointTag;
  j["config"] = nlohmann::json::parse(state.config.to_json());
  j["config_hash"] = hex64(meta.config_hash);
  j["graph_hash"] = hex64(meta.graph_hash);
  j["best_epoch"] = meta.best_epoch;
  j["val_ndcg10"] = meta.val_ndcg10;
  nlohmann::json tensors = nlohmann::json::array();
  std::vector<const Matrix*> params = state.parameters();
  std::vector<std::string> names = state.parameter_names();
  for (std::size_t i = 0; i < params.size(); ++i) {
    tensors.push_back({{"name", names[i]},
                       {"rows", params[i]->rows()},
                       {"cols", params[i]->cols()}});
  }
  j["tensors"] = tensors;

  std::string body;
  body.reserve(64);
  for (const Matrix* m : params) {
    for (Eigen::Index r = 0; r < m->rows(); ++r) {
      for (Eigen::Index c = 0; c < m->cols(); ++c) {
        const double v = (*m)(r, c);
        char bytes[sizeof(double)];
        std::memcpy(bytes, &v, sizeof(double));
        body.append(bytes, sizeof(double));
      }
    }
  }
  write_file(path, std::string(kCheckpointTag) + "\n" + j.dump() + "\n" + body);
}

LoadedCheckpoint load_checkpoint(const std::string& path) {
  const std::string text = read_file(path);
  const std::size_t tag_end = text.find('\n');
  if (tag_end == std::string::npos || text.substr(0, tag_end) != kCheckpointTag) {
    throw IoError("checkpoint: missing or unsupported format tag: " + path);
  }
  const std::size_t header_end = text.find('\n', tag_end + 1);
  if (header_end == std::string::npos) {
    throw IoError("checkpoint: truncated header: " + path);
  }
  nlohmann::json j = nlohmann::json::parse(
      text.substr(tag_end + 1, header_end - tag_end - 1), nullptr, false);
  if (j.is_discarded() || !j.is_object()) {
    throw IoError("checkpoint: malformed header JSON: " + path);
  }

  LoadedCheckpoint out;
  try {
    out.state = init_model(ModelConfig::from_json(j.at("config").dump()));
    out.meta.config_hash =
        std::stoull(j.at("config_hash").get<std::string>(), nullptr, 16);
    out.meta.graph_hash =
        std::stoull(j.at("graph_hash").get<std::string>(), nullptr, 16);
    out.meta.best_epoch = j.at("best_epoch").get<int>();
    out.meta.val_ndcg10 = j.at("val_ndcg10").get<double>();

    std::vector<Matrix*> params = out.state.parameters();
    const std::vector<std::string> names = out.state.parameter_names();
    const nlohmann::json& tensors = j.at("tensors");
    if (tensors.size() != params.size()) {
      throw IoError("checkpoint: tensor count mismatch: " + path);
    }
    std::size_t pos = header_end + 1;
    for (std::size_t i = 0; i < params.size(); ++i) {
      const nlohmann::json& t = tensors[i];
      if (t.at("name").get<std::string>() != names[i] ||
          t.at("rows").get<Eigen::Index>() != params[i]->rows() ||
          t.at("cols").get<Eigen::Index>() != params[i]->cols()) {
        throw IoError("checkpoint: tensor header mismatch at " + names[i]);
      }
      for (Eigen::Index r = 0; r < params[i]->rows(); ++r) {
        for (Eigen::Index c = 0; c < params[i]->cols(); ++c) {
          if (pos + sizeof(double) > text.size()) {
            throw IoError("checkpoint: truncated tensor data: " + path);
          }
          double v;
          std::memcpy(&v, text.data() + pos, sizeof(double));
          (*params[i])(r, c) = v;
          pos += sizeof(double);
        }
      }
    }
    if (pos != text.size()) {
      throw IoError("checkpoint: trailing bytes after tensors: " + path);
    }
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("checkpoint: ") + e.what() + ": " + path);
  }
  return out;
}

}  // namespace storec::model
