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

#ifndef STOREC_RELATION_GRAPH_HPP_
#define STOREC_RELATION_GRAPH_HPP_

#include <string>
#include <tuple>
#include <vector>

#include "storec/common.hpp"
#include "storec/data.hpp"

namespace storec::graph {

struct RelationConfig {
  int d_g = 32;          // relation-embedding width
  double lambda = 2.0;   // base distance
  double epsilon = 1.0;  // margin
  double lr = 1e-2;
  int epochs = 30;
  int batch_size = 256;
  double init_scale = 0.1;
  int top_k = 10;
  uint64_t seed = 1;
};

// Two embedding tables (plain and complementary side) plus the 2-layer
// transform. Row 0 of each table is the padding id and stays untouched.
struct RelationModel {
  int num_intentions = 0;  // M
  int d_g = 0;
  double lambda = 2.0;
  double epsilon = 1.0;
  Matrix phi;    // (M+1) x d_g
  Matrix phi_c;  // (M+1) x d_g
  Matrix w1, w2;  // d_g x d_g
  Matrix b1, b2;  // 1 x d_g
};

RelationModel init_relation_model(int num_intentions, const RelationConfig& cfg);

// gamma = ReLU(phi W1 + b1) W2 + b2, applied row-wise.
Matrix transform_embedding(const RelationModel& model, const Matrix& phi_rows);

// max{0, epsilon - y (lambda - ||gamma - phi_c||^2)}
double pair_hinge_loss(const Vector& gamma, const Vector& phi_c, int y,
                       double lambda, double epsilon);

struct RelationTrainStats {
  std::vector<double> epoch_mean_loss;
};

RelationModel train_relation_model(const std::vector<data::PairLabel>& labels,
                                   int num_intentions, const RelationConfig& cfg,
                                   RelationTrainStats* stats = nullptr);

// Cosine between m_i's complementary embedding and m_j's embedding.
double edge_weight(const Vector& phi_c_i, const Vector& phi_j);

// Nodes are intention ids 1..M; index 0 carries only its self-loop so the
// normalized matrix can be indexed directly by intention id.
struct RelationGraph {
  int num_nodes = 0;  // M
  std::string kind;   // "learned", "oracle", or "identity"
  int top_k = 0;      // 0 when not built by top-k selection
  std::vector<std::tuple<int, int, double>> edges;  // i < j, weight in (0, 1]
  Matrix normalized;  // (M+1) x (M+1) symmetric, D^{-1/2} A D^{-1/2}
};

// D^{-1/2} A D^{-1/2} for a symmetric non-negative A with positive diagonal.
Matrix normalize_adjacency(const Matrix& a);

RelationGraph build_graph(const RelationModel& model, int top_k = 10);
RelationGraph oracle_graph(const data::PlantedWorld& world);
RelationGraph identity_graph(int num_intentions);

std::string graph_to_string(const RelationGraph& g);
RelationGraph graph_from_string(const std::string& text);
void write_graph(const std::string& path, const RelationGraph& g);
RelationGraph read_graph(const std::string& path);

// Hash of the canonical serialization; stored in checkpoints so evaluation
// can refuse a mismatched graph.
uint64_t graph_hash(const RelationGraph& g);

}  // namespace storec::graph

#endif  // STOREC_RELATION_GRAPH_HPP_
