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

#include "storec/relation_graph.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <sstream>

#include <json.hpp>

#include "storec/adam.hpp"
#include "storec/tape.hpp"

namespace storec::graph {

namespace {

Matrix gaussian_matrix(Rng& rng, int rows, int cols, double scale) {
  Matrix m(rows, cols);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) m(i, j) = scale * rng.normal();
  return m;
}

RelationGraph finalize(RelationGraph g) {
  std::sort(g.edges.begin(), g.edges.end());
  const int n = g.num_nodes + 1;
  Matrix a = Matrix::Identity(n, n);
  for (const auto& [i, j, w] : g.edges) {
    check(i >= 1 && i < j && j <= g.num_nodes, "graph: edge endpoints out of range");
    check(w > 0.0 && w <= 1.0, "graph: edge weight outside (0, 1]");
    a(i, j) = w;
    a(j, i) = w;
  }
  g.normalized = normalize_adjacency(a);
  return g;
}

}  // namespace

RelationModel init_relation_model(int num_intentions, const RelationConfig& cfg) {
  check(num_intentions >= 1, "relation: need at least one intention");
  check(cfg.d_g >= 1, "relation: d_g must be >= 1");
  Rng rng(mix_seed(cfg.seed, 0x52454c41));
  RelationModel m;
  m.num_intentions = num_intentions;
  m.d_g = cfg.d_g;
  m.lambda = cfg.lambda;
  m.epsilon = cfg.epsilon;
  m.phi = gaussian_matrix(rng, num_intentions + 1, cfg.d_g, cfg.init_scale);
  m.phi_c = gaussian_matrix(rng, num_intentions + 1, cfg.d_g, cfg.init_scale);
  m.phi.row(0).setZero();
  m.phi_c.row(0).setZero();
  // Start the transform as an exact identity inside the relu's linear region
  // (x + 1 > 0 for the small init embeddings): edge weights compare phi_c
  // against phi directly, so training must be able to align the raw tables,
  // not just their transformed images.
  m.w1 = Matrix::Identity(cfg.d_g, cfg.d_g);
  m.w2 = Matrix::Identity(cfg.d_g, cfg.d_g);
  m.b1 = Matrix::Ones(1, cfg.d_g);
  m.b2 = -Matrix::Ones(1, cfg.d_g);
  return m;
}

Matrix transform_embedding(const RelationModel& model, const Matrix& phi_rows) {
  check(phi_rows.cols() == model.d_g, "relation: input width != d_g");
  Matrix h = (phi_rows * model.w1).rowwise() + model.b1.row(0);
  h = h.cwiseMax(0.0);
  return (h * model.w2).rowwise() + model.b2.row(0);
}

double pair_hinge_loss(const Vector& gamma, const Vector& phi_c, int y,
                       double lambda, double epsilon) {
  check(y == 1 || y == -1, "relation: label must be +1 or -1");
  check(gamma.size() == phi_c.size(), "relation: embedding size mismatch");
  const double sq = (gamma - phi_c).squaredNorm();
  return std::max(0.0, epsilon - y * (lambda - sq));
}

RelationModel train_relation_model(const std::vector<data::PairLabel>& labels,
                                   int num_intentions, const RelationConfig& cfg,
                                   RelationTrainStats* stats) {
  check(!labels.empty(), "relation: empty label set");
  bool has_pos = false, has_neg = false;
  for (const auto& l : labels) {
    check(l.y == 1 || l.y == -1, "relation: label must be +1 or -1");
    check(l.i >= 1 && l.i <= num_intentions && l.j >= 1 && l.j <= num_intentions,
          "relation: pair ids out of range");
    (l.y == 1 ? has_pos : has_neg) = true;
  }
  if (!has_pos || !has_neg) {
    std::fprintf(stderr,
                 "warning: relation labels contain a single class; training "
                 "anyway\n");
  }

  RelationModel model = init_relation_model(num_intentions, cfg);
  Adam opt(AdamConfig{cfg.lr, 0.9, 0.999, 1e-8});

  std::vector<int> order(labels.size());
  for (size_t k = 0; k < order.size(); ++k) order[k] = static_cast<int>(k);

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    Rng rng(mix_seed(cfg.seed, 1000 + static_cast<uint64_t>(epoch)));
    rng.shuffle(order);
    double loss_sum = 0.0;
    for (size_t start = 0; start < order.size();
         start += static_cast<size_t>(cfg.batch_size)) {
      const size_t end =
          std::min(order.size(), start + static_cast<size_t>(cfg.batch_size));
      const int b = static_cast<int>(end - start);
      std::vector<int> idx_i(b), idx_j(b);
      Matrix yv(b, 1), cv(b, 1);
      for (int k = 0; k < b; ++k) {
        const auto& l = labels[order[start + k]];
        idx_i[k] = l.i;
        idx_j[k] = l.j;
        yv(k, 0) = l.y;
        cv(k, 0) = cfg.epsilon - l.y * cfg.lambda;
      }

      GradientTape t;
      Var phi = t.parameter(model.phi);
      Var phi_c = t.parameter(model.phi_c);
      Var w1 = t.parameter(model.w1);
      Var b1 = t.parameter(model.b1);
      Var w2 = t.parameter(model.w2);
      Var b2 = t.parameter(model.b2);

      Var gi = t.rows(phi, idx_i);
      Var hidden = t.relu(t.add_row_vector(t.matmul(gi, w1), b1));
      Var gamma = t.add_row_vector(t.matmul(hidden, w2), b2);
      Var cj = t.rows(phi_c, idx_j);
      Var sq = t.row_sum(t.square(t.sub(gamma, cj)));
      // epsilon - y (lambda - d) = (epsilon - y lambda) + y d
      Var pre = t.add(t.mul(t.constant(yv), sq), t.constant(cv));
      Var hinge = t.relu(pre);
      Var loss = t.mean(hinge);
      t.backward(loss);
      loss_sum += t.scalar(loss) * b;

      opt.step({&model.phi, &model.phi_c, &model.w1, &model.b1, &model.w2,
                &model.b2},
               {&t.grad(phi), &t.grad(phi_c), &t.grad(w1), &t.grad(b1),
                &t.grad(w2), &t.grad(b2)});
      model.phi.row(0).setZero();
      model.phi_c.row(0).setZero();
    }
    if (stats != nullptr) {
      stats->epoch_mean_loss.push_back(loss_sum /
                                       static_cast<double>(labels.size()));
    }
  }
  return model;
}

double edge_weight(const Vector& phi_c_i, const Vector& phi_j) {
  check(phi_c_i.size() == phi_j.size(), "edge weight: size mismatch");
  const double na = phi_c_i.norm();
  const double nb = phi_j.norm();
  check(na > 0.0 && nb > 0.0, "edge weight: zero vector");
  return phi_c_i.dot(phi_j) / (na * nb);
}

Matrix normalize_adjacency(const Matrix& a) {
  check(a.rows() == a.cols(), "normalize: matrix must be square");
  check((a - a.transpose()).cwiseAbs().maxCoeff() == 0.0,
        "normalize: adjacency must be symmetric");
  check((a.array() >= 0.0).all(), "normalize: negative weights");
  Vector deg = a.rowwise().sum();
  check((deg.array() > 0.0).all(), "normalize: zero-degree node (missing self-loop)");
  Vector dinv = deg.array().rsqrt();
  return dinv.asDiagonal() * a * dinv.asDiagonal();
}

RelationGraph build_graph(const RelationModel& model, int top_k) {
  const int m = model.num_intentions;
  if (top_k < 1 || top_k >= m) {
    throw ConfigError("graph: top_k must satisfy 1 <= k < M");
  }
  // Unit rows once; a zero embedding row cannot be scored.
  Matrix unit_c(m + 1, model.d_g), unit_p(m + 1, model.d_g);
  for (int i = 1; i <= m; ++i) {
    const double nc = model.phi_c.row(i).norm();
    const double np = model.phi.row(i).norm();
    check(nc > 0.0 && np > 0.0, "graph: zero embedding row");
    unit_c.row(i) = model.phi_c.row(i) / nc;
    unit_p.row(i) = model.phi.row(i) / np;
  }

  // Directed scores s(i, j) = cos(phi_c_i, phi_j); keep each node's top-k,
  // clip negatives to zero, then symmetrize by max.
  std::map<std::pair<int, int>, double> sym;
  std::vector<std::pair<double, int>> scored(m);
  for (int i = 1; i <= m; ++i) {
    Vector s = unit_p.middleRows(1, m) * unit_c.row(i).transpose();
    scored.clear();
    for (int j = 1; j <= m; ++j) {
      if (j != i) scored.push_back({-s(j - 1), j});
    }
    std::partial_sort(scored.begin(),
                      scored.begin() + std::min<size_t>(top_k, scored.size()),
                      scored.end());
    for (int r = 0; r < top_k; ++r) {
      const double w = std::min(1.0, std::max(0.0, -scored[r].first));
      if (w <= 0.0) continue;
      const int j = scored[r].second;
      auto key = i < j ? std::make_pair(i, j) : std::make_pair(j, i);
      auto [it, inserted] = sym.insert({key, w});
      if (!inserted) it->second = std::max(it->second, w);
    }
  }

  RelationGraph g;
  g.num_nodes = m;
  g.kind = "learned";
  g.top_k = top_k;
  for (const auto& [key, w] : sym) g.edges.push_back({key.first, key.second, w});
  return finalize(std::move(g));
}

RelationGraph oracle_graph(const data::PlantedWorld& world) {
  RelationGraph g;
  g.num_nodes = world.num_intentions;
  g.kind = "oracle";
  for (const auto& [a, b] : world.complements) g.edges.push_back({a, b, 1.0});
  return finalize(std::move(g));
}

RelationGraph identity_graph(int num_intentions) {
  RelationGraph g;
  g.num_nodes = num_intentions;
  g.kind = "identity";
  return finalize(std::move(g));
}

std::string graph_to_string(const RelationGraph& g) {
  nlohmann::json header;
  header["format"] = "storec-graph-v1";
  header["nodes"] = g.num_nodes;
  header["kind"] = g.kind;
  header["top_k"] = g.top_k;
  header["symmetrize"] = "max";
  std::string out = "# " + header.dump() + "\n";
  char line[80];
  for (const auto& [i, j, w] : g.edges) {
    std::snprintf(line, sizeof(line), "%d\t%d\t%.17g\n", i, j, w);
    out += line;
  }
  return out;
}

RelationGraph graph_from_string(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  check(static_cast<bool>(std::getline(in, line)) && line.rfind("# ", 0) == 0,
        "graph file: missing header line");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(line.substr(2));
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("graph file: bad header: ") + e.what());
  }
  if (header.value("format", "") != "storec-graph-v1") {
    throw IoError("graph file: unknown format");
  }
  RelationGraph g;
  g.num_nodes = header.at("nodes").get<int>();
  g.kind = header.value("kind", "learned");
  g.top_k = header.value("top_k", 0);
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;  // extra '#' lines: headers
    int i = 0, j = 0;
    double w = 0.0;
    if (std::sscanf(line.c_str(), "%d\t%d\t%lg", &i, &j, &w) != 3) {
      throw IoError("graph file line " + std::to_string(lineno) +
                    ": expected i<TAB>j<TAB>w");
    }
    g.edges.push_back({i, j, w});
  }
  return finalize(std::move(g));
}

void write_graph(const std::string& path, const RelationGraph& g) {
  write_file(path, graph_to_string(g));
}

RelationGraph read_graph(const std::string& path) {
  return graph_from_string(read_file(path));
}

uint64_t graph_hash(const RelationGraph& g) {
  return fnv1a64(graph_to_string(g));
}

}  // namespace storec::graph
