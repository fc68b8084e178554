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

#include "storec/data.hpp"

#include <algorithm>
#include <cstdio>
#include <map>
#include <sstream>

#include <json.hpp>

namespace storec::data {

namespace {

constexpr int64_t kBaseTimestamp = 1500000000;

int cluster_size(int num_intentions, int num_clusters, int cluster) {
  // Intention id m (1-based) belongs to cluster (m - 1) % num_clusters.
  return (num_intentions - 1 - cluster) / num_clusters + 1;
}

int cluster_member(int num_clusters, int cluster, int index) {
  return 1 + cluster + index * num_clusters;
}

std::pair<int, int> canonical(int a, int b) {
  return a < b ? std::make_pair(a, b) : std::make_pair(b, a);
}

}  // namespace

void GeneratorConfig::validate() const {
  if (num_users < 1) throw ConfigError("gen: num_users must be >= 1");
  if (num_intentions < 2) throw ConfigError("gen: num_intentions must be >= 2");
  if (num_clusters < 2) throw ConfigError("gen: num_clusters must be >= 2");
  if (num_intentions < num_clusters) {
    throw ConfigError("gen: num_intentions must be >= num_clusters");
  }
  if (min_seq_len < 1 || max_seq_len < min_seq_len) {
    throw ConfigError("gen: need 1 <= min_seq_len <= max_seq_len");
  }
  auto prob = [](double p) { return p >= 0.0 && p <= 1.0; };
  if (!prob(p_stay) || !prob(p_noise) || !prob(purchase_rate) || !prob(gap_rate)) {
    throw ConfigError("gen: probabilities must lie in [0,1]");
  }
  if (p_stay + p_noise > 1.0) {
    throw ConfigError("gen: p_stay + p_noise must be <= 1");
  }
  if (complements_per_intention < 1) {
    throw ConfigError("gen: complements_per_intention must be >= 1");
  }
}

bool PlantedWorld::related(int a, int b) const {
  if (a == b) return false;
  return complements.count(canonical(a, b)) > 0;
}

std::vector<std::vector<int>> PlantedWorld::neighbor_lists() const {
  std::vector<std::vector<int>> out(num_intentions + 1);
  for (const auto& [a, b] : complements) {
    out[a].push_back(b);
    out[b].push_back(a);
  }
  for (auto& v : out) std::sort(v.begin(), v.end());
  return out;
}

std::pair<Corpus, PlantedWorld> generate_synthetic(const GeneratorConfig& config) {
  config.validate();
  const int m = config.num_intentions;
  const int c = config.num_clusters;

  PlantedWorld world;
  world.num_intentions = m;
  world.num_clusters = c;
  world.seed = config.seed;
  world.cluster_of.assign(m + 1, -1);
  for (int id = 1; id <= m; ++id) world.cluster_of[id] = (id - 1) % c;

  // Plant cross-cluster complement pairs so relation labels are recoverable
  // and never confounded with same-cluster co-browsing.
  Rng world_rng(mix_seed(config.seed, 0));
  for (int id = 1; id <= m; ++id) {
    int added = 0;
    int attempts = 0;
    while (added < config.complements_per_intention && attempts < 1000) {
      ++attempts;
      const int other = world_rng.uniform_int(1, m);
      if (other == id) continue;
      if (world.cluster_of[other] == world.cluster_of[id]) continue;
      if (!world.complements.insert(canonical(id, other)).second) continue;
      ++added;
    }
    check(added == config.complements_per_intention,
          "gen: could not plant complements; too few cross-cluster intentions");
  }
  const auto neighbors = world.neighbor_lists();

  Corpus corpus;
  world.dominant_cluster_of_user.resize(config.num_users);
  for (int u = 0; u < config.num_users; ++u) {
    Rng rng(mix_seed(config.seed, 1 + static_cast<uint64_t>(u)));
    const int dominant = rng.uniform_int(0, c - 1);
    world.dominant_cluster_of_user[u] = dominant;
    const int len = rng.uniform_int(config.min_seq_len, config.max_seq_len);
    int64_t ts = kBaseTimestamp +
                 static_cast<int64_t>(rng.uniform_int(0, 86400 * 30));
    int prev = kPaddingId;
    int prev2 = kPaddingId;
    for (int k = 0; k < len; ++k) {
      const double r = rng.uniform();
      int id;
      if (r < config.p_stay) {
        const int size = cluster_size(m, c, dominant);
        id = cluster_member(c, dominant, rng.uniform_int(0, size - 1));
      } else if (k == 0 || r < config.p_stay + config.p_noise ||
                 neighbors[prev].empty()) {
        id = rng.uniform_int(1, m);
      } else {
        // Non-backtracking complement hop: never bounce straight back to the
        // event before last, which would inflate dominant-cluster returns.
        const auto& nb = neighbors[prev];
        do {
          id = nb[rng.uniform_int(0, static_cast<int>(nb.size()) - 1)];
        } while (id == prev2 && nb.size() > 1);
      }
      if (k > 0) {
        ts += rng.uniform() < config.gap_rate
                  ? 86400 + rng.uniform_int(1, 86400)
                  : rng.uniform_int(60, 3600);
      }
      const Action act = rng.uniform() < config.purchase_rate
                             ? Action::kPurchase
                             : Action::kClick;
      corpus.push_back(Event{u, id, ts, act});
      prev2 = prev;
      prev = id;
    }
  }
  return {std::move(corpus), std::move(world)};
}

std::vector<std::pair<int, std::vector<Event>>> group_by_user(const Corpus& corpus) {
  std::map<int, std::vector<Event>> grouped;
  for (const Event& e : corpus) grouped[e.user_id].push_back(e);
  std::vector<std::pair<int, std::vector<Event>>> out;
  out.reserve(grouped.size());
  for (auto& [user, events] : grouped) {
    std::stable_sort(events.begin(), events.end(),
                     [](const Event& a, const Event& b) {
                       return a.timestamp < b.timestamp;
                     });
    out.emplace_back(user, std::move(events));
  }
  return out;
}

std::string corpus_to_jsonl(const Corpus& corpus) {
  std::string out;
  out.reserve(corpus.size() * 48);
  char line[128];
  for (const Event& e : corpus) {
    std::snprintf(line, sizeof(line), "{\"u\":%d,\"m\":%d,\"t\":%lld,\"a\":\"%c\"}\n",
                  e.user_id, e.intention_id,
                  static_cast<long long>(e.timestamp),
                  e.action == Action::kPurchase ? 'P' : 'C');
    out += line;
  }
  return out;
}

Corpus corpus_from_jsonl(const std::string& text) {
  Corpus corpus;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;  // '#' lines are headers
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw IoError("corpus line " + std::to_string(lineno) + ": " + e.what());
    }
    if (!j.contains("u") || !j.contains("m") || !j.contains("t") ||
        !j.contains("a")) {
      throw IoError("corpus line " + std::to_string(lineno) +
                    ": missing field (need u, m, t, a)");
    }
    Event e;
    e.user_id = j.at("u").get<int>();
    e.intention_id = j.at("m").get<int>();
    e.timestamp = j.at("t").get<int64_t>();
    const std::string a = j.at("a").get<std::string>();
    if (a == "C") {
      e.action = Action::kClick;
    } else if (a == "P") {
      e.action = Action::kPurchase;
    } else {
      throw IoError("corpus line " + std::to_string(lineno) +
                    ": action must be \"C\" or \"P\"");
    }
    if (e.intention_id == kPaddingId) {
      throw IoError("corpus line " + std::to_string(lineno) +
                    ": intention id 0 is reserved for padding");
    }
    corpus.push_back(e);
  }
  return corpus;
}

void write_corpus(const std::string& path, const Corpus& corpus) {
  write_file(path, corpus_to_jsonl(corpus));
}

Corpus read_corpus(const std::string& path) {
  return corpus_from_jsonl(read_file(path));
}

std::string world_to_json(const PlantedWorld& world) {
  nlohmann::json j;
  j["format"] = "storec-world-v1";
  j["num_intentions"] = world.num_intentions;
  j["num_clusters"] = world.num_clusters;
  j["seed"] = world.seed;
  j["cluster_of"] = world.cluster_of;
  j["dominant_cluster_of_user"] = world.dominant_cluster_of_user;
  nlohmann::json pairs = nlohmann::json::array();
  for (const auto& [a, b] : world.complements) pairs.push_back({a, b});
  j["complements"] = pairs;
  return j.dump() + "\n";
}

PlantedWorld world_from_json(const std::string& text) {
  // Leading '#' lines are headers, same convention as the other artifacts.
  size_t start = 0;
  while (start < text.size() && text[start] == '#') {
    const size_t eol = text.find('\n', start);
    start = eol == std::string::npos ? text.size() : eol + 1;
  }
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text.substr(start));
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("world file: ") + e.what());
  }
  if (j.value("format", "") != "storec-world-v1") {
    throw IoError("world file: unknown format");
  }
  PlantedWorld world;
  try {
    world.num_intentions = j.at("num_intentions").get<int>();
    world.num_clusters = j.at("num_clusters").get<int>();
    world.seed = j.at("seed").get<uint64_t>();
    world.cluster_of = j.at("cluster_of").get<std::vector<int>>();
    world.dominant_cluster_of_user =
        j.at("dominant_cluster_of_user").get<std::vector<int>>();
    for (const auto& pair : j.at("complements")) {
      if (!pair.is_array() || pair.size() != 2) {
        throw IoError("world file: complements must be [a, b] pairs");
      }
      world.complements.insert(canonical(pair[0].get<int>(), pair[1].get<int>()));
    }
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("world file: ") + e.what());
  }
  if (world.cluster_of.size() !=
      static_cast<size_t>(world.num_intentions) + 1) {
    throw IoError("world file: cluster_of length disagrees with M");
  }
  return world;
}

void write_world(const std::string& path, const PlantedWorld& world) {
  write_file(path, world_to_json(world));
}

PlantedWorld read_world(const std::string& path) {
  return world_from_json(read_file(path));
}

std::vector<PairLabel> emit_pair_labels(const PlantedWorld& world,
                                        const Corpus& corpus, int neg_ratio) {
  check(neg_ratio >= 0, "pair labels: neg_ratio must be >= 0");
  // Planted pairs that actually co-occur as consecutive events somewhere.
  std::set<std::pair<int, int>> observed;
  for (size_t i = 1; i < corpus.size(); ++i) {
    const Event& a = corpus[i - 1];
    const Event& b = corpus[i];
    if (a.user_id != b.user_id) continue;
    if (world.related(a.intention_id, b.intention_id)) {
      observed.insert(canonical(a.intention_id, b.intention_id));
    }
  }

  std::vector<PairLabel> out;
  for (const auto& [a, b] : observed) {
    out.push_back({a, b, +1});
    out.push_back({b, a, +1});
  }
  const size_t num_pos = out.size();
  Rng rng(mix_seed(world.seed, 0x70637273));
  const int m = world.num_intentions;
  for (size_t k = 0; k < num_pos * static_cast<size_t>(neg_ratio); ++k) {
    for (;;) {
      const int i = rng.uniform_int(1, m);
      const int j = rng.uniform_int(1, m);
      if (i == j || world.related(i, j)) continue;
      out.push_back({i, j, -1});
      break;
    }
  }
  return out;
}

std::string pair_labels_to_tsv(const std::vector<PairLabel>& labels) {
  std::string out;
  out.reserve(labels.size() * 16);
  char line[64];
  for (const PairLabel& p : labels) {
    std::snprintf(line, sizeof(line), "%d\t%d\t%+d\n", p.i, p.j, p.y);
    out += line;
  }
  return out;
}

std::vector<PairLabel> pair_labels_from_tsv(const std::string& text) {
  std::vector<PairLabel> out;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;  // '#' lines are headers
    PairLabel p;
    if (std::sscanf(line.c_str(), "%d\t%d\t%d", &p.i, &p.j, &p.y) != 3 ||
        (p.y != 1 && p.y != -1)) {
      throw IoError("pair labels line " + std::to_string(lineno) +
                    ": expected i<TAB>j<TAB>+1|-1");
    }
    out.push_back(p);
  }
  return out;
}

}  // namespace storec::data
