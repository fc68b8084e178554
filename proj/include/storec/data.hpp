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

#ifndef STOREC_DATA_HPP_
#define STOREC_DATA_HPP_

#include <cstdint>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "storec/common.hpp"

namespace storec::data {

// Intention id 0 is reserved for padding throughout.
inline constexpr int kPaddingId = 0;

enum class Action { kClick, kPurchase };

struct Event {
  int user_id = 0;
  int intention_id = 0;  // in [1, M]
  int64_t timestamp = 0;
  Action action = Action::kClick;

  friend bool operator==(const Event&, const Event&) = default;
};

// Events grouped by user, chronological within each user.
using Corpus = std::vector<Event>;

struct GeneratorConfig {
  int num_users = 2000;
  int num_intentions = 500;  // M
  int num_clusters = 25;
  int min_seq_len = 20;
  int max_seq_len = 40;
  double p_stay = 0.6;
  double p_noise = 0.1;
  double purchase_rate = 0.15;
  double gap_rate = 0.05;  // chance of a >24h gap before an event
  int complements_per_intention = 2;
  uint64_t seed = 1;

  void validate() const;  // throws ConfigError
};

// Ground truth the generator planted: cluster memberships plus the complement
// relation used for distant supervision of the relation graph.
struct PlantedWorld {
  int num_intentions = 0;
  int num_clusters = 0;
  std::vector<int> cluster_of;  // size M+1; index 0 unused
  std::vector<int> dominant_cluster_of_user;  // indexed by generated user id
  std::set<std::pair<int, int>> complements;  // canonical (lo, hi) pairs
  uint64_t seed = 0;

  bool related(int a, int b) const;
  // Symmetric neighbor lists; index 0 unused.
  std::vector<std::vector<int>> neighbor_lists() const;
};

std::pair<Corpus, PlantedWorld> generate_synthetic(const GeneratorConfig& config);

// Single-object JSON; downstream stages (distant supervision, oracle graphs)
// reload the planted ground truth from this file.
std::string world_to_json(const PlantedWorld& world);
PlantedWorld world_from_json(const std::string& text);
void write_world(const std::string& path, const PlantedWorld& world);
PlantedWorld read_world(const std::string& path);

// Per-user event slices in ascending user id, chronological within user.
std::vector<std::pair<int, std::vector<Event>>> group_by_user(const Corpus& corpus);

// JSONL, one event per line: {"u":int,"m":int,"t":int,"a":"C"|"P"}.
std::string corpus_to_jsonl(const Corpus& corpus);
Corpus corpus_from_jsonl(const std::string& text);
void write_corpus(const std::string& path, const Corpus& corpus);
Corpus read_corpus(const std::string& path);

struct PairLabel {
  int i = 0;
  int j = 0;
  int y = 0;  // +1 or -1

  friend bool operator==(const PairLabel&, const PairLabel&) = default;
};

// Positives: planted pairs observed as consecutive events somewhere in the
// corpus, emitted in both directions. Negatives: neg_ratio per positive row,
// sampled uniformly outside the planted relation.
std::vector<PairLabel> emit_pair_labels(const PlantedWorld& world,
                                        const Corpus& corpus, int neg_ratio);

// TSV: i<TAB>j<TAB>+1|-1
std::string pair_labels_to_tsv(const std::vector<PairLabel>& labels);
std::vector<PairLabel> pair_labels_from_tsv(const std::string& text);

}  // namespace storec::data

#endif  // STOREC_DATA_HPP_
