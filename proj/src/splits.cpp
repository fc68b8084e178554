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

#include "storec/splits.hpp"

#include <algorithm>
#include <set>

#include <json.hpp>

namespace storec::data {

namespace {

// Keep the most recent max_len entries, left-pad with 0.
std::vector<int> pad_left(const std::vector<int>& xs, int max_len) {
  std::vector<int> out(max_len, kPaddingId);
  const int n = std::min<int>(max_len, static_cast<int>(xs.size()));
  for (int k = 0; k < n; ++k) {
    out[max_len - n + k] = xs[xs.size() - n + k];
  }
  return out;
}

std::vector<int> intention_ids(const std::vector<Event>& events) {
  std::vector<int> ids;
  ids.reserve(events.size());
  for (const Event& e : events) ids.push_back(e.intention_id);
  return ids;
}

// Leave-one-out labeling of one chronological id sequence (>= kMinEvents).
void append_loo(int user, const std::vector<int>& ids, int max_len,
                SplitResult& out) {
  const int n = static_cast<int>(ids.size());
  check(n >= kMinEvents, "split: sequence shorter than the floor");

  // TRAIN: inputs e_1..e_{n-2}; each position's target is the next event,
  // except the final one, whose next event is the validation label.
  std::vector<int> train_inputs(ids.begin(), ids.end() - 2);
  std::vector<int> train_targets(train_inputs.size(), kPaddingId);
  for (size_t t = 0; t + 1 < train_inputs.size(); ++t) {
    train_targets[t] = train_inputs[t + 1];
  }
  LabeledSequence tr;
  tr.user_id = user;
  tr.split = Split::kTrain;
  tr.inputs = pad_left(train_inputs, max_len);
  tr.targets = pad_left(train_targets, max_len);
  out.train.push_back(std::move(tr));

  LabeledSequence va;
  va.user_id = user;
  va.split = Split::kVal;
  va.inputs = pad_left(std::vector<int>(ids.begin(), ids.end() - 2), max_len);
  va.label = ids[n - 2];
  out.val.push_back(std::move(va));

  // TEST input includes the validation event.
  LabeledSequence te;
  te.user_id = user;
  te.split = Split::kTest;
  te.inputs = pad_left(std::vector<int>(ids.begin(), ids.end() - 1), max_len);
  te.label = ids[n - 1];
  out.test.push_back(std::move(te));
}

}  // namespace

SplitResult split_leave_one_out(const Corpus& corpus, int max_len) {
  SplitResult out;
  for (const auto& [user, events] : group_by_user(corpus)) {
    if (static_cast<int>(events.size()) < kMinEvents) {
      ++out.skipped_users;
      continue;
    }
    append_loo(user, intention_ids(events), max_len, out);
  }
  return out;
}

SplitResult split_24h(const Corpus& corpus, int64_t gap_threshold, int max_len) {
  SplitResult out;
  for (const auto& [user, events] : group_by_user(corpus)) {
    std::vector<std::vector<int>> fragments;
    std::vector<int> current;
    for (size_t k = 0; k < events.size(); ++k) {
      if (k > 0 && events[k].timestamp - events[k - 1].timestamp > gap_threshold) {
        fragments.push_back(std::move(current));
        current.clear();
      }
      current.push_back(events[k].intention_id);
    }
    fragments.push_back(std::move(current));

    bool any = false;
    for (const auto& frag : fragments) {
      if (static_cast<int>(frag.size()) < kMinEvents) {
        ++out.dropped_fragments;
        out.dropped_events += static_cast<int>(frag.size());
        continue;
      }
      append_loo(user, frag, max_len, out);
      any = true;
    }
    if (!any) ++out.skipped_users;
  }
  return out;
}

SplitResult split_purchase(const Corpus& corpus, int max_len, uint64_t seed) {
  struct PurchaseCase {
    std::vector<int> inputs;
    int label = 0;
  };
  std::vector<std::pair<int, std::vector<PurchaseCase>>> per_user;
  SplitResult out;
  for (const auto& [user, events] : group_by_user(corpus)) {
    std::vector<PurchaseCase> cases;
    std::vector<int> prefix;
    for (const Event& e : events) {
      if (e.action == Action::kPurchase && !prefix.empty()) {
        cases.push_back({prefix, e.intention_id});
      }
      prefix.push_back(e.intention_id);
    }
    if (cases.empty()) {
      ++out.skipped_users;  // no purchase with a non-empty preceding input
      continue;
    }
    per_user.emplace_back(user, std::move(cases));
  }

  // User-based 80/10/10 partition, deterministic in the seed.
  std::vector<int> order(per_user.size());
  for (size_t k = 0; k < order.size(); ++k) order[k] = static_cast<int>(k);
  Rng rng(mix_seed(seed, 0x73706c69));
  rng.shuffle(order);
  const int n = static_cast<int>(order.size());
  const int n_train = static_cast<int>(0.8 * n);
  const int n_val = static_cast<int>(0.1 * n);
  std::vector<Split> assignment(n, Split::kTest);
  for (int k = 0; k < n; ++k) {
    if (k < n_train) {
      assignment[order[k]] = Split::kTrain;
    } else if (k < n_train + n_val) {
      assignment[order[k]] = Split::kVal;
    }
  }

  for (size_t k = 0; k < per_user.size(); ++k) {
    const auto& [user, cases] = per_user[k];
    const Split split = assignment[k];
    for (const PurchaseCase& pc : cases) {
      LabeledSequence seq;
      seq.user_id = user;
      seq.split = split;
      seq.inputs = pad_left(pc.inputs, max_len);
      if (split == Split::kTrain) {
        // Supervise only the final position with the purchased intention.
        std::vector<int> targets(pc.inputs.size(), kPaddingId);
        targets.back() = pc.label;
        seq.targets = pad_left(targets, max_len);
        out.train.push_back(std::move(seq));
      } else {
        seq.label = pc.label;
        (split == Split::kVal ? out.val : out.test).push_back(std::move(seq));
      }
    }
  }
  return out;
}

SplitResult make_split(const std::string& scenario, const Corpus& corpus,
                       int max_len, uint64_t seed) {
  if (scenario == "loo") return split_leave_one_out(corpus, max_len);
  if (scenario == "24h") return split_24h(corpus, kDefaultGapSeconds, max_len);
  if (scenario == "purchase") return split_purchase(corpus, max_len, seed);
  throw ConfigError("split: unknown scenario '" + scenario +
                    "' (expected loo, 24h, or purchase)");
}

std::string split_manifest_json(const SplitResult& result) {
  auto users_of = [](const std::vector<LabeledSequence>& seqs) {
    std::set<int> users;
    for (const auto& s : seqs) users.insert(s.user_id);
    return std::vector<int>(users.begin(), users.end());
  };
  nlohmann::json j;
  j["counts"] = {{"train", result.train.size()},
                 {"val", result.val.size()},
                 {"test", result.test.size()}};
  j["dropped"] = {{"skipped_users", result.skipped_users},
                  {"dropped_fragments", result.dropped_fragments},
                  {"dropped_events", result.dropped_events}};
  j["train_users"] = users_of(result.train);
  j["val_users"] = users_of(result.val);
  j["test_users"] = users_of(result.test);
  return j.dump(2) + "\n";
}

}  // namespace storec::data
