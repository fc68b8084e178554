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

#ifndef STOREC_SPLITS_HPP_
#define STOREC_SPLITS_HPP_

#include <cstdint>
#include <string>
#include <vector>

#include "storec/data.hpp"

namespace storec::data {

enum class Split { kTrain, kVal, kTest };

// Fixed-length, left-padded view of one supervised sequence.
// TRAIN rows carry per-position next-step targets (0 = no loss at that
// position); VAL/TEST rows carry a single held-out label instead.
struct LabeledSequence {
  int user_id = 0;
  Split split = Split::kTrain;
  std::vector<int> inputs;   // length L, left-padded with 0
  std::vector<int> targets;  // length L, only meaningful for TRAIN
  int label = 0;             // held-out next intention for VAL/TEST
};

struct SplitResult {
  std::vector<LabeledSequence> train;
  std::vector<LabeledSequence> val;
  std::vector<LabeledSequence> test;
  // Drop ledger.
  int skipped_users = 0;      // too short / no purchase
  int dropped_fragments = 0;  // 24h fragments shorter than the floor
  int dropped_events = 0;     // events inside dropped fragments
};

inline constexpr int kDefaultMaxLen = 50;
inline constexpr int kMinEvents = 3;
inline constexpr int64_t kDefaultGapSeconds = 86400;

SplitResult split_leave_one_out(const Corpus& corpus, int max_len = kDefaultMaxLen);

SplitResult split_24h(const Corpus& corpus,
                      int64_t gap_threshold = kDefaultGapSeconds,
                      int max_len = kDefaultMaxLen);

// User-based 80/10/10 partition; every purchase yields one labeled sequence
// whose input is all events preceding it.
SplitResult split_purchase(const Corpus& corpus, int max_len = kDefaultMaxLen,
                           uint64_t seed = 1);

SplitResult make_split(const std::string& scenario, const Corpus& corpus,
                       int max_len = kDefaultMaxLen, uint64_t seed = 1);

// JSON manifest: user ids per split plus the drop ledger.
std::string split_manifest_json(const SplitResult& result);

}  // namespace storec::data

#endif  // STOREC_SPLITS_HPP_
