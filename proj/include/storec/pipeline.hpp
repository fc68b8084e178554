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

#include "storec/config.hpp"
#include "storec/gradcheck.hpp"

namespace storec::cli {

// A declared input file is absent. Commands validate every input before any
// compute so a failed run leaves no partial artifacts.
struct MissingInputError : IoError {
  explicit MissingInputError(const std::string& msg) : IoError(msg) {}
};

// Each command reads its inputs, computes, then writes its artifacts plus a
// `manifest.<command>.json` next to the primary output. Every text artifact
// starts with a '#' header carrying the config hash.
void cmd_gen_data(const RunConfig& config);
void cmd_build_graph(const RunConfig& config);
void cmd_train(const RunConfig& config);
void cmd_eval(const RunConfig& config);
void cmd_gradcheck(const RunConfig& config);
void cmd_mad(const RunConfig& config);

// Dispatch by subcommand name; unknown names raise ConfigError.
void run_command(const std::string& name, const RunConfig& config);

// Finite-difference check of the full training loss on a fixed toy model
// (six intentions, d=4, window 5, one GCN layer, one block) with dropout
// active; the builder re-seeds per call so the loss stays differentiable.
// The instance is pinned so the diagnostic result does not depend on run
// configuration; `seed` only picks which coordinates get sampled when
// `coords` is smaller than the parameter count (-1 checks every one).
GradCheckReport toy_gradient_check(std::uint64_t seed, int coords = -1,
                                   double h = 1e-5, double tol = 1e-4);

}  // namespace storec::cli
