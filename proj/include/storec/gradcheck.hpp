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

#ifndef STOREC_GRADCHECK_HPP_
#define STOREC_GRADCHECK_HPP_

#include <functional>
#include <vector>

#include "storec/common.hpp"
#include "storec/tape.hpp"

namespace storec {

// Builds a scalar loss from freshly recorded parameter nodes. The builder is
// called repeatedly with perturbed values, so it must be a pure function of
// the parameter matrices it is handed.
using LossBuilder = std::function<Var(GradientTape&, const std::vector<Var>&)>;

struct GradCheckReport {
  double max_rel_err = 0.0;
  int worst_param = -1;
  int worst_row = -1;
  int worst_col = -1;
  double analytic = 0.0;
  double numeric = 0.0;
  int coords_checked = 0;
  bool pass = false;
};

// Central finite differences against the tape's reverse pass.
// rel_err = |analytic - numeric| / max(1e-8, |analytic| + |numeric|).
// When max_coords > 0 and the parameters hold more coordinates than that, a
// deterministic random subset of exactly max_coords coordinates is checked.
GradCheckReport check_gradients(const LossBuilder& f,
                                const std::vector<Matrix>& init, double h = 1e-5,
                                double tol = 1e-4, int max_coords = -1,
                                uint64_t seed = 0);

}  // namespace storec

#endif  // STOREC_GRADCHECK_HPP_
