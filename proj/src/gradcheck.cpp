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

#include "storec/gradcheck.hpp"

#include <cmath>
#include <numeric>

namespace storec {

namespace {

double eval_loss(const LossBuilder& f, const std::vector<Matrix>& vals) {
  GradientTape t;
  std::vector<Var> ps;
  ps.reserve(vals.size());
  for (const Matrix& v : vals) ps.push_back(t.parameter(v));
  return t.scalar(f(t, ps));
}

struct Coord {
  int param;
  int row;
  int col;
};

}  // namespace

GradCheckReport check_gradients(const LossBuilder& f,
                                const std::vector<Matrix>& init, double h,
                                double tol, int max_coords, uint64_t seed) {
  check(!init.empty(), "gradcheck: no parameters");
  GradientTape t;
  std::vector<Var> ps;
  ps.reserve(init.size());
  for (const Matrix& v : init) ps.push_back(t.parameter(v));
  Var loss = f(t, ps);
  t.backward(loss);
  std::vector<Matrix> analytic;
  analytic.reserve(init.size());
  for (Var p : ps) analytic.push_back(t.grad(p));

  std::vector<Coord> coords;
  for (size_t k = 0; k < init.size(); ++k) {
    for (int i = 0; i < init[k].rows(); ++i) {
      for (int j = 0; j < init[k].cols(); ++j) {
        coords.push_back({static_cast<int>(k), i, j});
      }
    }
  }
  if (max_coords > 0 && static_cast<int>(coords.size()) > max_coords) {
    Rng rng(seed);
    rng.shuffle(coords);
    coords.resize(max_coords);
  }

  GradCheckReport rep;
  std::vector<Matrix> work = init;
  for (const Coord& c : coords) {
    const double saved = work[c.param](c.row, c.col);
    work[c.param](c.row, c.col) = saved + h;
    const double up = eval_loss(f, work);
    work[c.param](c.row, c.col) = saved - h;
    const double down = eval_loss(f, work);
    work[c.param](c.row, c.col) = saved;
    const double num = (up - down) / (2.0 * h);
    const double ana = analytic[c.param](c.row, c.col);
    const double rel =
        std::abs(ana - num) / std::max(1e-8, std::abs(ana) + std::abs(num));
    ++rep.coords_checked;
    if (rel > rep.max_rel_err) {
      rep.max_rel_err = rel;
      rep.worst_param = c.param;
      rep.worst_row = c.row;
      rep.worst_col = c.col;
      rep.analytic = ana;
      rep.numeric = num;
    }
  }
  rep.pass = rep.max_rel_err < tol;
  return rep;
}

}  // namespace storec
