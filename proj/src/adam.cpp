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

#include "storec/adam.hpp"

#include <cmath>

namespace storec {

void Adam::step(const std::vector<Matrix*>& params,
                const std::vector<const Matrix*>& grads) {
  check(params.size() == grads.size(), "adam: params/grads length mismatch");
  if (m_.empty()) {
    m_.reserve(params.size());
    v_.reserve(params.size());
    for (const Matrix* p : params) {
      m_.push_back(Matrix::Zero(p->rows(), p->cols()));
      v_.push_back(Matrix::Zero(p->rows(), p->cols()));
    }
  }
  check(m_.size() == params.size(), "adam: parameter count changed between steps");
  ++t_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, t_);
  const double bc2 = 1.0 - std::pow(cfg_.beta2, t_);
  for (size_t i = 0; i < params.size(); ++i) {
    Matrix& p = *params[i];
    const Matrix& g = *grads[i];
    check(p.rows() == m_[i].rows() && p.cols() == m_[i].cols() &&
              g.rows() == p.rows() && g.cols() == p.cols(),
          "adam: shape changed between steps");
    m_[i] = cfg_.beta1 * m_[i] + (1.0 - cfg_.beta1) * g;
    v_[i].array() = cfg_.beta2 * v_[i].array() + (1.0 - cfg_.beta2) * g.array().square();
    Matrix mhat = m_[i] / bc1;
    Matrix vhat = v_[i] / bc2;
    p.array() -= cfg_.lr * mhat.array() / (vhat.array().sqrt() + cfg_.eps);
  }
}

}  // namespace storec
