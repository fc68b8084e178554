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

#include <functional>
#include <vector>

#include "storec/common.hpp"

namespace storec {

// Handle to a node on a GradientTape.
struct Var {
  int id = -1;
  bool valid() const { return id >= 0; }
};

// Reverse-mode gradient tape over dense float64 matrices.
//
// Values are immutable once recorded. The primitive set is fixed to what the
// model needs: matmul, elementwise arithmetic, row-masked softmax with max
// subtraction, elu/relu/sqrt/square/softplus, row/full reductions, row-wise
// layer normalization, gather/concat/slice plumbing. Every recorded value is
// checked finite; a NaN or Inf raises NumericError naming the operation.
class GradientTape {
 public:
  GradientTape() = default;
  GradientTape(const GradientTape&) = delete;
  GradientTape& operator=(const GradientTape&) = delete;

  // Leaves.
  Var parameter(Matrix value);  // gradient is accumulated
  Var constant(Matrix value);   // treated as fixed data

  // Primitives.
  Var matmul(Var a, Var b);
  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);  // elementwise
  Var scale(Var a, double c);
  Var add_scalar(Var a, double c);
  Var add_row_vector(Var a, Var bias);  // (m x n) + (1 x n), broadcast over rows
  Var transpose(Var a);
  Var rows(Var a, std::vector<int> idx);        // gather rows, repeats allowed
  Var slice_rows(Var a, int begin, int count);
  Var slice_cols(Var a, int begin, int count);
  Var concat_rows(Var a, Var b);
  Var concat_cols(Var a, Var b);
  Var softmax_rows(Var a);
  // Masked softmax: `allowed` is a fixed 0/1 matrix; blocked entries get
  // probability exactly 0. Every row must allow at least one entry.
  Var softmax_rows_masked(Var a, const Matrix& allowed);
  Var elu(Var a);
  // elu(x) + 1 fused: exp(x) on the negative side, so the result stays
  // strictly positive where a literal elu(x)+1 would round to 0.
  Var elu1(Var a);
  Var relu(Var a);
  Var sqrt(Var a);    // domain: strictly positive entries
  Var square(Var a);
  Var softplus(Var a);  // log(1 + e^x), evaluated stably
  Var layer_norm_rows(Var a, double eps = 1e-8);
  Var row_sum(Var a);  // (m x n) -> (m x 1)
  Var sum(Var a);      // -> 1 x 1
  Var mean(Var a);     // -> 1 x 1
  Var add_n(const std::vector<Var>& xs);

  const Matrix& value(Var v) const;
  double scalar(Var v) const;  // value of a 1x1 node
  // Gradient of the last backward() loss w.r.t. node v (zero if unreached).
  const Matrix& grad(Var v) const;

  // Accumulates d(loss)/d(node) for every recorded node, visiting each
  // operation exactly once in reverse order of recording. `loss` must be 1x1.
  void backward(Var loss);

  int size() const { return static_cast<int>(nodes_.size()); }

 private:
  struct Node {
    Matrix value;
    Matrix grad;  // allocated lazily in backward()
    std::function<void()> backprop;
    bool needs_grad = false;
  };

  Var record(Matrix value, bool needs_grad, std::function<void()> backprop,
             const char* op);
  Node& node(Var v);
  const Node& node(Var v) const;
  Matrix& grad_buf(Var v);
  bool needs(Var v) const { return node(v).needs_grad; }

  std::vector<Node> nodes_;
};

}  // namespace storec
