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

#include "storec/tape.hpp"

#include <cmath>
#include <string>
#include <utility>

namespace storec {

namespace {

void check_shape(bool ok, const char* op) {
  if (!ok) throw ContractViolation(std::string(op) + ": shape mismatch");
}

}  // namespace

GradientTape::Node& GradientTape::node(Var v) {
  check(v.valid() && v.id < size(), "tape: invalid Var");
  return nodes_[v.id];
}

const GradientTape::Node& GradientTape::node(Var v) const {
  check(v.valid() && v.id < size(), "tape: invalid Var");
  return nodes_[v.id];
}

Matrix& GradientTape::grad_buf(Var v) {
  Node& n = node(v);
  if (n.grad.size() == 0) n.grad = Matrix::Zero(n.value.rows(), n.value.cols());
  return n.grad;
}

Var GradientTape::record(Matrix value, bool needs_grad,
                         std::function<void()> backprop, const char* op) {
  if (!value.allFinite()) {
    throw NumericError(std::string(op) + ": non-finite value produced");
  }
  nodes_.push_back(Node{std::move(value), Matrix(), std::move(backprop), needs_grad});
  return Var{size() - 1};
}

Var GradientTape::parameter(Matrix value) {
  return record(std::move(value), true, nullptr, "parameter");
}

Var GradientTape::constant(Matrix value) {
  return record(std::move(value), false, nullptr, "constant");
}

const Matrix& GradientTape::value(Var v) const { return node(v).value; }

double GradientTape::scalar(Var v) const {
  const Matrix& m = node(v).value;
  check(m.rows() == 1 && m.cols() == 1, "scalar: node is not 1x1");
  return m(0, 0);
}

const Matrix& GradientTape::grad(Var v) const {
  static const Matrix kEmpty;
  const Node& n = node(v);
  return n.grad.size() == 0 ? kEmpty : n.grad;
}

void GradientTape::backward(Var loss) {
  Node& top = node(loss);
  check(top.value.rows() == 1 && top.value.cols() == 1,
        "backward: loss node must be a 1x1 scalar");
  // Zero-fill so unreached nodes report zero gradients.
  for (Node& n : nodes_) {
    if (n.needs_grad) n.grad = Matrix::Zero(n.value.rows(), n.value.cols());
  }
  if (!top.needs_grad) return;  // loss does not depend on any parameter
  top.grad(0, 0) = 1.0;
  for (int i = loss.id; i >= 0; --i) {
    Node& n = nodes_[i];
    if (n.backprop && n.needs_grad) n.backprop();
  }
}

Var GradientTape::matmul(Var a, Var b) {
  const Matrix& av = value(a);
  const Matrix& bv = value(b);
  check_shape(av.cols() == bv.rows(), "matmul");
  bool ng = needs(a) || needs(b);
  Var out{size()};
  auto bp = [this, a, b, out]() {
    const Matrix& g = node(out).grad;
    if (needs(a)) grad_buf(a).noalias() += g * value(b).transpose();
    if (needs(b)) grad_buf(b).noalias() += value(a).transpose() * g;
  };
  return record(av * bv, ng, ng ? std::function<void()>(bp) : nullptr, "matmul");
}

Var GradientTape::add(Var a, Var b) {
  const Matrix& av = value(a);
  const Matrix& bv = value(b);
  check_shape(av.rows() == bv.rows() && av.cols() == bv.cols(), "add");
  bool ng = needs(a) || needs(b);
  Var out{size()};
  auto bp = [this, a, b, out]() {
    const Matrix& g = node(out).grad;
    if (needs(a)) grad_buf(a) += g;
    if (needs(b)) grad_buf(b) += g;
  };
  return record(av + bv, ng, ng ? std::function<void()>(bp) : nullptr, "add");
}

Var GradientTape::sub(Var a, Var b) {
  const Matrix& av = value(a);
  const Matrix& bv = value(b);
  check_shape(av.rows() == bv.rows() && av.cols() == bv.cols(), "sub");
  bool ng = needs(a) || needs(b);
  Var out{size()};
  auto bp = [this, a, b, out]() {
    const Matrix& g = node(out).grad;
    if (needs(a)) grad_buf(a) += g;
    if (needs(b)) grad_buf(b) -= g;
  };
  return record(av - bv, ng, ng ? std::function<void()>(bp) : nullptr, "sub");
}

Var GradientTape::mul(Var a, Var b) {
  const Matrix& av = value(a);
  const Matrix& bv = value(b);
  check_shape(av.rows() == bv.rows() && av.cols() == bv.cols(), "mul");
  bool ng = needs(a) || needs(b);
  Var out{size()};
  auto bp = [this, a, b, out]() {
    const Matrix& g = node(out).grad;
    if (needs(a)) grad_buf(a).array() += g.array() * value(b).array();
    if (needs(b)) grad_buf(b).array() += g.array() * value(a).array();
  };
  return record(av.cwiseProduct(bv), ng, ng ? std::function<void()>(bp) : nullptr,
                "mul");
}

Var GradientTape::scale(Var a, double c) {
  bool ng = needs(a);
  Var out{size()};
  auto bp = [this, a, c, out]() { grad_buf(a) += c * node(out).grad; };
  return record(value(a) * c, ng, ng ? std::function<void()>(bp) : nullptr, "scale");
}

Var GradientTape::add_scalar(Var a, double c) {
  bool ng = needs(a);
  Var out{size()};
  auto bp = [this, a, out]() { grad_buf(a) += node(out).grad; };
  return record((value(a).array() + c).matrix(), ng,
                ng ? std::function<void()>(bp) : nullptr, "add_scalar");
}

Var GradientTape::add_row_vector(Var a, Var bias) {
  const Matrix& av = value(a);
  const Matrix& bv = value(bias);
  check_shape(bv.rows() == 1 && bv.cols() == av.cols(), "add_row_vector");
  bool ng = needs(a) || needs(bias);
  Var out{size()};
  auto bp = [this, a, bias, out]() {
    const Matrix& g = node(out).grad;
    if (needs(a)) grad_buf(a) += g;
    if (needs(bias)) grad_buf(bias) += g.colwise().sum();
  };
  return record(av.rowwise() + bv.row(0), ng,
                ng ? std::function<void()>(bp) : nullptr, "add_row_vector");
}

Var GradientTape::transpose(Var a) {
  bool ng = needs(a);
  Var out{size()};
  auto bp = [this, a, out]() { grad_buf(a) += node(out).grad.transpose(); };
  return record(value(a).transpose(), ng, ng ? std::function<void()>(bp) : nullptr,
                "transpose");
}

Var GradientTape::rows(Var a, std::vector<int> idx) {
  const Matrix& av = value(a);
  Matrix out(static_cast<int>(idx.size()), av.cols());
  for (int r = 0; r < out.rows(); ++r) {
    check(idx[r] >= 0 && idx[r] < av.rows(), "rows: index out of range");
    out.row(r) = av.row(idx[r]);
  }
  bool ng = needs(a);
  Var ov{size()};
  auto bp = [this, a, idx = std::move(idx), ov]() {
    const Matrix& g = node(ov).grad;
    Matrix& ga = grad_buf(a);
    for (int r = 0; r < g.rows(); ++r) ga.row(idx[r]) += g.row(r);
  };
  return record(std::move(out), ng, ng ? std::function<void()>(bp) : nullptr, "rows");
}

Var GradientTape::slice_rows(Var a, int begin, int count) {
  const Matrix& av = value(a);
  check(begin >= 0 && count >= 0 && begin + count <= av.rows(),
        "slice_rows: range out of bounds");
  bool ng = needs(a);
  Var out{size()};
  auto bp = [this, a, begin, count, out]() {
    grad_buf(a).middleRows(begin, count) += node(out).grad;
  };
  return record(av.middleRows(begin, count), ng,
                ng ? std::function<void()>(bp) : nullptr, "slice_rows");
}

Var GradientTape::slice_cols(Var a, int begin, int count) {
  const Matrix& av = value(a);
  check(begin >= 0 && count >= 0 && begin + count <= av.cols(),
        "slice_cols: range out of bounds");
  bool ng = needs(a);
  Var out{size()};
  auto bp = [this, a, begin, count, out]() {
    grad_buf(a).middleCols(begin, count) += node(out).grad;
  };
  return record(av.middleCols(begin, count), ng,
                ng ? std::function<void()>(bp) : nullptr, "slice_cols");
}

Var GradientTape::concat_rows(Var a, Var b) {
  const Matrix& av = value(a);
  const Matrix& bv = value(b);
  check_shape(av.cols() == bv.cols(), "concat_rows");
  Matrix out(av.rows() + bv.rows(), av.cols());
  out.topRows(av.rows()) = av;
  out.bottomRows(bv.rows()) = bv;
  bool ng = needs(a) || needs(b);
  Var ov{size()};
  auto bp = [this, a, b, ov]() {
    const Matrix& g = node(ov).grad;
    const int ra = static_cast<int>(value(a).rows());
    if (needs(a)) grad_buf(a) += g.topRows(ra);
    if (needs(b)) grad_buf(b) += g.bottomRows(g.rows() - ra);
  };
  return record(std::move(out), ng, ng ? std::function<void()>(bp) : nullptr,
                "concat_rows");
}

Var GradientTape::concat_cols(Var a, Var b) {
  const Matrix& av = value(a);
  const Matrix& bv = value(b);
  check_shape(av.rows() == bv.rows(), "concat_cols");
  Matrix out(av.rows(), av.cols() + bv.cols());
  out.leftCols(av.cols()) = av;
  out.rightCols(bv.cols()) = bv;
  bool ng = needs(a) || needs(b);
  Var ov{size()};
  auto bp = [this, a, b, ov]() {
    const Matrix& g = node(ov).grad;
    const int ca = static_cast<int>(value(a).cols());
    if (needs(a)) grad_buf(a) += g.leftCols(ca);
    if (needs(b)) grad_buf(b) += g.rightCols(g.cols() - ca);
  };
  return record(std::move(out), ng, ng ? std::function<void()>(bp) : nullptr,
                "concat_cols");
}

Var GradientTape::softmax_rows(Var a) {
  return softmax_rows_masked(a, Matrix::Ones(value(a).rows(), value(a).cols()));
}

Var GradientTape::softmax_rows_masked(Var a, const Matrix& allowed) {
  const Matrix& av = value(a);
  check_shape(allowed.rows() == av.rows() && allowed.cols() == av.cols(),
              "softmax_rows_masked");
  Matrix p(av.rows(), av.cols());
  for (int r = 0; r < av.rows(); ++r) {
    // Max subtraction over the allowed entries keeps exp() in range.
    double mx = -std::numeric_limits<double>::infinity();
    for (int c = 0; c < av.cols(); ++c) {
      if (allowed(r, c) != 0.0) mx = std::max(mx, av(r, c));
    }
    check(std::isfinite(mx), "softmax_rows_masked: row with no allowed entries");
    double z = 0.0;
    for (int c = 0; c < av.cols(); ++c) {
      const double e = allowed(r, c) != 0.0 ? std::exp(av(r, c) - mx) : 0.0;
      p(r, c) = e;
      z += e;
    }
    p.row(r) /= z;
  }
  bool ng = needs(a);
  Var out{size()};
  auto bp = [this, a, out]() {
    const Matrix& g = node(out).grad;
    const Matrix& pv = node(out).value;
    // dL/ds = p .* (g - rowsum(g .* p))
    Vector dot = (g.array() * pv.array()).rowwise().sum();
    Matrix shifted = g;
    shifted.colwise() -= dot;
    grad_buf(a).array() += pv.array() * shifted.array();
  };
  return record(std::move(p), ng, ng ? std::function<void()>(bp) : nullptr,
                "softmax_rows_masked");
}

Var GradientTape::elu(Var a) {
  const Matrix& av = value(a);
  Matrix out = av.unaryExpr([](double x) { return x > 0 ? x : std::expm1(x); });
  bool ng = needs(a);
  Var ov{size()};
  auto bp = [this, a, ov]() {
    const Matrix& g = node(ov).grad;
    const Matrix& x = value(a);
    const Matrix& y = node(ov).value;
    // elu'(x) = 1 for x > 0, e^x = elu(x) + 1 otherwise.
    Matrix d = x.binaryExpr(y, [](double xv, double yv) {
      return xv > 0 ? 1.0 : yv + 1.0;
    });
    grad_buf(a).array() += g.array() * d.array();
  };
  return record(std::move(out), ng, ng ? std::function<void()>(bp) : nullptr, "elu");
}

Var GradientTape::elu1(Var a) {
  const Matrix& av = value(a);
  Matrix out = av.unaryExpr([](double x) { return x > 0 ? x + 1.0 : std::exp(x); });
  bool ng = needs(a);
  Var ov{size()};
  auto bp = [this, a, ov]() {
    const Matrix& g = node(ov).grad;
    const Matrix& y = node(ov).value;
    // f'(x) = 1 for x > 0 and e^x = f(x) otherwise, i.e. min(f(x), 1).
    Matrix d = y.unaryExpr([](double yv) { return yv < 1.0 ? yv : 1.0; });
    grad_buf(a).array() += g.array() * d.array();
  };
  return record(std::move(out), ng, ng ? std::function<void()>(bp) : nullptr, "elu1");
}

Var GradientTape::relu(Var a) {
  const Matrix& av = value(a);
  bool ng = needs(a);
  Var ov{size()};
  auto bp = [this, a, ov]() {
    const Matrix& g = node(ov).grad;
    const Matrix& x = value(a);
    grad_buf(a).array() += g.array() * (x.array() > 0).cast<double>();
  };
  return record(av.cwiseMax(0.0), ng, ng ? std::function<void()>(bp) : nullptr,
                "relu");
}

Var GradientTape::sqrt(Var a) {
  const Matrix& av = value(a);
  check((av.array() > 0).all(), "sqrt: domain requires strictly positive entries");
  bool ng = needs(a);
  Var ov{size()};
  auto bp = [this, a, ov]() {
    const Matrix& g = node(ov).grad;
    const Matrix& y = node(ov).value;
    grad_buf(a).array() += g.array() * 0.5 / y.array();
  };
  return record(av.cwiseSqrt(), ng, ng ? std::function<void()>(bp) : nullptr, "sqrt");
}

Var GradientTape::square(Var a) {
  const Matrix& av = value(a);
  bool ng = needs(a);
  Var ov{size()};
  auto bp = [this, a, ov]() {
    grad_buf(a).array() += node(ov).grad.array() * 2.0 * value(a).array();
  };
  return record(av.array().square().matrix(), ng,
                ng ? std::function<void()>(bp) : nullptr, "square");
}

Var GradientTape::softplus(Var a) {
  const Matrix& av = value(a);
  Matrix out = av.unaryExpr([](double x) {
    return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
  });
  bool ng = needs(a);
  Var ov{size()};
  auto bp = [this, a, ov]() {
    const Matrix& g = node(ov).grad;
    const Matrix& x = value(a);
    // softplus'(x) = sigmoid(x)
    Matrix s = x.unaryExpr([](double v) {
      return v > 0 ? 1.0 / (1.0 + std::exp(-v))
                   : std::exp(v) / (1.0 + std::exp(v));
    });
    grad_buf(a).array() += g.array() * s.array();
  };
  return record(std::move(out), ng, ng ? std::function<void()>(bp) : nullptr,
                "softplus");
}

Var GradientTape::layer_norm_rows(Var a, double eps) {
  const Matrix& av = value(a);
  Vector mu = av.rowwise().mean();
  Matrix centered = av.colwise() - mu;
  Vector var = centered.array().square().rowwise().mean();
  Vector istd = (var.array() + eps).sqrt().inverse();
  Matrix out = (centered.array().colwise() * istd.array()).matrix();
  bool ng = needs(a);
  Var ov{size()};
  // With y = (x - mean) * istd: dx = istd * (g - mean(g) - y * mean(g .* y)).
  auto bp = [this, a, ov, istd]() {
    const Matrix& g = node(ov).grad;
    const Matrix& y = node(ov).value;
    Vector gmean = g.rowwise().mean();
    Vector gymean = (g.array() * y.array()).rowwise().mean();
    Matrix inner = g;
    inner.colwise() -= gmean;
    Matrix scaled_y = y.array().colwise() * gymean.array();
    inner -= scaled_y;
    inner.array().colwise() *= istd.array();
    grad_buf(a) += inner;
  };
  return record(std::move(out), ng, ng ? std::function<void()>(bp) : nullptr,
                "layer_norm_rows");
}

Var GradientTape::row_sum(Var a) {
  const Matrix& av = value(a);
  bool ng = needs(a);
  Var ov{size()};
  auto bp = [this, a, ov]() {
    const Matrix& g = node(ov).grad;  // (m x 1)
    grad_buf(a).colwise() += g.col(0);
  };
  Matrix out = av.rowwise().sum();
  return record(std::move(out), ng, ng ? std::function<void()>(bp) : nullptr,
                "row_sum");
}

Var GradientTape::sum(Var a) {
  bool ng = needs(a);
  Var ov{size()};
  auto bp = [this, a, ov]() {
    grad_buf(a).array() += node(ov).grad(0, 0);
  };
  Matrix out(1, 1);
  out(0, 0) = value(a).sum();
  return record(std::move(out), ng, ng ? std::function<void()>(bp) : nullptr, "sum");
}

Var GradientTape::mean(Var a) {
  bool ng = needs(a);
  const double inv = 1.0 / static_cast<double>(value(a).size());
  Var ov{size()};
  auto bp = [this, a, ov, inv]() {
    grad_buf(a).array() += node(ov).grad(0, 0) * inv;
  };
  Matrix out(1, 1);
  out(0, 0) = value(a).mean();
  return record(std::move(out), ng, ng ? std::function<void()>(bp) : nullptr, "mean");
}

Var GradientTape::add_n(const std::vector<Var>& xs) {
  check(!xs.empty(), "add_n: empty input list");
  Matrix out = value(xs[0]);
  bool ng = needs(xs[0]);
  for (size_t i = 1; i < xs.size(); ++i) {
    check_shape(value(xs[i]).rows() == out.rows() &&
                    value(xs[i]).cols() == out.cols(),
                "add_n");
    out += value(xs[i]);
    ng = ng || needs(xs[i]);
  }
  Var ov{size()};
  auto bp = [this, xs, ov]() {
    const Matrix& g = node(ov).grad;
    for (Var x : xs) {
      if (needs(x)) grad_buf(x) += g;
    }
  };
  return record(std::move(out), ng, ng ? std::function<void()>(bp) : nullptr,
                "add_n");
}

}  // namespace storec
