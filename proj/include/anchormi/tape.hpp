#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "anchormi/errors.hpp"
#include "anchormi/matrix.hpp"
#include "anchormi/param_store.hpp"

namespace anchormi {

// Reverse-mode tape over dense f64 matrices. Nodes are appended in
// construction order, so the backward pass is a single reverse sweep that
// visits every node exactly once.
class Tape {
 public:
  using NodeId = int;
  static constexpr double kNegInf = -std::numeric_limits<double>::infinity();

  NodeId constant(Mat m) { return push(Op::kConstant, std::move(m)); }

  NodeId constant_scalar(double v) {
    Mat m(1, 1);
    m(0, 0) = v;
    return constant(std::move(m));
  }

  // Leaf bound to an entry of `store`; the current value is captured.
  NodeId param(ParamStore& store, int entry_index) {
    if (store_ != nullptr && store_ != &store)
      throw ContractError("Tape: parameters from two stores on one tape");
    store_ = &store;
    NodeId id = push(Op::kParam, store.entries[entry_index].value);
    nodes_[id].i0 = entry_index;
    return id;
  }

  NodeId matmul(NodeId a, NodeId b) {
    const Mat &A = val(a), &B = val(b);
    if (A.cols() != B.rows()) throw DimensionError("matmul: inner dimensions differ");
    Mat C(A.rows(), B.cols());
    C.noalias() = A * B;
    return push2(Op::kMatmul, std::move(C), a, b);
  }

  // a * b^T
  NodeId matmul_nt(NodeId a, NodeId b) {
    const Mat &A = val(a), &B = val(b);
    if (A.cols() != B.cols()) throw DimensionError("matmul_nt: inner dimensions differ");
    Mat C(A.rows(), B.rows());
    C.noalias() = A * B.transpose();
    return push2(Op::kMatmulNT, std::move(C), a, b);
  }

  NodeId add(NodeId a, NodeId b) {
    check_same_shape(a, b, "add");
    return push2(Op::kAdd, Mat(val(a) + val(b)), a, b);
  }

  NodeId sub(NodeId a, NodeId b) {
    check_same_shape(a, b, "sub");
    return push2(Op::kSub, Mat(val(a) - val(b)), a, b);
  }

  NodeId hadamard(NodeId a, NodeId b) {
    check_same_shape(a, b, "hadamard");
    return push2(Op::kHadamard, Mat(val(a).cwiseProduct(val(b))), a, b);
  }

  NodeId scale(NodeId a, double c) {
    NodeId id = push2(Op::kScale, Mat(val(a) * c), a, -1);
    nodes_[id].c0 = c;
    return id;
  }

  NodeId add_scalar(NodeId a, double c) {
    Mat C = val(a);
    C.array() += c;
    NodeId id = push2(Op::kAddScalar, std::move(C), a, -1);
    nodes_[id].c0 = c;
    return id;
  }

  // a (m x n) + row vector v (1 x n) broadcast over rows.
  NodeId add_rowvec(NodeId a, NodeId v) {
    const Mat &A = val(a), &V = val(v);
    if (V.rows() != 1 || V.cols() != A.cols())
      throw DimensionError("add_rowvec: bias shape mismatch");
    Mat C = A;
    C.rowwise() += V.row(0);
    return push2(Op::kAddRowVec, std::move(C), a, v);
  }

  NodeId relu(NodeId a) {
    return push2(Op::kRelu, Mat(val(a).cwiseMax(0.0)), a, -1);
  }

  NodeId exp_(NodeId a) {
    return push2(Op::kExp, Mat(val(a).array().exp().matrix()), a, -1);
  }

  NodeId log_(NodeId a) {
    const Mat& A = val(a);
    if ((A.array() <= 0.0).any()) throw DomainError("log: non-positive input");
    return push2(Op::kLog, Mat(A.array().log().matrix()), a, -1);
  }

  NodeId softplus(NodeId a) {
    const Mat& A = val(a);
    Mat C(A.rows(), A.cols());
    for (Eigen::Index i = 0; i < A.size(); ++i) {
      double x = A(i);
      C(i) = x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
    }
    return push2(Op::kSoftplus, std::move(C), a, -1);
  }

  NodeId pow_(NodeId a, double p) {
    const Mat& A = val(a);
    if (p != std::floor(p) && (A.array() <= 0.0).any())
      throw DomainError("pow: non-positive base with fractional exponent");
    NodeId id = push2(Op::kPow, Mat(A.array().pow(p).matrix()), a, -1);
    nodes_[id].c0 = p;
    return id;
  }

  // Row L2 norms, m x n -> m x 1. Zero rows are a numeric error: callers
  // divide by this.
  NodeId row_l2norm(NodeId a) {
    const Mat& A = val(a);
    Mat C(A.rows(), 1);
    for (Eigen::Index r = 0; r < A.rows(); ++r) {
      double n = A.row(r).norm();
      if (!(n > 0.0) || !std::isfinite(n))
        throw NumericError("row_l2norm: zero or non-finite row norm");
      C(r, 0) = n;
    }
    return push2(Op::kRowL2Norm, std::move(C), a, -1);
  }

  // a_bj / v_b with v m x 1.
  NodeId div_rowbroadcast(NodeId a, NodeId v) {
    const Mat &A = val(a), &V = val(v);
    if (V.cols() != 1 || V.rows() != A.rows())
      throw DimensionError("div_rowbroadcast: divisor must be m x 1");
    Eigen::ArrayXd inv = V.col(0).array().inverse();
    Mat C = (A.array().colwise() * inv).matrix();
    return push2(Op::kDivRowBroadcast, std::move(C), a, v);
  }

  NodeId diag(NodeId a) {
    const Mat& A = val(a);
    if (A.rows() != A.cols()) throw DimensionError("diag: matrix not square");
    Mat C = A.diagonal();
    return push2(Op::kDiag, std::move(C), a, -1);
  }

  // out_b = a_{b, (b + offset) mod n}, n x n -> n x 1.
  NodeId cyclic_diag(NodeId a, int offset) {
    const Mat& A = val(a);
    if (A.rows() != A.cols()) throw DimensionError("cyclic_diag: matrix not square");
    int n = static_cast<int>(A.rows());
    Mat C(n, 1);
    for (int b = 0; b < n; ++b) C(b, 0) = A(b, ((b + offset) % n + n) % n);
    NodeId id = push2(Op::kCyclicDiag, std::move(C), a, -1);
    nodes_[id].i0 = offset;
    return id;
  }

  NodeId rowsum(NodeId a) {
    return push2(Op::kRowSum, Mat(val(a).rowwise().sum()), a, -1);
  }

  NodeId sum_all(NodeId a) {
    Mat C(1, 1);
    C(0, 0) = val(a).sum();
    return push2(Op::kSumAll, std::move(C), a, -1);
  }

  NodeId mean_all(NodeId a) {
    Mat C(1, 1);
    C(0, 0) = val(a).mean();
    return push2(Op::kMeanAll, std::move(C), a, -1);
  }

  NodeId reshape(NodeId a, int rows, int cols) {
    const Mat& A = val(a);
    if (A.size() != static_cast<Eigen::Index>(rows) * cols)
      throw DimensionError("reshape: element count mismatch");
    Mat C = Eigen::Map<const Mat>(A.data(), rows, cols);
    NodeId id = push2(Op::kReshape, std::move(C), a, -1);
    nodes_[id].i0 = rows;
    nodes_[id].i1 = cols;
    return id;
  }

  // Stable row-wise log(exp(log_const) + sum over parts of masked exp).
  // Each part is a value node with an optional 0/1 mask node of equal shape
  // (-1 for none); all parts share the row count. log_const may be -inf.
  NodeId log_sumexp_rows(const std::vector<std::pair<NodeId, NodeId>>& parts,
                         double log_const) {
    if (parts.empty()) throw ContractError("log_sumexp_rows: no inputs");
    Eigen::Index m = val(parts[0].first).rows();
    for (auto [v, mk] : parts) {
      if (val(v).rows() != m) throw DimensionError("log_sumexp_rows: row counts differ");
      if (mk >= 0 && (val(mk).rows() != val(v).rows() || val(mk).cols() != val(v).cols()))
        throw DimensionError("log_sumexp_rows: mask shape mismatch");
    }
    Mat out(m, 1);
    for (Eigen::Index b = 0; b < m; ++b) {
      double mx = log_const;
      for (auto [v, mk] : parts) {
        const Mat& V = val(v);
        for (Eigen::Index j = 0; j < V.cols(); ++j) {
          if (mk >= 0 && val(mk)(b, j) == 0.0) continue;
          mx = std::max(mx, V(b, j));
        }
      }
      if (mx == kNegInf) throw DomainError("log_sumexp_rows: empty sum");
      double s = log_const == kNegInf ? 0.0 : std::exp(log_const - mx);
      for (auto [v, mk] : parts) {
        const Mat& V = val(v);
        for (Eigen::Index j = 0; j < V.cols(); ++j) {
          if (mk >= 0 && val(mk)(b, j) == 0.0) continue;
          s += std::exp(V(b, j) - mx);
        }
      }
      out(b, 0) = mx + std::log(s);
    }
    NodeId id = push(Op::kLogSumExpRows, std::move(out));
    nodes_[id].c0 = log_const;
    for (auto [v, mk] : parts) {
      nodes_[id].inputs.push_back(v);
      nodes_[id].inputs.push_back(mk);
    }
    return id;
  }

  const Mat& val(NodeId id) const { return nodes_[id].value; }

  double scalar(NodeId id) const {
    const Mat& v = val(id);
    if (v.size() != 1) throw ContractError("scalar: node is not 1x1");
    return v(0, 0);
  }

  std::size_t size() const { return nodes_.size(); }

  // Reverse sweep from a scalar loss node. Returns gradients aligned with
  // the ParamStore entries seen by this tape.
  GradList backward(NodeId loss) {
    if (val(loss).size() != 1) throw ContractError("backward: loss node is not scalar");
    for (auto& n : nodes_) n.grad.resize(0, 0);
    nodes_[loss].grad = Mat::Ones(1, 1);

    for (int id = loss; id >= 0; --id) {
      Node& n = nodes_[id];
      if (n.grad.size() == 0) continue;
      const Mat& g = n.grad;
      switch (n.op) {
        case Op::kConstant:
        case Op::kParam:
          break;
        case Op::kMatmul: {
          if (wants_grad(n.inputs[0]))
            accum(n.inputs[0], Mat(g * val(n.inputs[1]).transpose()));
          if (wants_grad(n.inputs[1]))
            accum(n.inputs[1], Mat(val(n.inputs[0]).transpose() * g));
          break;
        }
        case Op::kMatmulNT: {
          if (wants_grad(n.inputs[0])) accum(n.inputs[0], Mat(g * val(n.inputs[1])));
          if (wants_grad(n.inputs[1]))
            accum(n.inputs[1], Mat(g.transpose() * val(n.inputs[0])));
          break;
        }
        case Op::kAdd:
          accum(n.inputs[0], g);
          accum(n.inputs[1], std::move(n.grad));
          break;
        case Op::kSub: {
          Mat neg = -g;
          accum(n.inputs[0], std::move(n.grad));
          accum(n.inputs[1], std::move(neg));
          break;
        }
        case Op::kHadamard:
          accum(n.inputs[0], Mat(g.cwiseProduct(val(n.inputs[1]))));
          accum(n.inputs[1], Mat(g.cwiseProduct(val(n.inputs[0]))));
          break;
        case Op::kScale: {
          Mat d = std::move(n.grad);
          d *= n.c0;
          accum(n.inputs[0], std::move(d));
          break;
        }
        case Op::kAddScalar:
          accum(n.inputs[0], std::move(n.grad));
          break;
        case Op::kAddRowVec:
          accum(n.inputs[1], Mat(g.colwise().sum()));
          accum(n.inputs[0], std::move(n.grad));
          break;
        case Op::kRelu: {
          const Mat& x = val(n.inputs[0]);
          Mat d = std::move(n.grad);
          const double* xp = x.data();
          double* dp = d.data();
          for (Eigen::Index i = 0; i < x.size(); ++i)
            if (xp[i] <= 0.0) dp[i] = 0.0;
          accum(n.inputs[0], std::move(d));
          break;
        }
        case Op::kExp:
          accum(n.inputs[0], Mat(g.cwiseProduct(n.value)));
          break;
        case Op::kLog:
          accum(n.inputs[0], Mat(g.cwiseQuotient(val(n.inputs[0]))));
          break;
        case Op::kSoftplus: {
          const Mat& x = val(n.inputs[0]);
          Mat d(x.rows(), x.cols());
          for (Eigen::Index i = 0; i < x.size(); ++i) {
            double xv = x(i);
            d(i) = xv > 0 ? 1.0 / (1.0 + std::exp(-xv))
                          : std::exp(xv) / (1.0 + std::exp(xv));
          }
          accum(n.inputs[0], Mat(g.cwiseProduct(d)));
          break;
        }
        case Op::kPow: {
          const Mat& x = val(n.inputs[0]);
          accum(n.inputs[0],
                Mat((g.array() * n.c0 * x.array().pow(n.c0 - 1.0)).matrix()));
          break;
        }
        case Op::kRowL2Norm: {
          const Mat& x = val(n.inputs[0]);
          Eigen::ArrayXd scale_per_row = g.col(0).array() / n.value.col(0).array();
          accum(n.inputs[0], Mat((x.array().colwise() * scale_per_row).matrix()));
          break;
        }
        case Op::kDivRowBroadcast: {
          const Mat& v = val(n.inputs[1]);
          Eigen::ArrayXd inv = v.col(0).array().inverse();
          accum(n.inputs[0], Mat((g.array().colwise() * inv).matrix()));
          Eigen::ArrayXd dv =
              -(g.cwiseProduct(n.value)).rowwise().sum().array() * inv;
          accum(n.inputs[1], Mat(dv.matrix()));
          break;
        }
        case Op::kDiag: {
          const Mat& x = val(n.inputs[0]);
          Mat d = Mat::Zero(x.rows(), x.cols());
          d.diagonal() = g.col(0);
          accum(n.inputs[0], std::move(d));
          break;
        }
        case Op::kCyclicDiag: {
          const Mat& x = val(n.inputs[0]);
          int nn = static_cast<int>(x.rows());
          Mat d = Mat::Zero(nn, nn);
          for (int b = 0; b < nn; ++b) d(b, ((b + n.i0) % nn + nn) % nn) = g(b, 0);
          accum(n.inputs[0], std::move(d));
          break;
        }
        case Op::kRowSum: {
          const Mat& x = val(n.inputs[0]);
          accum(n.inputs[0], Mat(g.col(0).replicate(1, x.cols())));
          break;
        }
        case Op::kSumAll: {
          const Mat& x = val(n.inputs[0]);
          accum(n.inputs[0], Mat(Mat::Constant(x.rows(), x.cols(), g(0, 0))));
          break;
        }
        case Op::kMeanAll: {
          const Mat& x = val(n.inputs[0]);
          accum(n.inputs[0],
                Mat(Mat::Constant(x.rows(), x.cols(),
                                  g(0, 0) / static_cast<double>(x.size()))));
          break;
        }
        case Op::kReshape: {
          const Mat& x = val(n.inputs[0]);
          Mat d = Eigen::Map<const Mat>(g.data(), x.rows(), x.cols());
          accum(n.inputs[0], std::move(d));
          break;
        }
        case Op::kLogSumExpRows: {
          for (std::size_t p = 0; p < n.inputs.size(); p += 2) {
            NodeId v = n.inputs[p], mk = n.inputs[p + 1];
            if (nodes_[v].op == Op::kConstant) continue;
            const Mat& V = val(v);
            Mat d(V.rows(), V.cols());
            for (Eigen::Index b = 0; b < V.rows(); ++b)
              for (Eigen::Index j = 0; j < V.cols(); ++j) {
                double mval = mk >= 0 ? val(mk)(b, j) : 1.0;
                d(b, j) = mval == 0.0 ? 0.0
                                      : g(b, 0) * std::exp(V(b, j) - n.value(b, 0));
              }
            accum(v, std::move(d));
          }
          break;
        }
      }
    }

    GradList grads;
    if (store_) {
      grads.resize(store_->entries.size());
      for (std::size_t i = 0; i < grads.size(); ++i)
        grads[i] = Mat::Zero(store_->entries[i].value.rows(),
                             store_->entries[i].value.cols());
      for (const auto& n : nodes_)
        if (n.op == Op::kParam && n.grad.size() != 0) grads[n.i0] += n.grad;
    }
    return grads;
  }

  // Gradient of the loss w.r.t. an arbitrary node (valid after backward()).
  const Mat& node_grad(NodeId id) const { return nodes_[id].grad; }

 private:
  enum class Op {
    kConstant, kParam, kMatmul, kMatmulNT, kAdd, kSub, kHadamard, kScale,
    kAddScalar, kAddRowVec, kRelu, kExp, kLog, kSoftplus, kPow, kRowL2Norm,
    kDivRowBroadcast, kDiag, kCyclicDiag, kRowSum, kSumAll, kMeanAll,
    kReshape, kLogSumExpRows,
  };

  struct Node {
    Op op;
    Mat value;
    Mat grad;
    std::vector<NodeId> inputs;
    double c0 = 0.0;
    int i0 = -1, i1 = -1;
  };

  NodeId push(Op op, Mat value) {
    Node n;
    n.op = op;
    n.value = std::move(value);
    nodes_.push_back(std::move(n));
    return static_cast<NodeId>(nodes_.size()) - 1;
  }

  NodeId push2(Op op, Mat value, NodeId a, NodeId b) {
    NodeId id = push(op, std::move(value));
    nodes_[id].inputs.push_back(a);
    if (b >= 0) nodes_[id].inputs.push_back(b);
    return id;
  }

  void check_same_shape(NodeId a, NodeId b, const char* what) const {
    if (val(a).rows() != val(b).rows() || val(a).cols() != val(b).cols())
      throw DimensionError(std::string(what) + ": shape mismatch");
  }

  bool wants_grad(NodeId id) const { return nodes_[id].op != Op::kConstant; }

  void accum(NodeId id, Mat g) {
    Node& n = nodes_[id];
    if (n.op == Op::kConstant) return;
    if (n.grad.size() == 0)
      n.grad = std::move(g);
    else
      n.grad += g;
  }

  std::vector<Node> nodes_;
  ParamStore* store_ = nullptr;
};

}  // namespace anchormi
