#pragma once

#include <cmath>
#include <vector>

#include "mdlopt/tensor/graph.hpp"

// Differentiable primitives over 2-D float matrices. Convention used across
// the project: rows index batch elements (time-major `t*B + b` for sequence
// data), columns index features.
namespace mdlopt::ag {

// ---------------------------------------------------------------------------
// linear algebra

inline Var mm(Var a, Var b) {
  assert(a.cols() == b.rows());
  Tape& t = *a.tape;
  bool ng = a.slot->needs_grad || b.slot->needs_grad;
  Tape::Slot* out = t.emplace(a.v() * b.v(), ng);
  if (ng) {
    auto as = a.slot, bs = b.slot;
    out->back = [as, bs, out]() {
      if (as->needs_grad) Tape::acc_expr(as, out->g * bs->v.transpose());
      if (bs->needs_grad) Tape::acc_expr(bs, as->v.transpose() * out->g);
    };
  }
  return Var(&t, out);
}

// a * b^T
inline Var mm_nt(Var a, Var b) {
  assert(a.cols() == b.cols());
  Tape& t = *a.tape;
  bool ng = a.slot->needs_grad || b.slot->needs_grad;
  Tape::Slot* out = t.emplace(a.v() * b.v().transpose(), ng);
  if (ng) {
    auto as = a.slot, bs = b.slot;
    out->back = [as, bs, out]() {
      if (as->needs_grad) Tape::acc_expr(as, out->g * bs->v);
      if (bs->needs_grad) Tape::acc_expr(bs, out->g.transpose() * as->v);
    };
  }
  return Var(&t, out);
}

// ---------------------------------------------------------------------------
// pointwise arithmetic

inline Var add(Var a, Var b) {
  assert(a.rows() == b.rows() && a.cols() == b.cols());
  Tape& t = *a.tape;
  bool ng = a.slot->needs_grad || b.slot->needs_grad;
  Tape::Slot* out = t.emplace(a.v() + b.v(), ng);
  if (ng) {
    auto as = a.slot, bs = b.slot;
    out->back = [as, bs, out]() {
      Tape::acc(as, out->g);
      Tape::acc(bs, out->g);
    };
  }
  return Var(&t, out);
}

inline Var sub(Var a, Var b) {
  assert(a.rows() == b.rows() && a.cols() == b.cols());
  Tape& t = *a.tape;
  bool ng = a.slot->needs_grad || b.slot->needs_grad;
  Tape::Slot* out = t.emplace(a.v() - b.v(), ng);
  if (ng) {
    auto as = a.slot, bs = b.slot;
    out->back = [as, bs, out]() {
      Tape::acc(as, out->g);
      Tape::acc_expr(bs, -out->g);
    };
  }
  return Var(&t, out);
}

inline Var mul(Var a, Var b) {
  assert(a.rows() == b.rows() && a.cols() == b.cols());
  Tape& t = *a.tape;
  bool ng = a.slot->needs_grad || b.slot->needs_grad;
  Tape::Slot* out = t.emplace(a.v().cwiseProduct(b.v()), ng);
  if (ng) {
    auto as = a.slot, bs = b.slot;
    out->back = [as, bs, out]() {
      if (as->needs_grad) Tape::acc_expr(as, out->g.cwiseProduct(bs->v));
      if (bs->needs_grad) Tape::acc_expr(bs, out->g.cwiseProduct(as->v));
    };
  }
  return Var(&t, out);
}

inline Var div(Var a, Var b) {
  assert(a.rows() == b.rows() && a.cols() == b.cols());
  Tape& t = *a.tape;
  bool ng = a.slot->needs_grad || b.slot->needs_grad;
  Tape::Slot* out = t.emplace(a.v().cwiseQuotient(b.v()), ng);
  if (ng) {
    auto as = a.slot, bs = b.slot;
    out->back = [as, bs, out]() {
      if (as->needs_grad) Tape::acc_expr(as, out->g.cwiseQuotient(bs->v));
      if (bs->needs_grad)
        Tape::acc_expr(bs, -(out->g.cwiseProduct(out->v).cwiseQuotient(bs->v)));
    };
  }
  return Var(&t, out);
}

inline Var scale(Var a, float c) {
  Tape& t = *a.tape;
  bool ng = a.slot->needs_grad;
  Tape::Slot* out = t.emplace(a.v() * c, ng);
  if (ng) {
    auto as = a.slot;
    out->back = [as, out, c]() { Tape::acc_expr(as, out->g * c); };
  }
  return Var(&t, out);
}

inline Var add_const(Var a, float c) {
  Tape& t = *a.tape;
  bool ng = a.slot->needs_grad;
  Tape::Slot* out = t.emplace(a.v().array() + c, ng);
  if (ng) {
    auto as = a.slot;
    out->back = [as, out]() { Tape::acc(as, out->g); };
  }
  return Var(&t, out);
}

inline Var neg(Var a) { return scale(a, -1.0f); }

// Broadcast a 1xC row (bias) over all rows of a.
inline Var add_rowvec(Var a, Var row) {
  assert(row.rows() == 1 && row.cols() == a.cols());
  Tape& t = *a.tape;
  bool ng = a.slot->needs_grad || row.slot->needs_grad;
  Tape::Slot* out = t.emplace(a.v().rowwise() + row.v().row(0), ng);
  if (ng) {
    auto as = a.slot, rs = row.slot;
    out->back = [as, rs, out]() {
      Tape::acc(as, out->g);
      if (rs->needs_grad) Tape::acc_expr(rs, out->g.colwise().sum());
    };
  }
  return Var(&t, out);
}

// Broadcast an Nx1 column over all columns of a.
inline Var add_colvec(Var a, Var col) {
  assert(col.cols() == 1 && col.rows() == a.rows());
  Tape& t = *a.tape;
  bool ng = a.slot->needs_grad || col.slot->needs_grad;
  Tape::Slot* out = t.emplace(a.v().colwise() + col.v().col(0), ng);
  if (ng) {
    auto as = a.slot, cs = col.slot;
    out->back = [as, cs, out]() {
      Tape::acc(as, out->g);
      if (cs->needs_grad) Tape::acc_expr(cs, out->g.rowwise().sum());
    };
  }
  return Var(&t, out);
}

// Multiply each row of a by the matching entry of the Nx1 column s.
inline Var scale_rows(Var a, Var s) {
  assert(s.cols() == 1 && s.rows() == a.rows());
  Tape& t = *a.tape;
  bool ng = a.slot->needs_grad || s.slot->needs_grad;
  Tape::Slot* out = t.emplace(a.v().array().colwise() * s.v().col(0).array(), ng);
  if (ng) {
    auto as = a.slot, ss = s.slot;
    out->back = [as, ss, out]() {
      if (as->needs_grad)
        Tape::acc_expr(as, out->g.array().colwise() * ss->v.col(0).array());
      if (ss->needs_grad)
        Tape::acc_expr(ss, out->g.cwiseProduct(as->v).rowwise().sum());
    };
  }
  return Var(&t, out);
}

// ---------------------------------------------------------------------------
// activations

inline Var relu(Var a) {
  Tape& t = *a.tape;
  bool ng = a.slot->needs_grad;
  Tape::Slot* out = t.emplace(a.v().cwiseMax(0.0f), ng);
  if (ng) {
    auto as = a.slot;
    out->back = [as, out]() {
      Tape::acc_expr(as, (as->v.array() > 0.0f).cast<float>() * out->g.array());
    };
  }
  return Var(&t, out);
}

inline Var elu(Var a) {
  Tape& t = *a.tape;
  bool ng = a.slot->needs_grad;
  Mat v = a.v().unaryExpr([](float x) { return x > 0.0f ? x : std::expm1(x); });
  Tape::Slot* out = t.emplace(std::move(v), ng);
  if (ng) {
    auto as = a.slot;
    out->back = [as, out]() {
      // d/dx elu = 1 for x>0, exp(x) = elu(x)+1 otherwise
      Mat d = (as->v.array() > 0.0f).select(Mat::Ones(as->v.rows(), as->v.cols()),
                                            out->v.array() + 1.0f);
      Tape::acc_expr(as, out->g.cwiseProduct(d));
    };
  }
  return Var(&t, out);
}

inline Var tanh_op(Var a) {
  Tape& t = *a.tape;
  bool ng = a.slot->needs_grad;
  Tape::Slot* out = t.emplace(a.v().array().tanh(), ng);
  if (ng) {
    auto as = a.slot;
    out->back = [as, out]() {
      Tape::acc_expr(as, out->g.array() * (1.0f - out->v.array().square()));
    };
  }
  return Var(&t, out);
}

inline Var sigmoid(Var a) {
  Tape& t = *a.tape;
  bool ng = a.slot->needs_grad;
  Mat v = (1.0f / (1.0f + (-a.v().array()).exp()));
  Tape::Slot* out = t.emplace(std::move(v), ng);
  if (ng) {
    auto as = a.slot;
    out->back = [as, out]() {
      Tape::acc_expr(as, out->g.array() * out->v.array() * (1.0f - out->v.array()));
    };
  }
  return Var(&t, out);
}

inline Var softplus(Var a) {
  Tape& t = *a.tape;
  bool ng = a.slot->needs_grad;
  Mat v = a.v().unaryExpr([](float x) {
    // stable log(1 + e^x)
    return x > 20.0f ? x : std::log1p(std::exp(std::min(x, 20.0f)));
  });
  Tape::Slot* out = t.emplace(std::move(v), ng);
  if (ng) {
    auto as = a.slot;
    out->back = [as, out]() {
      Mat sig = 1.0f / (1.0f + (-as->v.array()).exp());
      Tape::acc_expr(as, out->g.cwiseProduct(sig));
    };
  }
  return Var(&t, out);
}

inline Var exp_op(Var a) {
  Tape& t = *a.tape;
  bool ng = a.slot->needs_grad;
  Tape::Slot* out = t.emplace(a.v().array().exp(), ng);
  if (ng) {
    auto as = a.slot;
    out->back = [as, out]() { Tape::acc_expr(as, out->g.cwiseProduct(out->v)); };
  }
  return Var(&t, out);
}

inline Var log_op(Var a) {
  Tape& t = *a.tape;
  bool ng = a.slot->needs_grad;
  Tape::Slot* out = t.emplace(a.v().array().log(), ng);
  if (ng) {
    auto as = a.slot;
    out->back = [as, out]() { Tape::acc_expr(as, out->g.cwiseQuotient(as->v)); };
  }
  return Var(&t, out);
}

inline Var square(Var a) {
  Tape& t = *a.tape;
  bool ng = a.slot->needs_grad;
  Tape::Slot* out = t.emplace(a.v().array().square(), ng);
  if (ng) {
    auto as = a.slot;
    out->back = [as, out]() { Tape::acc_expr(as, 2.0f * out->g.cwiseProduct(as->v)); };
  }
  return Var(&t, out);
}

// ---------------------------------------------------------------------------
// softmax family (rowwise, numerically stable)

inline Var softmax_rows(Var a) {
  Tape& t = *a.tape;
  bool ng = a.slot->needs_grad;
  Mat v = a.v();
  for (Eigen::Index r = 0; r < v.rows(); ++r) {
    float m = v.row(r).maxCoeff();
    v.row(r) = (v.row(r).array() - m).exp();
    v.row(r) /= v.row(r).sum();
  }
  Tape::Slot* out = t.emplace(std::move(v), ng);
  if (ng) {
    auto as = a.slot;
    out->back = [as, out]() {
      Eigen::VectorXf dot = out->g.cwiseProduct(out->v).rowwise().sum();
      Mat centered = out->g.colwise() - dot;
      Tape::acc_expr(as, out->v.cwiseProduct(centered));
    };
  }
  return Var(&t, out);
}

inline Var log_softmax_rows(Var a) {
  Tape& t = *a.tape;
  bool ng = a.slot->needs_grad;
  Mat v = a.v();
  for (Eigen::Index r = 0; r < v.rows(); ++r) {
    float m = v.row(r).maxCoeff();
    float lse = std::log((v.row(r).array() - m).exp().sum()) + m;
    v.row(r).array() -= lse;
  }
  Tape::Slot* out = t.emplace(std::move(v), ng);
  if (ng) {
    auto as = a.slot;
    out->back = [as, out]() {
      Eigen::VectorXf rowsum = out->g.rowwise().sum();
      Mat probs_scaled =
          (out->v.array().exp().colwise() * rowsum.array()).matrix();
      Tape::acc_expr(as, out->g - probs_scaled);
    };
  }
  return Var(&t, out);
}

// ---------------------------------------------------------------------------
// reductions

inline Var sum_all(Var a) {
  Tape& t = *a.tape;
  bool ng = a.slot->needs_grad;
  Tape::Slot* out = t.emplace(Mat::Constant(1, 1, a.v().sum()), ng);
  if (ng) {
    auto as = a.slot;
    out->back = [as, out]() {
      Tape::acc_expr(as, Mat::Constant(as->v.rows(), as->v.cols(), out->g(0, 0)));
    };
  }
  return Var(&t, out);
}

inline Var mean_all(Var a) { return scale(sum_all(a), 1.0f / static_cast<float>(a.v().size())); }

// NxC -> Nx1 (sum across columns per row)
inline Var sum_cols(Var a) {
  Tape& t = *a.tape;
  bool ng = a.slot->needs_grad;
  Tape::Slot* out = t.emplace(a.v().rowwise().sum(), ng);
  if (ng) {
    auto as = a.slot;
    out->back = [as, out]() {
      Tape::acc_expr(as, out->g.col(0).replicate(1, as->v.cols()));
    };
  }
  return Var(&t, out);
}

// NxC -> 1xC (sum across rows per column)
inline Var sum_rows(Var a) {
  Tape& t = *a.tape;
  bool ng = a.slot->needs_grad;
  Tape::Slot* out = t.emplace(a.v().colwise().sum(), ng);
  if (ng) {
    auto as = a.slot;
    out->back = [as, out]() {
      Tape::acc_expr(as, out->g.row(0).replicate(as->v.rows(), 1));
    };
  }
  return Var(&t, out);
}

// ---------------------------------------------------------------------------
// structure: concat / slice / gather / permute

inline Var concat_cols(const std::vector<Var>& parts) {
  assert(!parts.empty());
  Tape& t = *parts[0].tape;
  Eigen::Index rows = parts[0].rows(), cols = 0;
  bool ng = false;
  for (const Var& p : parts) {
    assert(p.rows() == rows);
    cols += p.cols();
    ng = ng || p.slot->needs_grad;
  }
  Mat v(rows, cols);
  Eigen::Index off = 0;
  for (const Var& p : parts) {
    v.middleCols(off, p.cols()) = p.v();
    off += p.cols();
  }
  Tape::Slot* out = t.emplace(std::move(v), ng);
  if (ng) {
    std::vector<Tape::Slot*> srcs;
    for (const Var& p : parts) srcs.push_back(p.slot);
    out->back = [srcs, out]() {
      Eigen::Index off = 0;
      for (Tape::Slot* s : srcs) {
        if (s->needs_grad) Tape::acc_expr(s, out->g.middleCols(off, s->v.cols()));
        off += s->v.cols();
      }
    };
  }
  return Var(&t, out);
}

inline Var concat_rows(const std::vector<Var>& parts) {
  assert(!parts.empty());
  Tape& t = *parts[0].tape;
  Eigen::Index cols = parts[0].cols(), rows = 0;
  bool ng = false;
  for (const Var& p : parts) {
    assert(p.cols() == cols);
    rows += p.rows();
    ng = ng || p.slot->needs_grad;
  }
  Mat v(rows, cols);
  Eigen::Index off = 0;
  for (const Var& p : parts) {
    v.middleRows(off, p.rows()) = p.v();
    off += p.rows();
  }
  Tape::Slot* out = t.emplace(std::move(v), ng);
  if (ng) {
    std::vector<Tape::Slot*> srcs;
    for (const Var& p : parts) srcs.push_back(p.slot);
    out->back = [srcs, out]() {
      Eigen::Index off = 0;
      for (Tape::Slot* s : srcs) {
        if (s->needs_grad) Tape::acc_expr(s, out->g.middleRows(off, s->v.rows()));
        off += s->v.rows();
      }
    };
  }
  return Var(&t, out);
}

inline Var slice_cols(Var a, Eigen::Index c0, Eigen::Index n) {
  Tape& t = *a.tape;
  bool ng = a.slot->needs_grad;
  Tape::Slot* out = t.emplace(a.v().middleCols(c0, n), ng);
  if (ng) {
    auto as = a.slot;
    out->back = [as, out, c0, n]() {
      Mat& g = Tape::gbuf(as, as->v.rows(), as->v.cols());
      g.middleCols(c0, n) += out->g;
    };
  }
  return Var(&t, out);
}

inline Var slice_rows(Var a, Eigen::Index r0, Eigen::Index n) {
  Tape& t = *a.tape;
  bool ng = a.slot->needs_grad;
  Tape::Slot* out = t.emplace(a.v().middleRows(r0, n), ng);
  if (ng) {
    auto as = a.slot;
    out->back = [as, out, r0, n]() {
      Mat& g = Tape::gbuf(as, as->v.rows(), as->v.cols());
      g.middleRows(r0, n) += out->g;
    };
  }
  return Var(&t, out);
}

// out.row(i) = table.row(idx[i])  (embedding/codebook lookup)
inline Var gather_rows(Var table, std::vector<int> idx) {
  Tape& t = *table.tape;
  bool ng = table.slot->needs_grad;
  Mat v(static_cast<Eigen::Index>(idx.size()), table.cols());
  for (size_t i = 0; i < idx.size(); ++i) v.row(static_cast<Eigen::Index>(i)) = table.v().row(idx[i]);
  Tape::Slot* out = t.emplace(std::move(v), ng);
  if (ng) {
    auto ts = table.slot;
    out->back = [ts, out, idx = std::move(idx)]() {
      Mat& g = Tape::gbuf(ts, ts->v.rows(), ts->v.cols());
      for (size_t i = 0; i < idx.size(); ++i)
        g.row(idx[i]) += out->g.row(static_cast<Eigen::Index>(i));
    };
  }
  return Var(&t, out);
}

// out(i,0) = a(i, idx[i])  (per-row column pick, e.g. log-prob of a label)
inline Var select_col_per_row(Var a, std::vector<int> idx) {
  assert(static_cast<Eigen::Index>(idx.size()) == a.rows());
  Tape& t = *a.tape;
  bool ng = a.slot->needs_grad;
  Mat v(a.rows(), 1);
  for (Eigen::Index i = 0; i < a.rows(); ++i) v(i, 0) = a.v()(i, idx[i]);
  Tape::Slot* out = t.emplace(std::move(v), ng);
  if (ng) {
    auto as = a.slot;
    out->back = [as, out, idx = std::move(idx)]() {
      Mat& g = Tape::gbuf(as, as->v.rows(), as->v.cols());
      for (Eigen::Index i = 0; i < as->v.rows(); ++i) g(i, idx[i]) += out->g(i, 0);
    };
  }
  return Var(&t, out);
}

// Row permutation: out.row(i) = a.row(perm[i]).
inline Var permute_rows(Var a, std::vector<int> perm) {
  assert(static_cast<Eigen::Index>(perm.size()) == a.rows());
  Tape& t = *a.tape;
  bool ng = a.slot->needs_grad;
  Mat v(a.rows(), a.cols());
  for (Eigen::Index i = 0; i < a.rows(); ++i) v.row(i) = a.v().row(perm[i]);
  Tape::Slot* out = t.emplace(std::move(v), ng);
  if (ng) {
    auto as = a.slot;
    out->back = [as, out, perm = std::move(perm)]() {
      Mat& g = Tape::gbuf(as, as->v.rows(), as->v.cols());
      for (Eigen::Index i = 0; i < as->v.rows(); ++i) g.row(perm[i]) += out->g.row(i);
    };
  }
  return Var(&t, out);
}

inline Var transpose(Var a) {
  Tape& t = *a.tape;
  bool ng = a.slot->needs_grad;
  Tape::Slot* out = t.emplace(a.v().transpose(), ng);
  if (ng) {
    auto as = a.slot;
    out->back = [as, out]() { Tape::acc_expr(as, out->g.transpose()); };
  }
  return Var(&t, out);
}

// Forward value is detached; gradients do not flow.
inline Var stopgrad(Var a) { return constant(*a.tape, a.v()); }

// Straight-through estimator: forward takes `hard_value`, backward routes
// the full adjoint into `soft`.
inline Var straight_through(Var soft, Mat hard_value) {
  assert(hard_value.rows() == soft.rows() && hard_value.cols() == soft.cols());
  Tape& t = *soft.tape;
  bool ng = soft.slot->needs_grad;
  Tape::Slot* out = t.emplace(std::move(hard_value), ng);
  if (ng) {
    auto ss = soft.slot;
    out->back = [ss, out]() { Tape::acc(ss, out->g); };
  }
  return Var(&t, out);
}

// Stack a causal window over time-major sequence data. Input rows are
// `t*B + b`; the output has k*C columns where column block j holds the input
// at offset t-(k-1-j) (zeros before the sequence start). Strictly causal:
// row t only ever reads rows <= t.
inline Var causal_stack(Var x, int B, int T, int k) {
  assert(x.rows() == static_cast<Eigen::Index>(B) * T);
  Tape& t = *x.tape;
  bool ng = x.slot->needs_grad;
  const Eigen::Index C = x.cols();
  Mat v = Mat::Zero(x.rows(), k * C);
  for (int j = 0; j < k; ++j) {
    int shift = k - 1 - j;  // how far back in time block j looks
    for (int step = shift; step < T; ++step) {
      v.block(static_cast<Eigen::Index>(step) * B, j * C, B, C) =
          x.v().middleRows(static_cast<Eigen::Index>(step - shift) * B, B);
    }
  }
  Tape::Slot* out = t.emplace(std::move(v), ng);
  if (ng) {
    auto xs = x.slot;
    out->back = [xs, out, B, T, k, C]() {
      Mat& g = Tape::gbuf(xs, xs->v.rows(), xs->v.cols());
      for (int j = 0; j < k; ++j) {
        int shift = k - 1 - j;
        for (int step = shift; step < T; ++step) {
          g.middleRows(static_cast<Eigen::Index>(step - shift) * B, B) +=
              out->g.block(static_cast<Eigen::Index>(step) * B, j * C, B, C);
        }
      }
    };
  }
  return Var(&t, out);
}

// Reverse the time axis of time-major data (per batch element).
inline Var reverse_time(Var x, int B, int T) {
  std::vector<int> perm(static_cast<size_t>(B) * T);
  for (int step = 0; step < T; ++step)
    for (int b = 0; b < B; ++b)
      perm[static_cast<size_t>(step) * B + b] = (T - 1 - step) * B + b;
  return permute_rows(x, std::move(perm));
}

inline Var affine(Var x, Var w, Var b) { return add_rowvec(mm(x, w), b); }

}  // namespace mdlopt::ag
