#pragma once

#include <cassert>
#include <deque>
#include <functional>
#include <utility>

#include <Eigen/Dense>

namespace mdlopt::ag {

using Mat = Eigen::MatrixXf;

// Trainable parameter. Gradients accumulate into `g` during Tape::backward
// and are consumed/zeroed by the optimizer.
struct Param {
  Mat v;
  Mat g;

  Param() = default;
  explicit Param(Mat value) : v(std::move(value)) { g = Mat::Zero(v.rows(), v.cols()); }

  void zero_grad() { g.setZero(); }
};

// Reverse-mode tape. Each op appends a slot holding its forward value and a
// closure that routes the slot's adjoint to its inputs. One Tape per forward
// pass; no global state, so independent tapes are safe on separate threads.
class Tape {
 public:
  struct Slot {
    Mat v;
    Mat g;                        // lazily sized on first accumulation
    std::function<void()> back;   // empty for leaves
    Param* sink = nullptr;        // set for parameter leaves
    bool needs_grad = false;
  };

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Slot* emplace(Mat v, bool needs_grad) {
    slots_.push_back(Slot{});
    Slot& s = slots_.back();
    s.v = std::move(v);
    s.needs_grad = needs_grad;
    return &s;
  }

  size_t size() const { return slots_.size(); }
  void clear() { slots_.clear(); }

  // Accumulate `delta` into the slot's adjoint buffer.
  static void acc(Slot* s, const Mat& delta) {
    if (!s->needs_grad) return;
    if (s->g.size() == 0) s->g = delta;
    else s->g += delta;
  }
  template <typename Expr>
  static void acc_expr(Slot* s, const Expr& delta) {
    if (!s->needs_grad) return;
    if (s->g.size() == 0) s->g = delta;
    else s->g += delta;
  }

  // Ensure the adjoint buffer exists (zeroed) and return it for in-place
  // scatter-style accumulation.
  static Mat& gbuf(Slot* s, Eigen::Index rows, Eigen::Index cols) {
    if (s->g.size() == 0) s->g = Mat::Zero(rows, cols);
    return s->g;
  }

  // Run reverse accumulation from a scalar (1x1) root.
  void backward(Slot* root) {
    assert(root->v.rows() == 1 && root->v.cols() == 1);
    root->g = Mat::Ones(1, 1);
    for (auto it = slots_.rbegin(); it != slots_.rend(); ++it) {
      Slot& s = *it;
      if (!s.needs_grad || s.g.size() == 0) continue;
      if (s.back) s.back();
      if (s.sink) s.sink->g += s.g;
    }
  }

 private:
  std::deque<Slot> slots_;  // deque: stable addresses for closures
};

// Lightweight handle to a tape slot.
struct Var {
  Tape* tape = nullptr;
  Tape::Slot* slot = nullptr;

  Var() = default;
  Var(Tape* t, Tape::Slot* s) : tape(t), slot(s) {}

  const Mat& v() const { return slot->v; }
  Eigen::Index rows() const { return slot->v.rows(); }
  Eigen::Index cols() const { return slot->v.cols(); }
  bool valid() const { return slot != nullptr; }
  float scalar() const {
    assert(rows() == 1 && cols() == 1);
    return slot->v(0, 0);
  }
};

// Constant leaf (no gradient).
inline Var constant(Tape& t, Mat v) { return Var(&t, t.emplace(std::move(v), false)); }

inline Var scalar_const(Tape& t, float x) { return constant(t, Mat::Constant(1, 1, x)); }

// Parameter leaf; adjoints flow into p.g after backward.
inline Var param(Tape& t, Param& p) {
  Tape::Slot* s = t.emplace(p.v, true);
  s->sink = &p;
  return Var(&t, s);
}

// Leaf that wants gradients but is not a parameter (for gradient checks).
inline Var input(Tape& t, Mat v) { return Var(&t, t.emplace(std::move(v), true)); }

}  // namespace mdlopt::ag
