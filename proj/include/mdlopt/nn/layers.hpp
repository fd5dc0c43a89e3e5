#pragma once

#include <deque>
#include <memory>
#include <string>
#include <vector>

#include "mdlopt/errors.hpp"
#include "mdlopt/rng.hpp"
#include "mdlopt/tensor/conv.hpp"
#include "mdlopt/tensor/ops.hpp"

namespace mdlopt::nn {

using ag::Mat;
using ag::Param;
using ag::Tape;
using ag::Var;

// Named parameter table for a model. Layers heap-allocate their Params and
// register raw pointers here, so layer objects can be moved freely after
// construction. The optimizer and checkpoint code walk this table.
struct ParamRegistry {
  std::vector<std::pair<std::string, Param*>> items;

  void add(const std::string& name, Param* p) { items.emplace_back(name, p); }

  Param* find(const std::string& name) const {
    for (const auto& [n, p] : items)
      if (n == name) return p;
    return nullptr;
  }

  size_t total_size() const {
    size_t n = 0;
    for (const auto& [name, p] : items) n += static_cast<size_t>(p->v.size());
    return n;
  }

  void zero_grads() {
    for (auto& [name, p] : items) p->zero_grad();
  }
};

inline Mat uniform_init(Rng& rng, int rows, int cols, float bound) {
  return rng.uniform_matrix(rows, cols, -bound, bound);
}

inline std::shared_ptr<Param> make_param(ParamRegistry& reg, const std::string& name, Mat init) {
  auto p = std::make_shared<Param>(std::move(init));
  reg.add(name, p.get());
  return p;
}

struct Linear {
  std::shared_ptr<Param> w, b;
  int in = 0, out = 0;

  Linear() = default;
  Linear(ParamRegistry& reg, const std::string& name, int in_dim, int out_dim, Rng& rng)
      : in(in_dim), out(out_dim) {
    float bound = 1.0f / std::sqrt(static_cast<float>(in_dim));
    w = make_param(reg, name + ".w", uniform_init(rng, in_dim, out_dim, bound));
    b = make_param(reg, name + ".b", uniform_init(rng, 1, out_dim, bound));
  }

  Var apply(Tape& t, Var x) const { return ag::affine(x, ag::param(t, *w), ag::param(t, *b)); }

  // Inference path without a tape.
  Mat infer(const Mat& x) const { return (x * w->v).rowwise() + b->v.row(0); }
};

struct Embedding {
  std::shared_ptr<Param> table;
  int count = 0, dim = 0;

  Embedding() = default;
  Embedding(ParamRegistry& reg, const std::string& name, int n, int d, Rng& rng)
      : count(n), dim(d) {
    table = make_param(reg, name + ".table", rng.normal_matrix(n, d));
  }

  Var apply(Tape& t, const std::vector<int>& idx) const {
    return ag::gather_rows(ag::param(t, *table), idx);
  }
};

enum class Act { kNone, kRelu, kElu, kTanh };

inline Var activate(Var x, Act a) {
  switch (a) {
    case Act::kRelu: return ag::relu(x);
    case Act::kElu: return ag::elu(x);
    case Act::kTanh: return ag::tanh_op(x);
    default: return x;
  }
}

inline Mat activate_infer(Mat x, Act a) {
  switch (a) {
    case Act::kRelu: return x.cwiseMax(0.0f);
    case Act::kElu: return x.unaryExpr([](float v) { return v > 0.0f ? v : std::expm1(v); });
    case Act::kTanh: return x.array().tanh();
    default: return x;
  }
}

// Fully connected stack; activation applied after every layer except the last.
struct Mlp {
  std::vector<Linear> layers;
  Act act = Act::kRelu;

  Mlp() = default;
  Mlp(ParamRegistry& reg, const std::string& name, const std::vector<int>& dims, Act activation,
      Rng& rng)
      : act(activation) {
    for (size_t i = 0; i + 1 < dims.size(); ++i)
      layers.emplace_back(reg, name + ".fc" + std::to_string(i), dims[i], dims[i + 1], rng);
  }

  Var apply(Tape& t, Var x) const {
    for (size_t i = 0; i < layers.size(); ++i) {
      x = layers[i].apply(t, x);
      if (i + 1 < layers.size()) x = activate(x, act);
    }
    return x;
  }

  Mat infer(const Mat& x0) const {
    Mat x = x0;
    for (size_t i = 0; i < layers.size(); ++i) {
      x = layers[i].infer(x);
      if (i + 1 < layers.size()) x = activate_infer(std::move(x), act);
    }
    return x;
  }
};

// GRU with gate layout [r | u | n].
struct Gru {
  std::shared_ptr<Param> wi, wh, bi, bh;
  int in = 0, hidden = 0;

  Gru() = default;
  Gru(ParamRegistry& reg, const std::string& name, int in_dim, int hidden_dim, Rng& rng)
      : in(in_dim), hidden(hidden_dim) {
    float bound = 1.0f / std::sqrt(static_cast<float>(hidden_dim));
    wi = make_param(reg, name + ".wi", uniform_init(rng, in_dim, 3 * hidden_dim, bound));
    wh = make_param(reg, name + ".wh", uniform_init(rng, hidden_dim, 3 * hidden_dim, bound));
    bi = make_param(reg, name + ".bi", uniform_init(rng, 1, 3 * hidden_dim, bound));
    bh = make_param(reg, name + ".bh", uniform_init(rng, 1, 3 * hidden_dim, bound));
  }

  // One step given precomputed input-side gates gi = x*wi + bi.
  Var step_pre(Tape& t, Var gi, Var h) const {
    const int H = hidden;
    Var gh = ag::affine(h, ag::param(t, *wh), ag::param(t, *bh));
    Var r = ag::sigmoid(ag::add(ag::slice_cols(gi, 0, H), ag::slice_cols(gh, 0, H)));
    Var u = ag::sigmoid(ag::add(ag::slice_cols(gi, H, H), ag::slice_cols(gh, H, H)));
    Var n = ag::tanh_op(
        ag::add(ag::slice_cols(gi, 2 * H, H), ag::mul(r, ag::slice_cols(gh, 2 * H, H))));
    // h' = n + u*(h - n)
    return ag::add(n, ag::mul(u, ag::sub(h, n)));
  }

  Var step(Tape& t, Var x, Var h) const {
    Var gi = ag::affine(x, ag::param(t, *wi), ag::param(t, *bi));
    return step_pre(t, gi, h);
  }

  // Run over a full time-major block (T*B x in); initial state zero. With
  // `reverse`, processes time back-to-front and returns outputs aligned with
  // the input order. A zero input row keeps a zero state at exactly zero, so
  // zeroed padding is inert in both directions.
  Var seq(Tape& t, Var x, int B, int T, bool reverse = false) const {
    Var xin = reverse ? ag::reverse_time(x, B, T) : x;
    Var gi_all = ag::affine(xin, ag::param(t, *wi), ag::param(t, *bi));
    Var h = ag::constant(t, Mat::Zero(B, hidden));
    std::vector<Var> outs;
    outs.reserve(T);
    for (int step = 0; step < T; ++step) {
      Var gi = ag::slice_rows(gi_all, static_cast<Eigen::Index>(step) * B, B);
      h = step_pre(t, gi, h);
      outs.push_back(h);
    }
    Var y = ag::concat_rows(outs);
    return reverse ? ag::reverse_time(y, B, T) : y;
  }

  Mat infer_step(const Mat& x, const Mat& h) const {
    const int H = hidden;
    Mat gi = (x * wi->v).rowwise() + bi->v.row(0);
    Mat gh = (h * wh->v).rowwise() + bh->v.row(0);
    Mat r = 1.0f / (1.0f + (-(gi.middleCols(0, H) + gh.middleCols(0, H))).array().exp());
    Mat u = 1.0f / (1.0f + (-(gi.middleCols(H, H) + gh.middleCols(H, H))).array().exp());
    Mat n = (gi.middleCols(2 * H, H) + r.cwiseProduct(gh.middleCols(2 * H, H))).array().tanh();
    return n + u.cwiseProduct(h - n);
  }
};

// One causal temporal convolution layer (kernel k, left zero padding).
struct CausalConv1d {
  std::shared_ptr<Param> w, b;
  int in = 0, out = 0, k = 0;

  CausalConv1d() = default;
  CausalConv1d(ParamRegistry& reg, const std::string& name, int in_dim, int out_dim, int kernel,
               Rng& rng)
      : in(in_dim), out(out_dim), k(kernel) {
    float bound = 1.0f / std::sqrt(static_cast<float>(in_dim * kernel));
    w = make_param(reg, name + ".w", uniform_init(rng, in_dim * kernel, out_dim, bound));
    b = make_param(reg, name + ".b", uniform_init(rng, 1, out_dim, bound));
  }

  Var apply(Tape& t, Var x, int B, int T) const {
    Var stacked = ag::causal_stack(x, B, T, k);
    return ag::affine(stacked, ag::param(t, *w), ag::param(t, *b));
  }
};

// Causal temporal convolution stack emitting per-step logits. ELU between
// layers, no normalization: the stack must stay strictly causal, so no
// statistic may be shared across time steps.
struct CausalTcn {
  std::vector<CausalConv1d> hidden;
  CausalConv1d head;

  CausalTcn() = default;
  CausalTcn(ParamRegistry& reg, const std::string& name, int in_dim, int width, int n_hidden,
            int kernel, int out_dim, Rng& rng) {
    int d = in_dim;
    for (int i = 0; i < n_hidden; ++i) {
      hidden.emplace_back(reg, name + ".conv" + std::to_string(i), d, width, kernel, rng);
      d = width;
    }
    head = CausalConv1d(reg, name + ".head", d, out_dim, kernel, rng);
  }

  Var apply(Tape& t, Var x, int B, int T) const {
    Var h = x;
    for (const auto& layer : hidden) h = ag::elu(layer.apply(t, h, B, T));
    return head.apply(t, h, B, T);
  }

  int receptive_field() const {
    int rf = head.k;
    for (const auto& layer : hidden) rf += layer.k - 1;
    return rf;
  }
};

// Streaming evaluator for CausalTcn: feed one step at a time; matches the
// batched apply() exactly on the same prefix.
class TcnStream {
 public:
  explicit TcnStream(const CausalTcn* net) : net_(net) { reset(); }

  void reset() { hist_.assign(net_->hidden.size() + 1, {}); }

  Eigen::RowVectorXf push(Eigen::RowVectorXf x) {
    for (size_t li = 0; li <= net_->hidden.size(); ++li) {
      const CausalConv1d& layer = li < net_->hidden.size() ? net_->hidden[li] : net_->head;
      auto& buf = hist_[li];
      buf.push_back(x);
      if (static_cast<int>(buf.size()) > layer.k) buf.pop_front();
      Eigen::RowVectorXf stacked = Eigen::RowVectorXf::Zero(layer.in * layer.k);
      int n_have = static_cast<int>(buf.size());
      for (int j = 0; j < n_have; ++j)
        stacked.segment((layer.k - n_have + j) * layer.in, layer.in) = buf[j];
      x = stacked * layer.w->v + layer.b->v.row(0);
      if (li < net_->hidden.size())
        x = x.unaryExpr([](float v) { return v > 0.0f ? v : std::expm1(v); });
    }
    return x;
  }

 private:
  const CausalTcn* net_;
  std::vector<std::deque<Eigen::RowVectorXf>> hist_;
};

struct Conv2dLayer {
  std::shared_ptr<Param> w, b;
  ag::ConvGeom geom;

  Conv2dLayer() = default;
  Conv2dLayer(ParamRegistry& reg, const std::string& name, ag::ConvGeom g, Rng& rng) : geom(g) {
    float bound = 1.0f / std::sqrt(static_cast<float>(g.cin * g.k * g.k));
    w = make_param(reg, name + ".w", uniform_init(rng, g.cin * g.k * g.k, g.cout, bound));
    b = make_param(reg, name + ".b", uniform_init(rng, 1, g.cout, bound));
  }

  Var apply(Tape& t, Var x) const {
    return ag::conv2d(x, ag::param(t, *w), ag::param(t, *b), geom);
  }

  Mat infer(const Mat& x) const {
    Mat cols = ag::detail::im2col(x, geom);
    Mat y = (cols * w->v).rowwise() + b->v.row(0);
    const int hw = geom.hout() * geom.wout();
    Mat img(x.rows(), static_cast<Eigen::Index>(geom.cout) * hw);
    for (Eigen::Index i = 0; i < x.rows(); ++i)
      for (int c = 0; c < geom.cout; ++c)
        for (int p = 0; p < hw; ++p) img(i, c * hw + p) = y(i * hw + p, c);
    return img;
  }
};

struct ConvT2dLayer {
  std::shared_ptr<Param> w, b;
  ag::ConvGeom geom;

  ConvT2dLayer() = default;
  ConvT2dLayer(ParamRegistry& reg, const std::string& name, ag::ConvGeom g, Rng& rng) : geom(g) {
    float bound = 1.0f / std::sqrt(static_cast<float>(g.cin * g.k * g.k));
    w = make_param(reg, name + ".w", uniform_init(rng, g.cin, g.cout * g.k * g.k, bound));
    b = make_param(reg, name + ".b", uniform_init(rng, 1, g.cout, bound));
  }

  Var apply(Tape& t, Var x) const {
    return ag::conv2d_transpose(x, ag::param(t, *w), ag::param(t, *b), geom);
  }
};

}  // namespace mdlopt::nn
