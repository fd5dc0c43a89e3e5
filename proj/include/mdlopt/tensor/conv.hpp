#pragma once

#include "mdlopt/tensor/ops.hpp"

// 2-D convolution primitives. Images are stored one per row, channel-major:
// column index = c*H*W + y*W + x.
namespace mdlopt::ag {

struct ConvGeom {
  int cin, h, w;
  int cout, k, stride, pad;

  int hout() const { return (h + 2 * pad - k) / stride + 1; }
  int wout() const { return (w + 2 * pad - k) / stride + 1; }
  // transposed-conv output size
  int hout_t() const { return (h - 1) * stride - 2 * pad + k; }
  int wout_t() const { return (w - 1) * stride - 2 * pad + k; }
};

namespace detail {

// (N x Cin*H*W) -> (N*Hout*Wout x Cin*k*k); zero padding outside the image.
inline Mat im2col(const Mat& x, const ConvGeom& g) {
  const int ho = g.hout(), wo = g.wout();
  const Eigen::Index n = x.rows();
  Mat cols = Mat::Zero(n * ho * wo, static_cast<Eigen::Index>(g.cin) * g.k * g.k);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (int oy = 0; oy < ho; ++oy) {
      for (int ox = 0; ox < wo; ++ox) {
        Eigen::Index row = (i * ho + oy) * wo + ox;
        for (int c = 0; c < g.cin; ++c) {
          for (int dy = 0; dy < g.k; ++dy) {
            int y = oy * g.stride - g.pad + dy;
            if (y < 0 || y >= g.h) continue;
            for (int dx = 0; dx < g.k; ++dx) {
              int xx = ox * g.stride - g.pad + dx;
              if (xx < 0 || xx >= g.w) continue;
              cols(row, (c * g.k + dy) * g.k + dx) = x(i, (c * g.h + y) * g.w + xx);
            }
          }
        }
      }
    }
  }
  return cols;
}

// Adjoint of im2col: scatter-add patches back into image layout.
inline void col2im_acc(Mat& x_grad, const Mat& cols, const ConvGeom& g) {
  const int ho = g.hout(), wo = g.wout();
  const Eigen::Index n = x_grad.rows();
  for (Eigen::Index i = 0; i < n; ++i) {
    for (int oy = 0; oy < ho; ++oy) {
      for (int ox = 0; ox < wo; ++ox) {
        Eigen::Index row = (i * ho + oy) * wo + ox;
        for (int c = 0; c < g.cin; ++c) {
          for (int dy = 0; dy < g.k; ++dy) {
            int y = oy * g.stride - g.pad + dy;
            if (y < 0 || y >= g.h) continue;
            for (int dx = 0; dx < g.k; ++dx) {
              int xx = ox * g.stride - g.pad + dx;
              if (xx < 0 || xx >= g.w) continue;
              x_grad(i, (c * g.h + y) * g.w + xx) += cols(row, (c * g.k + dy) * g.k + dx);
            }
          }
        }
      }
    }
  }
}

}  // namespace detail

inline Var im2col_op(Var x, const ConvGeom& g) {
  Tape& t = *x.tape;
  bool ng = x.slot->needs_grad;
  Tape::Slot* out = t.emplace(detail::im2col(x.v(), g), ng);
  if (ng) {
    auto xs = x.slot;
    out->back = [xs, out, g]() {
      Mat& grad = Tape::gbuf(xs, xs->v.rows(), xs->v.cols());
      detail::col2im_acc(grad, out->g, g);
    };
  }
  return Var(&t, out);
}

// (N*HW x C) -> (N x C*HW): collapse the spatial rows of one image into
// channel-major feature columns.
inline Var spatial_to_image(Var a, Eigen::Index n_images, int hw, int channels) {
  assert(a.rows() == n_images * hw && a.cols() == channels);
  Tape& t = *a.tape;
  bool ng = a.slot->needs_grad;
  Mat v(n_images, static_cast<Eigen::Index>(channels) * hw);
  for (Eigen::Index i = 0; i < n_images; ++i)
    for (int c = 0; c < channels; ++c)
      for (int p = 0; p < hw; ++p) v(i, c * hw + p) = a.v()(i * hw + p, c);
  Tape::Slot* out = t.emplace(std::move(v), ng);
  if (ng) {
    auto as = a.slot;
    out->back = [as, out, n_images, hw, channels]() {
      Mat& g = Tape::gbuf(as, as->v.rows(), as->v.cols());
      for (Eigen::Index i = 0; i < n_images; ++i)
        for (int c = 0; c < channels; ++c)
          for (int p = 0; p < hw; ++p) g(i * hw + p, c) += out->g(i, c * hw + p);
    };
  }
  return Var(&t, out);
}

// (N x C*HW) -> (N*HW x C): inverse of spatial_to_image.
inline Var image_to_spatial(Var a, int hw, int channels) {
  assert(a.cols() == static_cast<Eigen::Index>(hw) * channels);
  Tape& t = *a.tape;
  bool ng = a.slot->needs_grad;
  const Eigen::Index n = a.rows();
  Mat v(n * hw, channels);
  for (Eigen::Index i = 0; i < n; ++i)
    for (int c = 0; c < channels; ++c)
      for (int p = 0; p < hw; ++p) v(i * hw + p, c) = a.v()(i, c * hw + p);
  Tape::Slot* out = t.emplace(std::move(v), ng);
  if (ng) {
    auto as = a.slot;
    out->back = [as, out, hw, channels]() {
      Mat& g = Tape::gbuf(as, as->v.rows(), as->v.cols());
      for (Eigen::Index i = 0; i < as->v.rows(); ++i)
        for (int c = 0; c < channels; ++c)
          for (int p = 0; p < hw; ++p) g(i, c * hw + p) += out->g(i * hw + p, c);
    };
  }
  return Var(&t, out);
}

// conv2d: x (N x Cin*H*W), w (Cin*k*k x Cout), b (1 x Cout)
// -> (N x Cout*Hout*Wout)
inline Var conv2d(Var x, Var w, Var b, const ConvGeom& g) {
  Var cols = im2col_op(x, g);
  Var y = add_rowvec(mm(cols, w), b);
  return spatial_to_image(y, x.rows(), g.hout() * g.wout(), g.cout);
}

// Scatter-add of k*k patches: forward of transposed convolution.
// a: (N*H*W x Cout*k*k) patches laid out over the *input* spatial grid of the
// transposed conv; output (N x Cout*Hout_t*Wout_t).
inline Var col2im_scatter(Var a, Eigen::Index n_images, const ConvGeom& g) {
  const int ho = g.hout_t(), wo = g.wout_t();
  assert(a.rows() == n_images * g.h * g.w);
  assert(a.cols() == static_cast<Eigen::Index>(g.cout) * g.k * g.k);
  Tape& t = *a.tape;
  bool ng = a.slot->needs_grad;
  Mat v = Mat::Zero(n_images, static_cast<Eigen::Index>(g.cout) * ho * wo);
  auto scatter = [&](auto&& sink, const Mat& src) {
    for (Eigen::Index i = 0; i < n_images; ++i)
      for (int y = 0; y < g.h; ++y)
        for (int x = 0; x < g.w; ++x) {
          Eigen::Index row = (i * g.h + y) * g.w + x;
          for (int c = 0; c < g.cout; ++c)
            for (int dy = 0; dy < g.k; ++dy) {
              int oy = y * g.stride - g.pad + dy;
              if (oy < 0 || oy >= ho) continue;
              for (int dx = 0; dx < g.k; ++dx) {
                int ox = x * g.stride - g.pad + dx;
                if (ox < 0 || ox >= wo) continue;
                sink(i, (c * ho + oy) * wo + ox, src(row, (c * g.k + dy) * g.k + dx));
              }
            }
        }
  };
  scatter([&](Eigen::Index i, Eigen::Index col, float val) { v(i, col) += val; }, a.v());
  Tape::Slot* out = t.emplace(std::move(v), ng);
  if (ng) {
    auto as = a.slot;
    out->back = [as, out, n_images, g, ho, wo]() {
      Mat& grad = Tape::gbuf(as, as->v.rows(), as->v.cols());
      for (Eigen::Index i = 0; i < n_images; ++i)
        for (int y = 0; y < g.h; ++y)
          for (int x = 0; x < g.w; ++x) {
            Eigen::Index row = (i * g.h + y) * g.w + x;
            for (int c = 0; c < g.cout; ++c)
              for (int dy = 0; dy < g.k; ++dy) {
                int oy = y * g.stride - g.pad + dy;
                if (oy < 0 || oy >= ho) continue;
                for (int dx = 0; dx < g.k; ++dx) {
                  int ox = x * g.stride - g.pad + dx;
                  if (ox < 0 || ox >= wo) continue;
                  grad(row, (c * g.k + dy) * g.k + dx) += out->g(i, (c * ho + oy) * wo + ox);
                }
              }
          }
    };
  }
  return Var(&t, out);
}

// Add a per-channel bias to image-major features (N x C*HW).
inline Var add_channel_bias(Var a, Var b, int channels, int hw) {
  assert(b.rows() == 1 && b.cols() == channels);
  assert(a.cols() == static_cast<Eigen::Index>(channels) * hw);
  Tape& t = *a.tape;
  bool ng = a.slot->needs_grad || b.slot->needs_grad;
  Mat v = a.v();
  for (int c = 0; c < channels; ++c) v.middleCols(static_cast<Eigen::Index>(c) * hw, hw).array() += b.v()(0, c);
  Tape::Slot* out = t.emplace(std::move(v), ng);
  if (ng) {
    auto as = a.slot, bs = b.slot;
    out->back = [as, bs, out, channels, hw]() {
      Tape::acc(as, out->g);
      if (bs->needs_grad) {
        Mat gb(1, channels);
        for (int c = 0; c < channels; ++c)
          gb(0, c) = out->g.middleCols(static_cast<Eigen::Index>(c) * hw, hw).sum();
        Tape::acc(bs, gb);
      }
    };
  }
  return Var(&t, out);
}

// conv2d_transpose: x (N x Cin*H*W), w (Cin x Cout*k*k), b (1 x Cout)
// -> (N x Cout*Hout_t*Wout_t). Geometry fields cin/h/w describe the *input*.
inline Var conv2d_transpose(Var x, Var w, Var b, const ConvGeom& g) {
  Var spatial = image_to_spatial(x, g.h * g.w, g.cin);  // (N*H*W x Cin)
  Var patches = mm(spatial, w);                          // (N*H*W x Cout*k*k)
  Var img = col2im_scatter(patches, x.rows(), g);
  return add_channel_bias(img, b, g.cout, g.hout_t() * g.wout_t());
}

}  // namespace mdlopt::ag
