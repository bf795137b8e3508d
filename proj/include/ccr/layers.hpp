#pragma once

#include <string>
#include <vector>

#include "ccr/tensor.hpp"

namespace ccr {

// Parameter and input gradients of one layer, shapes matching the forward
// arguments exactly.
struct Conv2dGrads {
  Tensor kernels;
  Tensor bias;
  Tensor input;
};

struct LinearGrads {
  Tensor weight;
  Tensor bias;
  Tensor input;
};

inline int conv_out_side(int in, int k, int stride, int pad, const char* axis) {
  int span = in + 2 * pad - k;
  if (span < 0 || span % stride != 0) {
    throw ShapeError(std::string("conv2d: input ") + axis + "=" + std::to_string(in) +
                     " with k=" + std::to_string(k) + " stride=" + std::to_string(stride) +
                     " pad=" + std::to_string(pad) + " gives a non-integral output size");
  }
  return span / stride + 1;
}

inline void check_conv_args(const Tensor& input, const Tensor& kernels, int stride, int pad) {
  require_ndim(input, 3, "conv2d input");
  require_ndim(kernels, 4, "conv2d kernels");
  if (kernels.dim(2) != kernels.dim(3) || kernels.dim(2) % 2 == 0) {
    throw ShapeError("conv2d: kernel spatial dims must be square and odd, got " +
                     shape_to_string(kernels.shape()));
  }
  if (kernels.dim(1) != input.dim(0)) {
    throw ShapeError("conv2d: kernel in-channels " + std::to_string(kernels.dim(1)) +
                     " != input channels " + std::to_string(input.dim(0)));
  }
  if (stride < 1) throw ShapeError("conv2d: stride must be >= 1");
  if (pad < 0) throw ShapeError("conv2d: pad must be >= 0");
}

// Cross-correlation (no kernel flip), the usual deep-learning convention.
inline Tensor conv2d_forward(const Tensor& input, const Tensor& kernels, const Tensor& bias,
                             int stride, int pad) {
  check_conv_args(input, kernels, stride, pad);
  const int cout = kernels.dim(0), cin = kernels.dim(1), k = kernels.dim(2);
  require_shape(bias, {cout}, "conv2d bias");
  const int h = input.dim(1), w = input.dim(2);
  const int oh = conv_out_side(h, k, stride, pad, "H");
  const int ow = conv_out_side(w, k, stride, pad, "W");

  Tensor out({cout, oh, ow});
  for (int co = 0; co < cout; ++co) {
    double* outc = out.data() + static_cast<std::size_t>(co) * oh * ow;
    const double b = bias[static_cast<std::size_t>(co)];
    for (int i = 0; i < oh * ow; ++i) outc[i] = b;
    for (int ci = 0; ci < cin; ++ci) {
      const double* inc = input.data() + static_cast<std::size_t>(ci) * h * w;
      for (int ky = 0; ky < k; ++ky) {
        for (int kx = 0; kx < k; ++kx) {
          const double kv = kernels.at(co, ci, ky, kx);
          if (kv == 0.0) continue;
          for (int oy = 0; oy < oh; ++oy) {
            const int iy = oy * stride - pad + ky;
            if (iy < 0 || iy >= h) continue;
            const double* inrow = inc + static_cast<std::size_t>(iy) * w;
            double* outrow = outc + static_cast<std::size_t>(oy) * ow;
            int ox0 = 0;
            while (ox0 < ow && ox0 * stride - pad + kx < 0) ++ox0;
            int ox1 = ow;
            while (ox1 > ox0 && (ox1 - 1) * stride - pad + kx >= w) --ox1;
            const double* src = inrow + (static_cast<std::size_t>(ox0) * stride - pad + kx);
            if (stride == 1) {
              for (int ox = ox0; ox < ox1; ++ox) outrow[ox] += kv * src[ox - ox0];
            } else {
              for (int ox = ox0; ox < ox1; ++ox) outrow[ox] += kv * src[(ox - ox0) * stride];
            }
          }
        }
      }
    }
  }
  return out;
}

inline Conv2dGrads conv2d_backward(const Tensor& input, const Tensor& kernels,
                                   const Tensor& upstream, int stride, int pad,
                                   bool need_input_grad = true) {
  check_conv_args(input, kernels, stride, pad);
  const int cout = kernels.dim(0), cin = kernels.dim(1), k = kernels.dim(2);
  const int h = input.dim(1), w = input.dim(2);
  const int oh = conv_out_side(h, k, stride, pad, "H");
  const int ow = conv_out_side(w, k, stride, pad, "W");
  require_shape(upstream, {cout, oh, ow}, "conv2d upstream");

  Conv2dGrads g{Tensor(kernels.shape()), Tensor({cout}), Tensor(input.shape())};
  for (int co = 0; co < cout; ++co) {
    const double* upc = upstream.data() + static_cast<std::size_t>(co) * oh * ow;
    double bsum = 0.0;
    for (int i = 0; i < oh * ow; ++i) bsum += upc[i];
    g.bias[static_cast<std::size_t>(co)] = bsum;

    for (int ci = 0; ci < cin; ++ci) {
      const double* inc = input.data() + static_cast<std::size_t>(ci) * h * w;
      double* ginc = g.input.data() + static_cast<std::size_t>(ci) * h * w;
      for (int ky = 0; ky < k; ++ky) {
        for (int kx = 0; kx < k; ++kx) {
          const double kv = kernels.at(co, ci, ky, kx);
          double ksum = 0.0;
          for (int oy = 0; oy < oh; ++oy) {
            const int iy = oy * stride - pad + ky;
            if (iy < 0 || iy >= h) continue;
            const double* inrow = inc + static_cast<std::size_t>(iy) * w;
            double* ginrow = ginc + static_cast<std::size_t>(iy) * w;
            const double* uprow = upc + static_cast<std::size_t>(oy) * ow;
            int ox0 = 0;
            while (ox0 < ow && ox0 * stride - pad + kx < 0) ++ox0;
            int ox1 = ow;
            while (ox1 > ox0 && (ox1 - 1) * stride - pad + kx >= w) --ox1;
            if (need_input_grad) {
              for (int ox = ox0; ox < ox1; ++ox) {
                const int ix = ox * stride - pad + kx;
                ksum += uprow[ox] * inrow[ix];
                ginrow[ix] += kv * uprow[ox];
              }
            } else {
              for (int ox = ox0; ox < ox1; ++ox) {
                ksum += uprow[ox] * inrow[ox * stride - pad + kx];
              }
            }
          }
          g.kernels.at(co, ci, ky, kx) += ksum;
        }
      }
    }
  }
  return g;
}

inline Tensor relu_forward(const Tensor& input) {
  Tensor out(input.shape());
  for (std::size_t i = 0; i < input.size(); ++i) out[i] = input[i] > 0.0 ? input[i] : 0.0;
  return out;
}

// Subgradient 0 at exactly 0.
inline Tensor relu_backward(const Tensor& input, const Tensor& upstream) {
  if (!input.same_shape(upstream)) {
    throw ShapeError("relu_backward: upstream shape " + shape_to_string(upstream.shape()) +
                     " != input shape " + shape_to_string(input.shape()));
  }
  Tensor g(input.shape());
  for (std::size_t i = 0; i < input.size(); ++i) g[i] = input[i] > 0.0 ? upstream[i] : 0.0;
  return g;
}

// 2x2 window, stride 2. Odd trailing rows/columns would be dropped; the nets
// here only ever see even sides.
inline Tensor maxpool2_forward(const Tensor& input) {
  require_ndim(input, 3, "maxpool2 input");
  const int c = input.dim(0), h = input.dim(1), w = input.dim(2);
  Tensor out({c, h / 2, w / 2});
  for (int ch = 0; ch < c; ++ch)
    for (int oy = 0; oy < h / 2; ++oy)
      for (int ox = 0; ox < w / 2; ++ox) {
        double m = input.at(ch, 2 * oy, 2 * ox);
        m = std::max(m, input.at(ch, 2 * oy, 2 * ox + 1));
        m = std::max(m, input.at(ch, 2 * oy + 1, 2 * ox));
        m = std::max(m, input.at(ch, 2 * oy + 1, 2 * ox + 1));
        out.at(ch, oy, ox) = m;
      }
  return out;
}

// Routes each upstream value to the first-in-scan-order argmax of its window.
inline Tensor maxpool2_backward(const Tensor& input, const Tensor& upstream) {
  require_ndim(input, 3, "maxpool2 input");
  const int c = input.dim(0), h = input.dim(1), w = input.dim(2);
  require_shape(upstream, {c, h / 2, w / 2}, "maxpool2 upstream");
  Tensor g(input.shape());
  for (int ch = 0; ch < c; ++ch)
    for (int oy = 0; oy < h / 2; ++oy)
      for (int ox = 0; ox < w / 2; ++ox) {
        int by = 2 * oy, bx = 2 * ox;
        double m = input.at(ch, by, bx);
        if (input.at(ch, by, bx + 1) > m) { m = input.at(ch, by, bx + 1); by = 2 * oy; bx = 2 * ox + 1; }
        if (input.at(ch, 2 * oy + 1, 2 * ox) > m) { m = input.at(ch, 2 * oy + 1, 2 * ox); by = 2 * oy + 1; bx = 2 * ox; }
        if (input.at(ch, 2 * oy + 1, 2 * ox + 1) > m) { by = 2 * oy + 1; bx = 2 * ox + 1; }
        g.at(ch, by, bx) += upstream.at(ch, oy, ox);
      }
  return g;
}

// Spatial mean per channel.
inline Tensor gap_forward(const Tensor& input) {
  require_ndim(input, 3, "gap input");
  const int c = input.dim(0), h = input.dim(1), w = input.dim(2);
  Tensor out({c});
  const double inv = 1.0 / (static_cast<double>(h) * w);
  for (int ch = 0; ch < c; ++ch) {
    const double* p = input.data() + static_cast<std::size_t>(ch) * h * w;
    double s = 0.0;
    for (int i = 0; i < h * w; ++i) s += p[i];
    out[static_cast<std::size_t>(ch)] = s * inv;
  }
  return out;
}

inline Tensor gap_backward(const Tensor& input, const Tensor& upstream) {
  require_ndim(input, 3, "gap input");
  require_shape(upstream, {input.dim(0)}, "gap upstream");
  const int c = input.dim(0), h = input.dim(1), w = input.dim(2);
  Tensor g(input.shape());
  const double inv = 1.0 / (static_cast<double>(h) * w);
  for (int ch = 0; ch < c; ++ch) {
    const double v = upstream[static_cast<std::size_t>(ch)] * inv;
    double* p = g.data() + static_cast<std::size_t>(ch) * h * w;
    for (int i = 0; i < h * w; ++i) p[i] = v;
  }
  return g;
}

// y = W x + b with W of shape [K x D].
inline Tensor linear_forward(const Tensor& x, const Tensor& weight, const Tensor& bias) {
  require_ndim(x, 1, "linear input");
  require_ndim(weight, 2, "linear weight");
  const int kk = weight.dim(0), d = weight.dim(1);
  if (x.dim(0) != d) {
    throw ShapeError("linear: input dim " + std::to_string(x.dim(0)) + " != weight cols " +
                     std::to_string(d));
  }
  require_shape(bias, {kk}, "linear bias");
  Tensor out({kk});
  for (int i = 0; i < kk; ++i) {
    const double* wr = weight.data() + static_cast<std::size_t>(i) * d;
    double s = bias[static_cast<std::size_t>(i)];
    for (int j = 0; j < d; ++j) s += wr[j] * x[static_cast<std::size_t>(j)];
    out[static_cast<std::size_t>(i)] = s;
  }
  return out;
}

inline LinearGrads linear_backward(const Tensor& x, const Tensor& weight, const Tensor& upstream) {
  require_ndim(x, 1, "linear input");
  require_ndim(weight, 2, "linear weight");
  const int kk = weight.dim(0), d = weight.dim(1);
  require_shape(upstream, {kk}, "linear upstream");
  if (x.dim(0) != d) {
    throw ShapeError("linear_backward: input dim " + std::to_string(x.dim(0)) +
                     " != weight cols " + std::to_string(d));
  }
  LinearGrads g{Tensor(weight.shape()), Tensor({kk}), Tensor(x.shape())};
  for (int i = 0; i < kk; ++i) {
    const double u = upstream[static_cast<std::size_t>(i)];
    g.bias[static_cast<std::size_t>(i)] = u;
    const double* wr = weight.data() + static_cast<std::size_t>(i) * d;
    double* gw = g.weight.data() + static_cast<std::size_t>(i) * d;
    for (int j = 0; j < d; ++j) {
      gw[j] = u * x[static_cast<std::size_t>(j)];
      g.input[static_cast<std::size_t>(j)] += u * wr[j];
    }
  }
  return g;
}

}  // namespace ccr
