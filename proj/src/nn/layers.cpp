// Copyright 2026 The crafted Authors. All Rights Reserved.
// SPDX-License-Identifier: Apache-2.0

#include "crafted/nn/layers.hpp"

#include <Eigen/Core>
#include <cmath>
#include <stdexcept>
#include <vector>

namespace crafted::nn {
namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMatrix = Eigen::Map<RowMatrix>;
using ConstMapMatrix = Eigen::Map<const RowMatrix>;

void require_rank(const Tensor& x, std::size_t rank, const char* what) {
  if (x.rank() != rank) {
    throw std::invalid_argument(std::string(what) + ": expected rank " + std::to_string(rank) +
                                ", got " + shape_to_string(x.shape()));
  }
}

// cols is [C*9, H*W].
void im2col(const double* image, std::size_t channels, std::size_t height, std::size_t width,
            double* cols) {
  const std::size_t hw = height * width;
  for (std::size_t c = 0; c < channels; ++c) {
    for (std::size_t ky = 0; ky < kKernel; ++ky) {
      for (std::size_t kx = 0; kx < kKernel; ++kx) {
        double* row = cols + ((c * kKernel + ky) * kKernel + kx) * hw;
        for (std::size_t y = 0; y < height; ++y) {
          const long sy = static_cast<long>(y + ky) - 1;
          for (std::size_t x = 0; x < width; ++x) {
            const long sx = static_cast<long>(x + kx) - 1;
            const bool inside = sy >= 0 && sx >= 0 && sy < static_cast<long>(height) &&
                                sx < static_cast<long>(width);
            row[y * width + x] = inside ? image[(c * height + sy) * width + sx] : 0.0;
          }
        }
      }
    }
  }
}

void col2im(const double* cols, std::size_t channels, std::size_t height, std::size_t width,
            double* image) {
  const std::size_t hw = height * width;
  std::fill(image, image + channels * hw, 0.0);
  for (std::size_t c = 0; c < channels; ++c) {
    for (std::size_t ky = 0; ky < kKernel; ++ky) {
      for (std::size_t kx = 0; kx < kKernel; ++kx) {
        const double* row = cols + ((c * kKernel + ky) * kKernel + kx) * hw;
        for (std::size_t y = 0; y < height; ++y) {
          const long sy = static_cast<long>(y + ky) - 1;
          if (sy < 0 || sy >= static_cast<long>(height)) continue;
          for (std::size_t x = 0; x < width; ++x) {
            const long sx = static_cast<long>(x + kx) - 1;
            if (sx < 0 || sx >= static_cast<long>(width)) continue;
            image[(c * height + sy) * width + sx] += row[y * width + x];
          }
        }
      }
    }
  }
}

double sigmoid(double v) { return 1.0 / (1.0 + std::exp(-v)); }

}  // namespace

Tensor conv2d(const Tensor& x, std::span<const double> weight, std::span<const double> bias,
              std::size_t out_channels) {
  require_rank(x, 4, "conv2d");
  const std::size_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  const std::size_t patch = c * kKernel * kKernel;
  if (weight.size() != out_channels * patch || bias.size() != out_channels) {
    throw std::invalid_argument("conv2d: weight/bias size mismatch");
  }
  Tensor y({n, out_channels, h, w});
  std::vector<double> cols(patch * h * w);
  ConstMapMatrix wm(weight.data(), out_channels, patch);
  for (std::size_t i = 0; i < n; ++i) {
    im2col(x.item_span(i).data(), c, h, w, cols.data());
    ConstMapMatrix cm(cols.data(), patch, h * w);
    MapMatrix ym(y.item_span(i).data(), out_channels, h * w);
    ym.noalias() = wm * cm;
    for (std::size_t o = 0; o < out_channels; ++o) ym.row(o).array() += bias[o];
  }
  return y;
}

void conv2d_backward(const Tensor& x, std::span<const double> weight, std::size_t out_channels,
                     const Tensor& grad_out, std::span<double> grad_weight,
                     std::span<double> grad_bias, Tensor* grad_x) {
  const std::size_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  const std::size_t patch = c * kKernel * kKernel;
  if (grad_weight.size() != weight.size() || grad_bias.size() != out_channels) {
    throw std::invalid_argument("conv2d_backward: gradient buffer size mismatch");
  }
  std::vector<double> cols(patch * h * w);
  std::vector<double> dcols(patch * h * w);
  ConstMapMatrix wm(weight.data(), out_channels, patch);
  MapMatrix dwm(grad_weight.data(), out_channels, patch);
  if (grad_x) *grad_x = Tensor(x.shape());
  for (std::size_t i = 0; i < n; ++i) {
    ConstMapMatrix gm(grad_out.item_span(i).data(), out_channels, h * w);
    im2col(x.item_span(i).data(), c, h, w, cols.data());
    ConstMapMatrix cm(cols.data(), patch, h * w);
    dwm.noalias() += gm * cm.transpose();
    for (std::size_t o = 0; o < out_channels; ++o) grad_bias[o] += gm.row(o).sum();
    if (grad_x) {
      MapMatrix dcm(dcols.data(), patch, h * w);
      dcm.noalias() = wm.transpose() * gm;
      col2im(dcols.data(), c, h, w, grad_x->item_span(i).data());
    }
  }
}

// Dense layers use plain loops so every row is computed identically
// regardless of batch size.
Tensor linear(const Tensor& x, std::span<const double> weight, std::span<const double> bias,
              std::size_t out_features) {
  require_rank(x, 2, "linear");
  const std::size_t n = x.dim(0), in = x.dim(1);
  if (weight.size() != out_features * in || bias.size() != out_features) {
    throw std::invalid_argument("linear: weight/bias size mismatch");
  }
  Tensor y({n, out_features});
  for (std::size_t r = 0; r < n; ++r) {
    const double* xr = x.data() + r * in;
    for (std::size_t o = 0; o < out_features; ++o) {
      const double* wr = weight.data() + o * in;
      double acc = bias[o];
      for (std::size_t k = 0; k < in; ++k) acc += wr[k] * xr[k];
      y[r * out_features + o] = acc;
    }
  }
  return y;
}

void linear_backward(const Tensor& x, std::span<const double> weight, std::size_t out_features,
                     const Tensor& grad_out, std::span<double> grad_weight,
                     std::span<double> grad_bias, Tensor* grad_x) {
  const std::size_t n = x.dim(0), in = x.dim(1);
  if (grad_x) *grad_x = Tensor(x.shape());
  for (std::size_t r = 0; r < n; ++r) {
    const double* xr = x.data() + r * in;
    for (std::size_t o = 0; o < out_features; ++o) {
      const double g = grad_out[r * out_features + o];
      grad_bias[o] += g;
      double* dw = grad_weight.data() + o * in;
      for (std::size_t k = 0; k < in; ++k) dw[k] += g * xr[k];
      if (grad_x) {
        const double* wr = weight.data() + o * in;
        double* dx = grad_x->data() + r * in;
        for (std::size_t k = 0; k < in; ++k) dx[k] += g * wr[k];
      }
    }
  }
}

Tensor silu(const Tensor& x) {
  Tensor y(x.shape());
  for (std::size_t i = 0; i < x.numel(); ++i) y[i] = x[i] * sigmoid(x[i]);
  return y;
}

Tensor silu_backward(const Tensor& x, const Tensor& grad_out) {
  Tensor g(x.shape());
  for (std::size_t i = 0; i < x.numel(); ++i) {
    const double s = sigmoid(x[i]);
    g[i] = grad_out[i] * s * (1.0 + x[i] * (1.0 - s));
  }
  return g;
}

Tensor avg_pool2(const Tensor& x) {
  require_rank(x, 4, "avg_pool2");
  const std::size_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  if (h % 2 || w % 2) throw std::invalid_argument("avg_pool2: odd spatial size");
  Tensor y({n, c, h / 2, w / 2});
  std::size_t k = 0;
  for (std::size_t p = 0; p < n * c; ++p) {
    const double* src = x.data() + p * h * w;
    for (std::size_t yy = 0; yy < h / 2; ++yy) {
      for (std::size_t xx = 0; xx < w / 2; ++xx) {
        const double* s = src + 2 * yy * w + 2 * xx;
        y[k++] = 0.25 * (s[0] + s[1] + s[w] + s[w + 1]);
      }
    }
  }
  return y;
}

Tensor avg_pool2_backward(const Tensor& grad_out) {
  const std::size_t n = grad_out.dim(0), c = grad_out.dim(1);
  const std::size_t h = grad_out.dim(2) * 2, w = grad_out.dim(3) * 2;
  Tensor g({n, c, h, w});
  for (std::size_t p = 0; p < n * c; ++p) {
    double* dst = g.data() + p * h * w;
    const double* src = grad_out.data() + p * (h / 2) * (w / 2);
    for (std::size_t yy = 0; yy < h; ++yy) {
      for (std::size_t xx = 0; xx < w; ++xx) {
        dst[yy * w + xx] = 0.25 * src[(yy / 2) * (w / 2) + xx / 2];
      }
    }
  }
  return g;
}

Tensor upsample2(const Tensor& x) {
  require_rank(x, 4, "upsample2");
  const std::size_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  Tensor y({n, c, 2 * h, 2 * w});
  for (std::size_t p = 0; p < n * c; ++p) {
    const double* src = x.data() + p * h * w;
    double* dst = y.data() + p * 4 * h * w;
    for (std::size_t yy = 0; yy < 2 * h; ++yy) {
      for (std::size_t xx = 0; xx < 2 * w; ++xx) dst[yy * 2 * w + xx] = src[(yy / 2) * w + xx / 2];
    }
  }
  return y;
}

Tensor upsample2_backward(const Tensor& grad_out) {
  const std::size_t n = grad_out.dim(0), c = grad_out.dim(1);
  const std::size_t h = grad_out.dim(2) / 2, w = grad_out.dim(3) / 2;
  Tensor g({n, c, h, w});
  for (std::size_t p = 0; p < n * c; ++p) {
    const double* src = grad_out.data() + p * 4 * h * w;
    double* dst = g.data() + p * h * w;
    for (std::size_t yy = 0; yy < h; ++yy) {
      for (std::size_t xx = 0; xx < w; ++xx) {
        const double* s = src + 2 * yy * 2 * w + 2 * xx;
        dst[yy * w + xx] = s[0] + s[1] + s[2 * w] + s[2 * w + 1];
      }
    }
  }
  return g;
}

Tensor concat_channels(const Tensor& a, const Tensor& b) {
  require_rank(a, 4, "concat_channels");
  require_rank(b, 4, "concat_channels");
  if (a.dim(0) != b.dim(0) || a.dim(2) != b.dim(2) || a.dim(3) != b.dim(3)) {
    throw std::invalid_argument("concat_channels: incompatible shapes");
  }
  const std::size_t n = a.dim(0);
  Tensor y({n, a.dim(1) + b.dim(1), a.dim(2), a.dim(3)});
  for (std::size_t i = 0; i < n; ++i) {
    auto dst = y.item_span(i);
    auto sa = a.item_span(i);
    auto sb = b.item_span(i);
    std::copy(sa.begin(), sa.end(), dst.begin());
    std::copy(sb.begin(), sb.end(), dst.begin() + static_cast<long>(sa.size()));
  }
  return y;
}

void split_channels(const Tensor& grad, std::size_t channels_a, Tensor& grad_a, Tensor& grad_b) {
  const std::size_t n = grad.dim(0), c = grad.dim(1), h = grad.dim(2), w = grad.dim(3);
  grad_a = Tensor({n, channels_a, h, w});
  grad_b = Tensor({n, c - channels_a, h, w});
  for (std::size_t i = 0; i < n; ++i) {
    auto src = grad.item_span(i);
    auto da = grad_a.item_span(i);
    auto db = grad_b.item_span(i);
    std::copy(src.begin(), src.begin() + static_cast<long>(da.size()), da.begin());
    std::copy(src.begin() + static_cast<long>(da.size()), src.end(), db.begin());
  }
}

void add_channel_bias(Tensor& x, const Tensor& bias) {
  const std::size_t n = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
  if (bias.rank() != 2 || bias.dim(0) != n || bias.dim(1) != c) {
    throw std::invalid_argument("add_channel_bias: bias shape mismatch");
  }
  for (std::size_t p = 0; p < n * c; ++p) {
    double* dst = x.data() + p * hw;
    for (std::size_t k = 0; k < hw; ++k) dst[k] += bias[p];
  }
}

Tensor channel_bias_backward(const Tensor& grad_out) {
  const std::size_t n = grad_out.dim(0), c = grad_out.dim(1);
  const std::size_t hw = grad_out.dim(2) * grad_out.dim(3);
  Tensor g({n, c});
  for (std::size_t p = 0; p < n * c; ++p) {
    const double* src = grad_out.data() + p * hw;
    double s = 0.0;
    for (std::size_t k = 0; k < hw; ++k) s += src[k];
    g[p] = s;
  }
  return g;
}

Tensor add(const Tensor& a, const Tensor& b) {
  Tensor y = a;
  add_inplace(y, b);
  return y;
}

void add_inplace(Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  for (std::size_t i = 0; i < a.numel(); ++i) a[i] += b[i];
}

Tensor timestep_embedding(std::span<const int> timesteps, std::size_t dim) {
  if (dim < 2 || dim % 2) throw std::invalid_argument("timestep_embedding: dim must be even");
  const std::size_t half = dim / 2;
  Tensor e({timesteps.size(), dim});
  for (std::size_t i = 0; i < timesteps.size(); ++i) {
    for (std::size_t k = 0; k < half; ++k) {
      const double freq = std::exp(-std::log(10000.0) * static_cast<double>(k) /
                                   static_cast<double>(half));
      const double arg = static_cast<double>(timesteps[i]) * freq;
      e[i * dim + k] = std::sin(arg);
      e[i * dim + half + k] = std::cos(arg);
    }
  }
  return e;
}

}  // namespace crafted::nn
