#include "medgan/ops.hpp"

#include <Eigen/Core>
#include <cmath>

namespace medgan::nn {
namespace {

template <typename T>
using RowMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatMap = Eigen::Map<RowMatrix<T>>;
template <typename T>
using ConstMatMap = Eigen::Map<const RowMatrix<T>>;

// Unrolls kernel-sized patches of a (C, H, W) image into rows of
// (C*k*k) x (OH*OW).
template <typename T>
void im2col(const T* image, std::size_t channels, std::size_t height, std::size_t width,
            ConvGeometry g, std::size_t out_h, std::size_t out_w, T* cols) {
  const std::size_t k = g.kernel;
  const std::size_t plane = out_h * out_w;
  for (std::size_t c = 0; c < channels; ++c) {
    const T* src = image + c * height * width;
    for (std::size_t ki = 0; ki < k; ++ki) {
      for (std::size_t kj = 0; kj < k; ++kj) {
        T* row = cols + ((c * k + ki) * k + kj) * plane;
        for (std::size_t oh = 0; oh < out_h; ++oh) {
          const long ih = static_cast<long>(oh * g.stride + ki) - static_cast<long>(g.pad);
          T* dst = row + oh * out_w;
          if (ih < 0 || ih >= static_cast<long>(height)) {
            std::fill(dst, dst + out_w, T{0});
            continue;
          }
          const T* line = src + static_cast<std::size_t>(ih) * width;
          for (std::size_t ow = 0; ow < out_w; ++ow) {
            const long iw = static_cast<long>(ow * g.stride + kj) - static_cast<long>(g.pad);
            dst[ow] = (iw < 0 || iw >= static_cast<long>(width)) ? T{0} : line[iw];
          }
        }
      }
    }
  }
}

// Adjoint of im2col: scatters column entries back onto the image, summing overlaps.
template <typename T>
void col2im(const T* cols, std::size_t channels, std::size_t height, std::size_t width,
            ConvGeometry g, std::size_t out_h, std::size_t out_w, T* image) {
  const std::size_t k = g.kernel;
  const std::size_t plane = out_h * out_w;
  std::fill(image, image + channels * height * width, T{0});
  for (std::size_t c = 0; c < channels; ++c) {
    T* dst = image + c * height * width;
    for (std::size_t ki = 0; ki < k; ++ki) {
      for (std::size_t kj = 0; kj < k; ++kj) {
        const T* row = cols + ((c * k + ki) * k + kj) * plane;
        for (std::size_t oh = 0; oh < out_h; ++oh) {
          const long ih = static_cast<long>(oh * g.stride + ki) - static_cast<long>(g.pad);
          if (ih < 0 || ih >= static_cast<long>(height)) continue;
          T* line = dst + static_cast<std::size_t>(ih) * width;
          const T* src = row + oh * out_w;
          for (std::size_t ow = 0; ow < out_w; ++ow) {
            const long iw = static_cast<long>(ow * g.stride + kj) - static_cast<long>(g.pad);
            if (iw >= 0 && iw < static_cast<long>(width)) line[iw] += src[ow];
          }
        }
      }
    }
  }
}

template <typename T>
void check_image(const Tensor<T>& x, const char* op) {
  if (x.rank() != 3) throw ShapeError(std::string(op) + ": expected (C,H,W), got " + shape_string(x.shape()));
}

}  // namespace

std::size_t conv_out_size(std::size_t in, ConvGeometry g) {
  if (in + 2 * g.pad < g.kernel) {
    throw ShapeError("convolution kernel " + std::to_string(g.kernel) + " does not fit extent " +
                     std::to_string(in));
  }
  return (in + 2 * g.pad - g.kernel) / g.stride + 1;
}

std::size_t deconv_out_size(std::size_t in, ConvGeometry g) {
  return (in - 1) * g.stride + g.kernel - 2 * g.pad;
}

template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>* bias, ConvGeometry g) {
  check_image(x, "conv2d");
  const std::size_t in_c = x.channels();
  const std::size_t out_c = weight.dim(0);
  if (weight.dim(1) != in_c) {
    throw ShapeError("conv2d: weight expects " + std::to_string(weight.dim(1)) + " input channels, got " +
                     std::to_string(in_c));
  }
  const std::size_t oh = conv_out_size(x.height(), g);
  const std::size_t ow = conv_out_size(x.width(), g);
  const std::size_t patch = in_c * g.kernel * g.kernel;
  AlignedVector<T> cols(patch * oh * ow);
  im2col(x.data(), in_c, x.height(), x.width(), g, oh, ow, cols.data());

  Tensor<T> y = Tensor<T>::image(out_c, oh, ow);
  MatMap<T> ym(y.data(), out_c, oh * ow);
  ym.noalias() = ConstMatMap<T>(weight.data(), out_c, patch) * ConstMatMap<T>(cols.data(), patch, oh * ow);
  if (bias) {
    for (std::size_t o = 0; o < out_c; ++o) ym.row(o).array() += (*bias)[o];
  }
  return y;
}

template <typename T>
Tensor<T> conv2d_backward(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& grad_out,
                          ConvGeometry g, Tensor<T>* grad_weight, Tensor<T>* grad_bias,
                          bool need_grad_input) {
  const std::size_t in_c = x.channels();
  const std::size_t out_c = weight.dim(0);
  const std::size_t oh = grad_out.height();
  const std::size_t ow = grad_out.width();
  const std::size_t patch = in_c * g.kernel * g.kernel;
  ConstMatMap<T> gy(grad_out.data(), out_c, oh * ow);

  if (grad_bias) {
    for (std::size_t o = 0; o < out_c; ++o) (*grad_bias)[o] += gy.row(o).sum();
  }
  if (grad_weight) {
    AlignedVector<T> cols(patch * oh * ow);
    im2col(x.data(), in_c, x.height(), x.width(), g, oh, ow, cols.data());
    MatMap<T>(grad_weight->data(), out_c, patch).noalias() +=
        gy * ConstMatMap<T>(cols.data(), patch, oh * ow).transpose();
  }
  if (!need_grad_input) return {};
  AlignedVector<T> gcols(patch * oh * ow);
  MatMap<T>(gcols.data(), patch, oh * ow).noalias() =
      ConstMatMap<T>(weight.data(), out_c, patch).transpose() * gy;
  Tensor<T> gx(x.shape());
  col2im(gcols.data(), in_c, x.height(), x.width(), g, oh, ow, gx.data());
  return gx;
}

template <typename T>
Tensor<T> conv_transpose2d(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>* bias,
                           ConvGeometry g) {
  check_image(x, "conv_transpose2d");
  const std::size_t in_c = x.channels();
  if (weight.dim(0) != in_c) {
    throw ShapeError("conv_transpose2d: weight expects " + std::to_string(weight.dim(0)) +
                     " input channels, got " + std::to_string(in_c));
  }
  const std::size_t out_c = weight.dim(1);
  const std::size_t h = x.height();
  const std::size_t w = x.width();
  const std::size_t oh = deconv_out_size(h, g);
  const std::size_t ow = deconv_out_size(w, g);
  const std::size_t patch = out_c * g.kernel * g.kernel;

  AlignedVector<T> cols(patch * h * w);
  MatMap<T>(cols.data(), patch, h * w).noalias() =
      ConstMatMap<T>(weight.data(), in_c, patch).transpose() * ConstMatMap<T>(x.data(), in_c, h * w);
  Tensor<T> y = Tensor<T>::image(out_c, oh, ow);
  col2im(cols.data(), out_c, oh, ow, g, h, w, y.data());
  if (bias) {
    MatMap<T> ym(y.data(), out_c, oh * ow);
    for (std::size_t o = 0; o < out_c; ++o) ym.row(o).array() += (*bias)[o];
  }
  return y;
}

template <typename T>
Tensor<T> conv_transpose2d_backward(const Tensor<T>& x, const Tensor<T>& weight,
                                    const Tensor<T>& grad_out, ConvGeometry g,
                                    Tensor<T>* grad_weight, Tensor<T>* grad_bias,
                                    bool need_grad_input) {
  const std::size_t in_c = x.channels();
  const std::size_t out_c = weight.dim(1);
  const std::size_t h = x.height();
  const std::size_t w = x.width();
  const std::size_t patch = out_c * g.kernel * g.kernel;

  if (grad_bias) {
    ConstMatMap<T> gy(grad_out.data(), out_c, grad_out.height() * grad_out.width());
    for (std::size_t o = 0; o < out_c; ++o) (*grad_bias)[o] += gy.row(o).sum();
  }
  if (!grad_weight && !need_grad_input) return {};

  AlignedVector<T> gcols(patch * h * w);
  im2col(grad_out.data(), out_c, grad_out.height(), grad_out.width(), g, h, w, gcols.data());
  ConstMatMap<T> gc(gcols.data(), patch, h * w);
  if (grad_weight) {
    MatMap<T>(grad_weight->data(), in_c, patch).noalias() +=
        ConstMatMap<T>(x.data(), in_c, h * w) * gc.transpose();
  }
  if (!need_grad_input) return {};
  Tensor<T> gx(x.shape());
  MatMap<T>(gx.data(), in_c, h * w).noalias() = ConstMatMap<T>(weight.data(), in_c, patch) * gc;
  return gx;
}

template <typename T>
Tensor<T> instance_norm(const Tensor<T>& x, const Tensor<T>* gamma, const Tensor<T>* beta, T eps,
                        NormCache<T>& cache) {
  check_image(x, "instance_norm");
  const std::size_t c = x.channels();
  const std::size_t n = x.height() * x.width();
  cache.normalized = Tensor<T>(x.shape());
  cache.inv_std.assign(c, T{0});
  Tensor<T> y(x.shape());
  for (std::size_t ch = 0; ch < c; ++ch) {
    const T* src = x.data() + ch * n;
    T mean = 0;
    for (std::size_t i = 0; i < n; ++i) mean += src[i];
    mean /= static_cast<T>(n);
    T var = 0;
    for (std::size_t i = 0; i < n; ++i) var += (src[i] - mean) * (src[i] - mean);
    var /= static_cast<T>(n);
    const T inv = T{1} / std::sqrt(var + eps);
    cache.inv_std[ch] = inv;
    const T scale = gamma ? (*gamma)[ch] : T{1};
    const T shift = beta ? (*beta)[ch] : T{0};
    T* xn = cache.normalized.data() + ch * n;
    T* dst = y.data() + ch * n;
    for (std::size_t i = 0; i < n; ++i) {
      xn[i] = (src[i] - mean) * inv;
      dst[i] = scale * xn[i] + shift;
    }
  }
  return y;
}

template <typename T>
Tensor<T> instance_norm_backward(const NormCache<T>& cache, const Tensor<T>* gamma,
                                 const Tensor<T>& grad_out, Tensor<T>* grad_gamma,
                                 Tensor<T>* grad_beta) {
  const std::size_t c = grad_out.channels();
  const std::size_t n = grad_out.height() * grad_out.width();
  Tensor<T> gx(grad_out.shape());
  for (std::size_t ch = 0; ch < c; ++ch) {
    const T* gy = grad_out.data() + ch * n;
    const T* xn = cache.normalized.data() + ch * n;
    T sum_g = 0;
    T sum_gx = 0;
    for (std::size_t i = 0; i < n; ++i) {
      sum_g += gy[i];
      sum_gx += gy[i] * xn[i];
    }
    if (grad_gamma) (*grad_gamma)[ch] += sum_gx;
    if (grad_beta) (*grad_beta)[ch] += sum_g;
    const T scale = gamma ? (*gamma)[ch] : T{1};
    const T k = scale * cache.inv_std[ch] / static_cast<T>(n);
    T* dst = gx.data() + ch * n;
    for (std::size_t i = 0; i < n; ++i) {
      dst[i] = k * (static_cast<T>(n) * gy[i] - sum_g - xn[i] * sum_gx);
    }
  }
  return gx;
}

template <typename T>
Tensor<T> leaky_relu(const Tensor<T>& x, T slope) {
  Tensor<T> y(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] > 0 ? x[i] : slope * x[i];
  return y;
}

template <typename T>
Tensor<T> leaky_relu_backward(const Tensor<T>& y, const Tensor<T>& grad_out, T slope) {
  Tensor<T> g(y.shape());
  for (std::size_t i = 0; i < y.size(); ++i) g[i] = y[i] > 0 ? grad_out[i] : slope * grad_out[i];
  return g;
}

template <typename T>
Tensor<T> relu(const Tensor<T>& x) {
  Tensor<T> y(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] > 0 ? x[i] : T{0};
  return y;
}

template <typename T>
Tensor<T> relu_backward(const Tensor<T>& y, const Tensor<T>& grad_out) {
  Tensor<T> g(y.shape());
  for (std::size_t i = 0; i < y.size(); ++i) g[i] = y[i] > 0 ? grad_out[i] : T{0};
  return g;
}

template <typename T>
Tensor<T> tanh(const Tensor<T>& x) {
  Tensor<T> y(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = std::tanh(x[i]);
  return y;
}

template <typename T>
Tensor<T> tanh_backward(const Tensor<T>& y, const Tensor<T>& grad_out) {
  Tensor<T> g(y.shape());
  for (std::size_t i = 0; i < y.size(); ++i) g[i] = grad_out[i] * (T{1} - y[i] * y[i]);
  return g;
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& x) {
  Tensor<T> y(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const T v = x[i];
    if (v >= 0) {
      y[i] = T{1} / (T{1} + std::exp(-v));
    } else {
      const T e = std::exp(v);
      y[i] = e / (T{1} + e);
    }
  }
  return y;
}

template <typename T>
Tensor<T> sigmoid_backward(const Tensor<T>& y, const Tensor<T>& grad_out) {
  Tensor<T> g(y.shape());
  for (std::size_t i = 0; i < y.size(); ++i) g[i] = grad_out[i] * y[i] * (T{1} - y[i]);
  return g;
}

template <typename T>
Tensor<T> max_pool2(const Tensor<T>& x, std::vector<std::size_t>& argmax) {
  check_image(x, "max_pool2");
  const std::size_t c = x.channels();
  const std::size_t h = x.height();
  const std::size_t w = x.width();
  const std::size_t oh = h / 2;
  const std::size_t ow = w / 2;
  if (oh == 0 || ow == 0) throw ShapeError("max_pool2: input " + shape_string(x.shape()) + " too small");
  Tensor<T> y = Tensor<T>::image(c, oh, ow);
  argmax.assign(y.size(), 0);
  std::size_t out = 0;
  for (std::size_t ch = 0; ch < c; ++ch) {
    for (std::size_t i = 0; i < oh; ++i) {
      for (std::size_t j = 0; j < ow; ++j, ++out) {
        std::size_t best = (ch * h + 2 * i) * w + 2 * j;
        for (std::size_t di = 0; di < 2; ++di) {
          for (std::size_t dj = 0; dj < 2; ++dj) {
            const std::size_t idx = (ch * h + 2 * i + di) * w + 2 * j + dj;
            if (x[idx] > x[best]) best = idx;
          }
        }
        argmax[out] = best;
        y[out] = x[best];
      }
    }
  }
  return y;
}

template <typename T>
Tensor<T> max_pool2_backward(const std::vector<std::size_t>& argmax, const Tensor<T>& grad_out,
                             const Shape& input_shape) {
  Tensor<T> gx(input_shape);
  for (std::size_t i = 0; i < argmax.size(); ++i) gx[argmax[i]] += grad_out[i];
  return gx;
}

template <typename T>
Tensor<T> concat_channels(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.height() != b.height() || a.width() != b.width()) {
    throw ShapeError("concat_channels: spatial mismatch " + shape_string(a.shape()) + " vs " +
                     shape_string(b.shape()));
  }
  Tensor<T> y = Tensor<T>::image(a.channels() + b.channels(), a.height(), a.width());
  std::copy(a.values().begin(), a.values().end(), y.data());
  std::copy(b.values().begin(), b.values().end(), y.data() + a.size());
  return y;
}

template <typename T>
std::pair<Tensor<T>, Tensor<T>> split_channels(const Tensor<T>& x, std::size_t first_channels) {
  const std::size_t plane = x.height() * x.width();
  Tensor<T> a = Tensor<T>::image(first_channels, x.height(), x.width());
  Tensor<T> b = Tensor<T>::image(x.channels() - first_channels, x.height(), x.width());
  std::copy(x.data(), x.data() + first_channels * plane, a.data());
  std::copy(x.data() + first_channels * plane, x.data() + x.size(), b.data());
  return {std::move(a), std::move(b)};
}

#define MEDGAN_INSTANTIATE_OPS(T)                                                                     \
  template Tensor<T> conv2d(const Tensor<T>&, const Tensor<T>&, const Tensor<T>*, ConvGeometry);      \
  template Tensor<T> conv2d_backward(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,            \
                                     ConvGeometry, Tensor<T>*, Tensor<T>*, bool);                     \
  template Tensor<T> conv_transpose2d(const Tensor<T>&, const Tensor<T>&, const Tensor<T>*,           \
                                      ConvGeometry);                                                  \
  template Tensor<T> conv_transpose2d_backward(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,  \
                                               ConvGeometry, Tensor<T>*, Tensor<T>*, bool);           \
  template Tensor<T> instance_norm(const Tensor<T>&, const Tensor<T>*, const Tensor<T>*, T,           \
                                   NormCache<T>&);                                                    \
  template Tensor<T> instance_norm_backward(const NormCache<T>&, const Tensor<T>*, const Tensor<T>&,  \
                                            Tensor<T>*, Tensor<T>*);                                  \
  template Tensor<T> leaky_relu(const Tensor<T>&, T);                                                 \
  template Tensor<T> leaky_relu_backward(const Tensor<T>&, const Tensor<T>&, T);                      \
  template Tensor<T> relu(const Tensor<T>&);                                                          \
  template Tensor<T> relu_backward(const Tensor<T>&, const Tensor<T>&);                               \
  template Tensor<T> tanh(const Tensor<T>&);                                                          \
  template Tensor<T> tanh_backward(const Tensor<T>&, const Tensor<T>&);                               \
  template Tensor<T> sigmoid(const Tensor<T>&);                                                       \
  template Tensor<T> sigmoid_backward(const Tensor<T>&, const Tensor<T>&);                            \
  template Tensor<T> max_pool2(const Tensor<T>&, std::vector<std::size_t>&);                          \
  template Tensor<T> max_pool2_backward(const std::vector<std::size_t>&, const Tensor<T>&,            \
                                        const Shape&);                                                \
  template Tensor<T> concat_channels(const Tensor<T>&, const Tensor<T>&);                             \
  template std::pair<Tensor<T>, Tensor<T>> split_channels(const Tensor<T>&, std::size_t);

MEDGAN_INSTANTIATE_OPS(float)
MEDGAN_INSTANTIATE_OPS(double)

#undef MEDGAN_INSTANTIATE_OPS

}  // namespace medgan::nn
