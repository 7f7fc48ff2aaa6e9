#pragma once

#include <cstddef>
#include <utility>
#include <vector>

#include "medgan/tensor.hpp"

// Single-sample layer primitives with hand-written backward passes.
// All activations are (channels, height, width).
namespace medgan::nn {

struct ConvGeometry {
  std::size_t kernel = 4;
  std::size_t stride = 2;
  std::size_t pad = 1;
};

// Output extent of a convolution; throws ShapeError when the kernel does not fit.
std::size_t conv_out_size(std::size_t in, ConvGeometry g);
// Output extent of a transposed convolution (inverse of conv_out_size).
std::size_t deconv_out_size(std::size_t in, ConvGeometry g);

// weight: (out, in, k, k); bias: (out) or null.
template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>* bias, ConvGeometry g);

// Accumulates into grad_weight / grad_bias when non-null. Returns the input
// gradient, or an empty tensor when need_grad_input is false.
template <typename T>
Tensor<T> conv2d_backward(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& grad_out,
                          ConvGeometry g, Tensor<T>* grad_weight, Tensor<T>* grad_bias,
                          bool need_grad_input);

// weight: (in, out, k, k); bias: (out) or null.
template <typename T>
Tensor<T> conv_transpose2d(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>* bias,
                           ConvGeometry g);

template <typename T>
Tensor<T> conv_transpose2d_backward(const Tensor<T>& x, const Tensor<T>& weight,
                                    const Tensor<T>& grad_out, ConvGeometry g,
                                    Tensor<T>* grad_weight, Tensor<T>* grad_bias,
                                    bool need_grad_input);

template <typename T>
struct NormCache {
  Tensor<T> normalized;
  std::vector<T> inv_std;
};

// Per-sample, per-channel normalization with optional affine scale/shift.
template <typename T>
Tensor<T> instance_norm(const Tensor<T>& x, const Tensor<T>* gamma, const Tensor<T>* beta, T eps,
                        NormCache<T>& cache);

template <typename T>
Tensor<T> instance_norm_backward(const NormCache<T>& cache, const Tensor<T>* gamma,
                                 const Tensor<T>& grad_out, Tensor<T>* grad_gamma,
                                 Tensor<T>* grad_beta);

template <typename T>
Tensor<T> leaky_relu(const Tensor<T>& x, T slope);
// Uses the activation output; valid because slope > 0 preserves sign.
template <typename T>
Tensor<T> leaky_relu_backward(const Tensor<T>& y, const Tensor<T>& grad_out, T slope);

template <typename T>
Tensor<T> relu(const Tensor<T>& x);
template <typename T>
Tensor<T> relu_backward(const Tensor<T>& y, const Tensor<T>& grad_out);

template <typename T>
Tensor<T> tanh(const Tensor<T>& x);
template <typename T>
Tensor<T> tanh_backward(const Tensor<T>& y, const Tensor<T>& grad_out);

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& x);
template <typename T>
Tensor<T> sigmoid_backward(const Tensor<T>& y, const Tensor<T>& grad_out);

// 2x2 max pooling, stride 2 (floor on odd extents). `argmax` records the
// flat input index of each output element.
template <typename T>
Tensor<T> max_pool2(const Tensor<T>& x, std::vector<std::size_t>& argmax);
template <typename T>
Tensor<T> max_pool2_backward(const std::vector<std::size_t>& argmax, const Tensor<T>& grad_out,
                             const Shape& input_shape);

template <typename T>
Tensor<T> concat_channels(const Tensor<T>& a, const Tensor<T>& b);
// Splits along channels at `first_channels`.
template <typename T>
std::pair<Tensor<T>, Tensor<T>> split_channels(const Tensor<T>& x, std::size_t first_channels);

}  // namespace medgan::nn
