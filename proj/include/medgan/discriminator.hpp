#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "medgan/network.hpp"
#include "medgan/ops.hpp"
#include "medgan/tensor.hpp"

namespace medgan {

// Patch discriminator: two normalized leaky-rectifier convolutions followed by
// a 1-channel convolution and a sigmoid. With the default (2, 1, 1) strides
// each output unit sees a 16x16 input patch.
struct PatchDiscriminatorSpec {
  std::vector<std::size_t> layer_channels{64, 128};
  std::vector<std::size_t> strides{2, 1};
  std::size_t head_stride = 1;
  std::size_t kernel = 4;
  std::size_t padding = 1;
  std::size_t input_channels = 2;  // candidate + condition
  double leaky_slope = 0.2;
  Normalization normalization = Normalization::instance;
  double norm_eps = 1e-5;

  void validate() const;
  // Receptive field of one output unit, in input pixels.
  std::size_t receptive_field() const;
  // Receptive field after each layer including the head, e.g. 4, 10, 16.
  std::vector<std::size_t> receptive_field_schedule() const;
  std::size_t output_size(std::size_t input_size) const;
  static PatchDiscriminatorSpec scaled(std::size_t width_divisor);
};

// Hidden activations exposed for the perceptual loss. Entry 0 is the raw
// concatenated (candidate, condition) input; later entries go shallow to deep.
template <typename T>
struct FeatureStack {
  std::vector<Tensor<T>> layers;

  std::size_t size() const noexcept { return layers.size(); }
  const Tensor<T>& operator[](std::size_t i) const { return layers.at(i); }
  std::size_t height(std::size_t i) const { return layers.at(i).height(); }
  std::size_t width(std::size_t i) const { return layers.at(i).width(); }
  std::size_t depth(std::size_t i) const { return layers.at(i).channels(); }
};

template <typename T>
struct DiscriminatorOutput {
  Tensor<T> prob;
  FeatureStack<T> features;
};

template <typename T>
struct DiscriminatorTrace {
  std::vector<nn::NormCache<T>> norm;
};

template <typename T>
class PatchDiscriminator {
 public:
  PatchDiscriminator(PatchDiscriminatorSpec spec, std::uint64_t seed);

  const PatchDiscriminatorSpec& spec() const noexcept { return spec_; }

  DiscriminatorOutput<T> forward(const Tensor<T>& candidate, const Tensor<T>& condition,
                                 DiscriminatorTrace<T>* trace = nullptr) const;

  // Backpropagates a gradient on the probability map and/or on any feature
  // (null entries are skipped) and returns the gradient w.r.t. the full
  // concatenated input. Parameter gradients accumulate only when requested.
  Tensor<T> backward(const DiscriminatorOutput<T>& out, const DiscriminatorTrace<T>& trace,
                     const Tensor<T>* grad_prob, const std::vector<const Tensor<T>*>& grad_features,
                     bool accumulate_params);

  // Candidate slice of an input gradient returned by backward().
  Tensor<T> candidate_gradient(const Tensor<T>& grad_input) const;

  // One power-iteration step per convolution with persisted u, then W /= sigma.
  // Returns the sigma estimates used, one per convolution (head last).
  std::vector<T> apply_spectral_normalization(int iterations = 1);
  // Fresh estimate of each convolution's spectral norm without modifying anything.
  std::vector<T> spectral_norms(int iterations) const;

  std::size_t conv_count() const noexcept { return convs_.size(); }
  Parameter<T>& conv_weight(std::size_t i) { return convs_.at(i).weight; }
  const Parameter<T>& conv_weight(std::size_t i) const { return convs_.at(i).weight; }
  std::vector<T>& power_vector(std::size_t i) { return convs_.at(i).u; }
  const std::vector<T>& power_vector(std::size_t i) const { return convs_.at(i).u; }

  std::vector<Parameter<T>*> parameters();
  std::vector<const Parameter<T>*> parameters() const;
  std::size_t parameter_count() const;

 private:
  struct Conv {
    Parameter<T> weight;
    Parameter<T> bias;
    Parameter<T> gamma;
    Parameter<T> beta;
    bool normalized = false;
    std::size_t stride = 1;
    std::vector<T> u;
  };

  PatchDiscriminatorSpec spec_;
  std::vector<Conv> convs_;  // hidden layers then head
  std::uint64_t seed_;
};

}  // namespace medgan
