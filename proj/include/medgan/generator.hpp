#pragma once

#include <cstddef>
#include <cstdint>
#include <utility>
#include <vector>

#include "medgan/network.hpp"
#include "medgan/ops.hpp"
#include "medgan/tensor.hpp"

namespace medgan {

// Architecture of one encoder-decoder U-block.
//
// encoder_channels[k] is the output width of encoder layer k. decoder_channels[k]
// is the input width of decoder layer k, i.e. after the mirrored skip has been
// concatenated, so for the default 8-layer block it reads
// 512, 1024, 1024, 1024, 1024, 512, 256, 128. Encoder layer k (1-based) feeds
// decoder layer depth+1-k; the bottleneck has no skip.
struct UBlockSpec {
  std::vector<std::size_t> encoder_channels{64, 128, 256, 512, 512, 512, 512, 512};
  std::vector<std::size_t> decoder_channels{512, 1024, 1024, 1024, 1024, 512, 256, 128};
  std::size_t kernel = 4;
  double leaky_slope = 0.2;
  Normalization normalization = Normalization::instance;
  double norm_eps = 1e-5;
  std::size_t input_channels = 1;
  std::size_t output_channels = 1;

  std::size_t depth() const noexcept { return encoder_channels.size(); }
  std::size_t required_divisor() const noexcept { return std::size_t{1} << depth(); }
  // 1-based (encoder layer, decoder layer) pairs joined by skip connections.
  std::vector<std::pair<std::size_t, std::size_t>> skip_pairs() const;
  // Throws ConfigError when the channel lists do not describe a mirrored block.
  void validate() const;

  // First `depth` layers of the default block with every width divided by
  // `width_divisor`; decoder widths follow from the encoder.
  static UBlockSpec scaled(std::size_t depth, std::size_t width_divisor);
  static UBlockSpec from_encoder(std::vector<std::size_t> encoder_channels);
};

struct CasNetConfig {
  std::size_t n_blocks = 6;
  UBlockSpec ublock{};
  void validate() const;
};

template <typename T>
struct UBlockTrace {
  std::vector<Tensor<T>> enc_inputs;
  std::vector<nn::NormCache<T>> enc_norm;
  std::vector<Tensor<T>> enc_outputs;
  std::vector<Tensor<T>> dec_inputs;
  std::vector<nn::NormCache<T>> dec_norm;
  std::vector<Tensor<T>> dec_outputs;
};

template <typename T>
class UBlock {
 public:
  UBlock(UBlockSpec spec, std::uint64_t seed, std::string prefix = "ublock0");

  const UBlockSpec& spec() const noexcept { return spec_; }

  // trace may be null for inference. zero_skips replaces every skip tensor by
  // zeros and exists for wiring checks.
  Tensor<T> forward(const Tensor<T>& x, UBlockTrace<T>* trace = nullptr, bool zero_skips = false) const;
  // Accumulates parameter gradients; returns the gradient w.r.t. the input.
  Tensor<T> backward(const UBlockTrace<T>& trace, const Tensor<T>& grad_out);

  std::vector<Parameter<T>*> parameters();
  std::vector<const Parameter<T>*> parameters() const;
  std::size_t parameter_count() const;
  // Spatial extents of every encoder output for an input of the given size.
  std::vector<std::size_t> encoder_extents(std::size_t input_size) const;
  void check_input(const Tensor<T>& x) const;

 private:
  struct Layer {
    Parameter<T> weight;
    Parameter<T> bias;  // empty when normalized
    Parameter<T> gamma;
    Parameter<T> beta;
    bool normalized = false;
  };

  UBlockSpec spec_;
  std::vector<Layer> encoder_;
  std::vector<Layer> decoder_;
};

// Chain of U-blocks; block k consumes block k-1's output.
template <typename T>
class CasNet {
 public:
  CasNet(CasNetConfig cfg, std::uint64_t seed);

  const CasNetConfig& config() const noexcept { return cfg_; }
  std::size_t size() const noexcept { return blocks_.size(); }
  UBlock<T>& block(std::size_t i) { return blocks_.at(i); }
  const UBlock<T>& block(std::size_t i) const { return blocks_.at(i); }

  Tensor<T> forward(const Tensor<T>& y, std::vector<UBlockTrace<T>>* traces = nullptr) const;
  Tensor<T> backward(const std::vector<UBlockTrace<T>>& traces, const Tensor<T>& grad_out);

  std::vector<Parameter<T>*> parameters();
  std::vector<const Parameter<T>*> parameters() const;
  std::size_t parameter_count() const;

 private:
  CasNetConfig cfg_;
  std::vector<UBlock<T>> blocks_;
};

}  // namespace medgan
