#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "medgan/tensor.hpp"

namespace medgan {

enum class WeightsSource { seeded_random, external_file };

// Frozen VGG-style feature extractor. Block b has block_layers[b] 3x3
// convolutions with rectifiers and is followed by 2x2 max pooling. The tap of
// each block is the rectified output of its first convolution.
struct ExtractorSpec {
  std::vector<std::size_t> block_channels{64, 128, 256, 512, 512};
  std::vector<std::size_t> block_layers{2, 2, 4, 4, 4};
  std::size_t width_divisor = 1;
  // Grayscale is replicated to three channels, mapped [-1,1] -> [0,1], then
  // standardized per channel with these constants.
  std::array<double, 3> mean{0.485, 0.456, 0.406};
  std::array<double, 3> stddev{0.229, 0.224, 0.225};
  WeightsSource weights_source = WeightsSource::seeded_random;
  std::uint64_t seed = 7;
  std::filesystem::path weights_path;

  std::size_t blocks() const noexcept { return block_channels.size(); }
  std::size_t channels(std::size_t block) const;
  std::size_t min_input_size() const noexcept { return std::size_t{1} << blocks(); }
  void validate() const;
};

template <typename T>
struct ExtractorTrace {
  std::vector<Tensor<T>> conv_inputs;
  std::vector<Tensor<T>> conv_outputs;
  std::vector<std::vector<std::size_t>> pool_argmax;  // per block > 0
  std::vector<Shape> pool_inputs;
};

template <typename T>
class Extractor {
 public:
  explicit Extractor(ExtractorSpec spec);

  const ExtractorSpec& spec() const noexcept { return spec_; }
  std::size_t blocks() const noexcept { return spec_.blocks(); }

  // One tap per block, shallow to deep. Throws ShapeError for inputs smaller
  // than 2^B or with more than one channel.
  std::vector<Tensor<T>> forward(const Tensor<T>& image, ExtractorTrace<T>* trace = nullptr) const;
  // Gradient w.r.t. the input image; null entries contribute nothing.
  Tensor<T> backward(const ExtractorTrace<T>& trace, const std::vector<const Tensor<T>*>& grad_taps) const;

  // Digest over every weight; stable while the extractor is frozen.
  std::string weights_digest() const;
  std::size_t layer_count() const noexcept { return layers_.size(); }

 private:
  struct Conv {
    std::string name;
    std::size_t block = 0;
    std::size_t index = 0;
    Tensor<T> weight;
    Tensor<T> bias;
  };

  void load_external();
  void init_random();

  ExtractorSpec spec_;
  std::vector<Conv> layers_;  // only layers up to the deepest tap
};

}  // namespace medgan
