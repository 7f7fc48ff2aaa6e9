#include "medgan/extractor.hpp"

#include <algorithm>
#include <cmath>

#include "medgan/checkpoint.hpp"
#include "medgan/digest.hpp"
#include "medgan/ops.hpp"
#include "medgan/rng.hpp"

namespace medgan {
namespace {

constexpr nn::ConvGeometry kConv3{3, 1, 1};

std::string layer_name(std::size_t block, std::size_t index) {
  return "conv" + std::to_string(block + 1) + "_" + std::to_string(index + 1);
}

}  // namespace

std::size_t ExtractorSpec::channels(std::size_t block) const {
  return std::max<std::size_t>(1, block_channels.at(block) / width_divisor);
}

void ExtractorSpec::validate() const {
  if (block_channels.empty()) throw ConfigError("extractor needs at least one block");
  if (block_layers.size() != block_channels.size()) throw ConfigError("extractor block_layers and block_channels differ in length");
  for (std::size_t n : block_layers) {
    if (n == 0) throw ConfigError("extractor blocks need at least one layer");
  }
  if (width_divisor == 0) throw ConfigError("extractor width divisor must be positive");
  for (double s : stddev) {
    if (s <= 0) throw ConfigError("extractor input stddev constants must be positive");
  }
  if (weights_source == WeightsSource::external_file && width_divisor != 1) {
    throw ConfigError("external extractor weights require width divisor 1");
  }
}

template <typename T>
Extractor<T>::Extractor(ExtractorSpec spec) : spec_(std::move(spec)) {
  spec_.validate();
  if (spec_.weights_source == WeightsSource::external_file) {
    load_external();
  } else {
    init_random();
  }
}

template <typename T>
void Extractor<T>::init_random() {
  Engine engine(spec_.seed);
  std::size_t in = 3;
  const std::size_t nb = spec_.blocks();
  for (std::size_t b = 0; b < nb; ++b) {
    const std::size_t out = spec_.channels(b);
    const std::size_t used = b + 1 == nb ? 1 : spec_.block_layers[b];
    for (std::size_t l = 0; l < used; ++l) {
      Conv c;
      c.name = layer_name(b, l);
      c.block = b;
      c.index = l;
      c.weight = Tensor<T>(Shape{out, in, 3, 3});
      fill_normal(c.weight, engine, 0.0, std::sqrt(2.0 / static_cast<double>(in * 9)));
      c.bias = Tensor<T>(Shape{out});
      layers_.push_back(std::move(c));
      in = out;
    }
  }
}

template <typename T>
void Extractor<T>::load_external() {
  const Checkpoint archive = load_checkpoint(spec_.weights_path);
  std::size_t in = 3;
  const std::size_t nb = spec_.blocks();
  for (std::size_t b = 0; b < nb; ++b) {
    const std::size_t out = spec_.channels(b);
    for (std::size_t l = 0; l < spec_.block_layers[b]; ++l) {
      const std::string name = layer_name(b, l);
      const std::string where = "block " + std::to_string(b + 1) + " layer '" + name + "'";
      auto w = archive.tensors.find(name + ".weight");
      auto bias = archive.tensors.find(name + ".bias");
      if (w == archive.tensors.end() || bias == archive.tensors.end()) {
        throw IncompatibilityError("extractor weights: missing " + where);
      }
      const Shape expected{out, in, 3, 3};
      if (w->second.shape() != expected || bias->second.shape() != Shape{out}) {
        throw IncompatibilityError("extractor weights: " + where + " has shape " + shape_string(w->second.shape()) +
                                   ", expected " + shape_string(expected));
      }
      if (b + 1 < nb || l == 0) {
        Conv c;
        c.name = name;
        c.block = b;
        c.index = l;
        c.weight = w->second.template cast<T>();
        c.bias = bias->second.template cast<T>();
        layers_.push_back(std::move(c));
      }
      in = out;
    }
  }
}

template <typename T>
std::vector<Tensor<T>> Extractor<T>::forward(const Tensor<T>& image, ExtractorTrace<T>* trace) const {
  if (image.rank() != 3 || image.channels() != 1) {
    throw ShapeError("extractor expects a single-channel image, got " + shape_string(image.shape()));
  }
  const std::size_t min = spec_.min_input_size();
  if (image.height() < min || image.width() < min) {
    throw ShapeError("extractor with " + std::to_string(spec_.blocks()) + " blocks needs inputs of at least " +
                     std::to_string(min) + "x" + std::to_string(min) + ", got " + std::to_string(image.height()) + "x" +
                     std::to_string(image.width()));
  }

  const std::size_t plane = image.height() * image.width();
  Tensor<T> h = Tensor<T>::image(3, image.height(), image.width());
  for (std::size_t c = 0; c < 3; ++c) {
    const T scale = static_cast<T>(0.5 / spec_.stddev[c]);
    const T shift = static_cast<T>((0.5 - spec_.mean[c]) / spec_.stddev[c]);
    for (std::size_t i = 0; i < plane; ++i) h[c * plane + i] = image[i] * scale + shift;
  }

  if (trace) *trace = {};
  std::vector<Tensor<T>> taps;
  for (std::size_t li = 0; li < layers_.size(); ++li) {
    const Conv& c = layers_[li];
    if (c.index == 0 && c.block > 0) {
      std::vector<std::size_t> argmax;
      const Shape in_shape = h.shape();
      h = nn::max_pool2(h, argmax);
      if (trace) {
        trace->pool_argmax.push_back(std::move(argmax));
        trace->pool_inputs.push_back(in_shape);
      }
    }
    Tensor<T> y = nn::relu(nn::conv2d(h, c.weight, &c.bias, kConv3));
    if (trace) {
      trace->conv_inputs.push_back(std::move(h));
      trace->conv_outputs.push_back(y);
    }
    if (c.index == 0) taps.push_back(y);
    h = std::move(y);
  }
  return taps;
}

template <typename T>
Tensor<T> Extractor<T>::backward(const ExtractorTrace<T>& trace, const std::vector<const Tensor<T>*>& grad_taps) const {
  if (grad_taps.size() != spec_.blocks()) {
    throw ShapeError("extractor backward: expected " + std::to_string(spec_.blocks()) + " tap gradients");
  }
  // Start from the deepest block that receives a gradient.
  std::size_t deepest = spec_.blocks();
  for (std::size_t b = spec_.blocks(); b-- > 0;) {
    if (grad_taps[b]) {
      deepest = b;
      break;
    }
  }
  const Shape& input_shape = trace.conv_inputs.front().shape();
  if (deepest == spec_.blocks()) {
    return Tensor<T>::image(1, input_shape[1], input_shape[2]);
  }

  std::size_t last = 0;
  for (std::size_t li = 0; li < layers_.size(); ++li) {
    if (layers_[li].block <= deepest) last = li;
  }
  // Only the tap layer of the deepest block matters; deeper layers of that block do not feed it.
  while (layers_[last].block == deepest && layers_[last].index > 0) --last;

  Tensor<T> g(trace.conv_outputs[last].shape());
  for (std::size_t r = 0; r <= last; ++r) {
    const std::size_t li = last - r;
    const Conv& c = layers_[li];
    if (c.index == 0 && grad_taps[c.block]) accumulate(g, *grad_taps[c.block]);
    Tensor<T> gz = nn::relu_backward(trace.conv_outputs[li], g);
    g = nn::conv2d_backward<T>(trace.conv_inputs[li], c.weight, gz, kConv3, nullptr, nullptr, true);
    if (c.index == 0 && c.block > 0) {
      g = nn::max_pool2_backward(trace.pool_argmax[c.block - 1], g, trace.pool_inputs[c.block - 1]);
    }
  }

  Tensor<T> gi = Tensor<T>::image(1, input_shape[1], input_shape[2]);
  const std::size_t plane = gi.size();
  for (std::size_t c = 0; c < 3; ++c) {
    const T scale = static_cast<T>(0.5 / spec_.stddev[c]);
    for (std::size_t i = 0; i < plane; ++i) gi[i] += g[c * plane + i] * scale;
  }
  return gi;
}

template <typename T>
std::string Extractor<T>::weights_digest() const {
  Sha256 h;
  for (const Conv& c : layers_) {
    h.update(c.name.data(), c.name.size());
    h.update_values(c.weight.values());
    h.update_values(c.bias.values());
  }
  return h.hex_digest();
}

template class Extractor<float>;
template class Extractor<double>;

}  // namespace medgan
