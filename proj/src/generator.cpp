#include "medgan/generator.hpp"

#include <algorithm>
#include <string>

#include "medgan/rng.hpp"

namespace medgan {

std::vector<std::pair<std::size_t, std::size_t>> UBlockSpec::skip_pairs() const {
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  const std::size_t d = depth();
  for (std::size_t k = 1; k < d; ++k) pairs.emplace_back(k, d + 1 - k);
  return pairs;
}

void UBlockSpec::validate() const {
  const std::size_t d = depth();
  if (d == 0) throw ConfigError("U-block needs at least one encoder layer");
  if (decoder_channels.size() != d) {
    throw ConfigError("U-block encoder has " + std::to_string(d) + " layers but decoder has " +
                      std::to_string(decoder_channels.size()));
  }
  for (std::size_t c : encoder_channels) {
    if (c == 0) throw ConfigError("U-block encoder channel count must be positive");
  }
  if (decoder_channels[0] != encoder_channels[d - 1]) {
    throw ConfigError("decoder layer 1 must consume the bottleneck width " + std::to_string(encoder_channels[d - 1]));
  }
  for (std::size_t k = 1; k < d; ++k) {
    const std::size_t expected = 2 * encoder_channels[d - 1 - k];
    if (decoder_channels[k] != expected) {
      throw ConfigError("decoder layer " + std::to_string(k + 1) + " input width " +
                        std::to_string(decoder_channels[k]) + " does not match skip concatenation width " +
                        std::to_string(expected));
    }
  }
  if (kernel != 4) throw ConfigError("U-block kernel must be 4 (stride 2, padding 1 halves each extent)");
  if (leaky_slope <= 0.0) throw ConfigError("leaky slope must be positive");
  if (input_channels == 0 || output_channels == 0) throw ConfigError("U-block channel counts must be positive");
}

UBlockSpec UBlockSpec::from_encoder(std::vector<std::size_t> encoder_channels) {
  UBlockSpec spec;
  const std::size_t d = encoder_channels.size();
  spec.decoder_channels.assign(d, 0);
  if (d > 0) {
    spec.decoder_channels[0] = encoder_channels[d - 1];
    for (std::size_t k = 1; k < d; ++k) spec.decoder_channels[k] = 2 * encoder_channels[d - 1 - k];
  }
  spec.encoder_channels = std::move(encoder_channels);
  return spec;
}

UBlockSpec UBlockSpec::scaled(std::size_t depth, std::size_t width_divisor) {
  const UBlockSpec base;
  if (depth == 0 || depth > base.encoder_channels.size()) {
    throw ConfigError("U-block depth must be in 1..8, got " + std::to_string(depth));
  }
  if (width_divisor == 0) throw ConfigError("width divisor must be positive");
  std::vector<std::size_t> enc;
  for (std::size_t k = 0; k < depth; ++k) enc.push_back(std::max<std::size_t>(1, base.encoder_channels[k] / width_divisor));
  return from_encoder(std::move(enc));
}

void CasNetConfig::validate() const {
  if (n_blocks < 1) throw ConfigError("CasNet needs N >= 1 U-blocks");
  ublock.validate();
  if (ublock.input_channels != ublock.output_channels) {
    throw ConfigError("chained U-blocks must map images to images of the same channel count");
  }
}

template <typename T>
UBlock<T>::UBlock(UBlockSpec spec, std::uint64_t seed, std::string prefix) : spec_(std::move(spec)) {
  spec_.validate();
  Engine engine(seed);
  const std::size_t d = spec_.depth();
  const std::size_t k = spec_.kernel;
  const bool norm = spec_.normalization == Normalization::instance;

  auto make_layer = [&](const std::string& name, Shape wshape, std::size_t out, bool normalized) {
    Layer layer;
    layer.weight = Parameter<T>(name + ".weight", Tensor<T>(std::move(wshape)));
    fill_normal(layer.weight.value, engine, 0.0, 0.02);
    layer.normalized = normalized;
    if (normalized) {
      layer.gamma = Parameter<T>(name + ".gamma", Tensor<T>(Shape{out}, T{1}));
      layer.beta = Parameter<T>(name + ".beta", Tensor<T>(Shape{out}));
    } else {
      layer.bias = Parameter<T>(name + ".bias", Tensor<T>(Shape{out}));
    }
    return layer;
  };

  for (std::size_t i = 0; i < d; ++i) {
    const std::size_t in = i == 0 ? spec_.input_channels : spec_.encoder_channels[i - 1];
    const std::size_t out = spec_.encoder_channels[i];
    // The bottleneck is left unnormalized: at full depth it is 1x1 and
    // per-sample statistics would erase it.
    encoder_.push_back(make_layer(prefix + ".enc" + std::to_string(i + 1), Shape{out, in, k, k}, out,
                                  norm && i + 1 < d));
  }
  for (std::size_t i = 0; i < d; ++i) {
    const std::size_t in = spec_.decoder_channels[i];
    const bool last = i + 1 == d;
    const std::size_t out = last ? spec_.output_channels : spec_.encoder_channels[d - 2 - i];
    decoder_.push_back(make_layer(prefix + ".dec" + std::to_string(i + 1), Shape{in, out, k, k}, out, norm && !last));
  }
}

template <typename T>
void UBlock<T>::check_input(const Tensor<T>& x) const {
  if (x.rank() != 3 || x.channels() != spec_.input_channels) {
    throw ShapeError("U-block expects a " + std::to_string(spec_.input_channels) + "-channel image, got " +
                     shape_string(x.shape()));
  }
  const std::size_t div = spec_.required_divisor();
  if (x.height() % div != 0 || x.width() % div != 0) {
    throw ShapeError("U-block of depth " + std::to_string(spec_.depth()) + " requires spatial size divisible by " +
                     std::to_string(div) + ", got " + std::to_string(x.height()) + "x" + std::to_string(x.width()));
  }
}

template <typename T>
std::vector<std::size_t> UBlock<T>::encoder_extents(std::size_t input_size) const {
  std::vector<std::size_t> out;
  std::size_t s = input_size;
  for (std::size_t i = 0; i < spec_.depth(); ++i) {
    s = nn::conv_out_size(s, {spec_.kernel, 2, 1});
    out.push_back(s);
  }
  return out;
}

template <typename T>
Tensor<T> UBlock<T>::forward(const Tensor<T>& x, UBlockTrace<T>* trace, bool zero_skips) const {
  check_input(x);
  const std::size_t d = spec_.depth();
  const nn::ConvGeometry geom{spec_.kernel, 2, 1};
  const T slope = static_cast<T>(spec_.leaky_slope);
  const T eps = static_cast<T>(spec_.norm_eps);

  std::vector<Tensor<T>> enc_out(d);
  std::vector<nn::NormCache<T>> enc_norm(d);
  std::vector<Tensor<T>> enc_in(trace ? d : 0);
  const Tensor<T>* h = &x;
  for (std::size_t i = 0; i < d; ++i) {
    const Layer& L = encoder_[i];
    Tensor<T> z = nn::conv2d(*h, L.weight.value, L.normalized ? nullptr : &L.bias.value, geom);
    if (L.normalized) z = nn::instance_norm(z, &L.gamma.value, &L.beta.value, eps, enc_norm[i]);
    if (trace) enc_in[i] = *h;
    enc_out[i] = nn::leaky_relu(z, slope);
    h = &enc_out[i];
  }

  std::vector<Tensor<T>> dec_in(trace ? d : 0);
  std::vector<nn::NormCache<T>> dec_norm(d);
  std::vector<Tensor<T>> dec_out(d);
  for (std::size_t i = 0; i < d; ++i) {
    const Layer& L = decoder_[i];
    Tensor<T> in;
    if (i == 0) {
      in = enc_out[d - 1];
    } else {
      const Tensor<T>& skip = enc_out[d - 1 - i];
      in = zero_skips ? nn::concat_channels(dec_out[i - 1], Tensor<T>(skip.shape()))
                      : nn::concat_channels(dec_out[i - 1], skip);
    }
    Tensor<T> z = nn::conv_transpose2d(in, L.weight.value, L.normalized ? nullptr : &L.bias.value, geom);
    if (L.normalized) z = nn::instance_norm(z, &L.gamma.value, &L.beta.value, eps, dec_norm[i]);
    dec_out[i] = i + 1 == d ? nn::tanh(z) : nn::relu(z);
    if (trace) dec_in[i] = std::move(in);
  }

  Tensor<T> y = dec_out[d - 1];
  if (trace) {
    trace->enc_inputs = std::move(enc_in);
    trace->enc_norm = std::move(enc_norm);
    trace->enc_outputs = std::move(enc_out);
    trace->dec_inputs = std::move(dec_in);
    trace->dec_norm = std::move(dec_norm);
    trace->dec_outputs = std::move(dec_out);
  }
  return y;
}

template <typename T>
Tensor<T> UBlock<T>::backward(const UBlockTrace<T>& trace, const Tensor<T>& grad_out) {
  const std::size_t d = spec_.depth();
  const nn::ConvGeometry geom{spec_.kernel, 2, 1};
  const T slope = static_cast<T>(spec_.leaky_slope);

  std::vector<Tensor<T>> enc_grad(d);
  for (std::size_t i = 0; i < d; ++i) enc_grad[i] = Tensor<T>(trace.enc_outputs[i].shape());

  Tensor<T> g = grad_out;
  for (std::size_t r = 0; r < d; ++r) {
    const std::size_t i = d - 1 - r;
    Layer& L = decoder_[i];
    Tensor<T> gz = i + 1 == d ? nn::tanh_backward(trace.dec_outputs[i], g) : nn::relu_backward(trace.dec_outputs[i], g);
    if (L.normalized) {
      gz = nn::instance_norm_backward(trace.dec_norm[i], &L.gamma.value, gz, &L.gamma.grad, &L.beta.grad);
    }
    Tensor<T> gin = nn::conv_transpose2d_backward(trace.dec_inputs[i], L.weight.value, gz, geom, &L.weight.grad,
                                                  L.normalized ? nullptr : &L.bias.grad, true);
    if (i == 0) {
      accumulate(enc_grad[d - 1], gin);
    } else {
      auto [g_prev, g_skip] = nn::split_channels(gin, trace.dec_outputs[i - 1].channels());
      accumulate(enc_grad[d - 1 - i], g_skip);
      g = std::move(g_prev);
    }
  }

  for (std::size_t r = 0; r < d; ++r) {
    const std::size_t i = d - 1 - r;
    Layer& L = encoder_[i];
    Tensor<T> gz = nn::leaky_relu_backward(trace.enc_outputs[i], enc_grad[i], slope);
    if (L.normalized) {
      gz = nn::instance_norm_backward(trace.enc_norm[i], &L.gamma.value, gz, &L.gamma.grad, &L.beta.grad);
    }
    Tensor<T> gin = nn::conv2d_backward(trace.enc_inputs[i], L.weight.value, gz, geom, &L.weight.grad,
                                        L.normalized ? nullptr : &L.bias.grad, true);
    if (i == 0) return gin;
    accumulate(enc_grad[i - 1], gin);
  }
  return {};
}

template <typename T>
std::vector<Parameter<T>*> UBlock<T>::parameters() {
  std::vector<Parameter<T>*> out;
  for (auto* layers : {&encoder_, &decoder_}) {
    for (Layer& L : *layers) {
      out.push_back(&L.weight);
      if (L.normalized) {
        out.push_back(&L.gamma);
        out.push_back(&L.beta);
      } else {
        out.push_back(&L.bias);
      }
    }
  }
  return out;
}

template <typename T>
std::vector<const Parameter<T>*> UBlock<T>::parameters() const {
  std::vector<const Parameter<T>*> out;
  for (Parameter<T>* p : const_cast<UBlock*>(this)->parameters()) out.push_back(p);
  return out;
}

template <typename T>
std::size_t UBlock<T>::parameter_count() const {
  std::size_t n = 0;
  for (const auto* p : parameters()) n += p->value.size();
  return n;
}

template <typename T>
CasNet<T>::CasNet(CasNetConfig cfg, std::uint64_t seed) : cfg_(std::move(cfg)) {
  cfg_.validate();
  for (std::size_t b = 0; b < cfg_.n_blocks; ++b) {
    const std::uint64_t block_seed = b == 0 ? seed : derive_seed(seed, b);
    blocks_.emplace_back(cfg_.ublock, block_seed, "ublock" + std::to_string(b));
  }
}

template <typename T>
Tensor<T> CasNet<T>::forward(const Tensor<T>& y, std::vector<UBlockTrace<T>>* traces) const {
  if (traces) traces->assign(blocks_.size(), {});
  Tensor<T> h = y;
  for (std::size_t b = 0; b < blocks_.size(); ++b) {
    h = blocks_[b].forward(h, traces ? &(*traces)[b] : nullptr);
  }
  return h;
}

template <typename T>
Tensor<T> CasNet<T>::backward(const std::vector<UBlockTrace<T>>& traces, const Tensor<T>& grad_out) {
  Tensor<T> g = grad_out;
  for (std::size_t r = 0; r < blocks_.size(); ++r) {
    const std::size_t b = blocks_.size() - 1 - r;
    g = blocks_[b].backward(traces.at(b), g);
  }
  return g;
}

template <typename T>
std::vector<Parameter<T>*> CasNet<T>::parameters() {
  std::vector<Parameter<T>*> out;
  for (auto& b : blocks_) {
    auto p = b.parameters();
    out.insert(out.end(), p.begin(), p.end());
  }
  return out;
}

template <typename T>
std::vector<const Parameter<T>*> CasNet<T>::parameters() const {
  std::vector<const Parameter<T>*> out;
  for (const auto& b : blocks_) {
    auto p = b.parameters();
    out.insert(out.end(), p.begin(), p.end());
  }
  return out;
}

template <typename T>
std::size_t CasNet<T>::parameter_count() const {
  std::size_t n = 0;
  for (const auto& b : blocks_) n += b.parameter_count();
  return n;
}

template class UBlock<float>;
template class UBlock<double>;
template class CasNet<float>;
template class CasNet<double>;

}  // namespace medgan
