#include "medgan/discriminator.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "medgan/rng.hpp"
#include "medgan/spectral_norm.hpp"

namespace medgan {

void PatchDiscriminatorSpec::validate() const {
  if (layer_channels.empty()) throw ConfigError("patch discriminator needs at least one hidden layer");
  if (strides.size() != layer_channels.size()) {
    throw ConfigError("patch discriminator: " + std::to_string(layer_channels.size()) + " hidden layers but " +
                      std::to_string(strides.size()) + " strides");
  }
  for (std::size_t c : layer_channels) {
    if (c == 0) throw ConfigError("patch discriminator channel counts must be positive");
  }
  for (std::size_t s : strides) {
    if (s == 0) throw ConfigError("patch discriminator strides must be positive");
  }
  if (kernel == 0 || head_stride == 0) throw ConfigError("patch discriminator kernel and head stride must be positive");
  if (input_channels == 0) throw ConfigError("patch discriminator input channels must be positive");
  if (leaky_slope <= 0.0) throw ConfigError("leaky slope must be positive");
}

std::vector<std::size_t> PatchDiscriminatorSpec::receptive_field_schedule() const {
  std::vector<std::size_t> out;
  std::size_t rf = 1;
  std::size_t jump = 1;
  auto step = [&](std::size_t stride) {
    rf += (kernel - 1) * jump;
    jump *= stride;
    out.push_back(rf);
  };
  for (std::size_t s : strides) step(s);
  step(head_stride);
  return out;
}

std::size_t PatchDiscriminatorSpec::receptive_field() const { return receptive_field_schedule().back(); }

std::size_t PatchDiscriminatorSpec::output_size(std::size_t input_size) const {
  std::size_t s = input_size;
  for (std::size_t st : strides) s = nn::conv_out_size(s, {kernel, st, padding});
  return nn::conv_out_size(s, {kernel, head_stride, padding});
}

PatchDiscriminatorSpec PatchDiscriminatorSpec::scaled(std::size_t width_divisor) {
  if (width_divisor == 0) throw ConfigError("width divisor must be positive");
  PatchDiscriminatorSpec spec;
  for (auto& c : spec.layer_channels) c = std::max<std::size_t>(1, c / width_divisor);
  return spec;
}

template <typename T>
PatchDiscriminator<T>::PatchDiscriminator(PatchDiscriminatorSpec spec, std::uint64_t seed)
    : spec_(std::move(spec)), seed_(seed) {
  spec_.validate();
  Engine engine(seed);
  const bool norm = spec_.normalization == Normalization::instance;
  const std::size_t k = spec_.kernel;
  std::size_t in = spec_.input_channels;
  const std::size_t n_hidden = spec_.layer_channels.size();
  for (std::size_t i = 0; i <= n_hidden; ++i) {
    const bool head = i == n_hidden;
    const std::size_t out = head ? 1 : spec_.layer_channels[i];
    const std::string name = head ? "disc.head" : "disc.conv" + std::to_string(i + 1);
    Conv c;
    c.weight = Parameter<T>(name + ".weight", Tensor<T>(Shape{out, in, k, k}));
    fill_normal(c.weight.value, engine, 0.0, 0.02);
    c.normalized = norm && !head;
    if (c.normalized) {
      c.gamma = Parameter<T>(name + ".gamma", Tensor<T>(Shape{out}, T{1}));
      c.beta = Parameter<T>(name + ".beta", Tensor<T>(Shape{out}));
    } else {
      c.bias = Parameter<T>(name + ".bias", Tensor<T>(Shape{out}));
    }
    c.stride = head ? spec_.head_stride : spec_.strides[i];
    std::normal_distribution<double> dist(0.0, 1.0);
    c.u.resize(out);
    double norm2 = 0;
    for (auto& v : c.u) {
      v = static_cast<T>(dist(engine));
      norm2 += static_cast<double>(v) * static_cast<double>(v);
    }
    for (auto& v : c.u) v = static_cast<T>(v / (std::sqrt(norm2) + kSpectralEps));
    convs_.push_back(std::move(c));
    in = out;
  }
}

template <typename T>
DiscriminatorOutput<T> PatchDiscriminator<T>::forward(const Tensor<T>& candidate, const Tensor<T>& condition,
                                                      DiscriminatorTrace<T>* trace) const {
  if (candidate.shape() != condition.shape()) {
    throw ShapeError("discriminator: candidate " + shape_string(candidate.shape()) + " and condition " +
                     shape_string(condition.shape()) + " differ");
  }
  if (candidate.channels() + condition.channels() != spec_.input_channels) {
    throw ShapeError("discriminator expects " + std::to_string(spec_.input_channels) + " input channels in total");
  }
  const T slope = static_cast<T>(spec_.leaky_slope);
  const T eps = static_cast<T>(spec_.norm_eps);
  DiscriminatorOutput<T> out;
  out.features.layers.reserve(convs_.size());
  out.features.layers.push_back(nn::concat_channels(candidate, condition));
  std::vector<nn::NormCache<T>> caches(convs_.size());
  for (std::size_t i = 0; i < convs_.size(); ++i) {
    const Conv& c = convs_[i];
    const bool head = i + 1 == convs_.size();
    const nn::ConvGeometry g{spec_.kernel, c.stride, spec_.padding};
    Tensor<T> z = nn::conv2d(out.features.layers.back(), c.weight.value, c.normalized ? nullptr : &c.bias.value, g);
    if (c.normalized) z = nn::instance_norm(z, &c.gamma.value, &c.beta.value, eps, caches[i]);
    if (head) {
      out.prob = nn::sigmoid(z);
    } else {
      out.features.layers.push_back(nn::leaky_relu(z, slope));
    }
  }
  if (trace) trace->norm = std::move(caches);
  return out;
}

template <typename T>
Tensor<T> PatchDiscriminator<T>::backward(const DiscriminatorOutput<T>& out, const DiscriminatorTrace<T>& trace,
                                          const Tensor<T>* grad_prob,
                                          const std::vector<const Tensor<T>*>& grad_features,
                                          bool accumulate_params) {
  const T slope = static_cast<T>(spec_.leaky_slope);
  const auto& feats = out.features.layers;
  if (!grad_features.empty() && grad_features.size() != feats.size()) {
    throw ShapeError("discriminator backward: expected " + std::to_string(feats.size()) + " feature gradients");
  }
  auto feature_grad = [&](std::size_t i) -> const Tensor<T>* {
    return grad_features.empty() ? nullptr : grad_features[i];
  };

  // Gradient w.r.t. the activation that feeds conv i (i.e. feats[i]).
  Tensor<T> g(feats.back().shape());
  const std::size_t n = convs_.size();
  for (std::size_t r = 0; r < n; ++r) {
    const std::size_t i = n - 1 - r;
    Conv& c = convs_[i];
    const bool head = i + 1 == n;
    const nn::ConvGeometry geom{spec_.kernel, c.stride, spec_.padding};
    Tensor<T> gz;
    if (head) {
      if (!grad_prob) {
        gz = Tensor<T>(out.prob.shape());
      } else {
        gz = nn::sigmoid_backward(out.prob, *grad_prob);
      }
    } else {
      if (const Tensor<T>* gf = feature_grad(i + 1)) accumulate(g, *gf);
      gz = nn::leaky_relu_backward(feats[i + 1], g, slope);
      if (c.normalized) {
        gz = nn::instance_norm_backward(trace.norm[i], &c.gamma.value, gz, accumulate_params ? &c.gamma.grad : nullptr,
                                        accumulate_params ? &c.beta.grad : nullptr);
      }
    }
    Tensor<T>* gw = accumulate_params ? &c.weight.grad : nullptr;
    Tensor<T>* gb = (accumulate_params && !c.normalized) ? &c.bias.grad : nullptr;
    g = nn::conv2d_backward(feats[i], c.weight.value, gz, geom, gw, gb, true);
  }
  if (const Tensor<T>* gf = feature_grad(0)) accumulate(g, *gf);
  return g;
}

template <typename T>
Tensor<T> PatchDiscriminator<T>::candidate_gradient(const Tensor<T>& grad_input) const {
  const std::size_t cand = spec_.input_channels / 2;
  return nn::split_channels(grad_input, cand).first;
}

template <typename T>
std::vector<T> PatchDiscriminator<T>::apply_spectral_normalization(int iterations) {
  std::vector<T> sigmas;
  for (std::size_t i = 0; i < convs_.size(); ++i) {
    Conv& c = convs_[i];
    const std::size_t rows = c.weight.value.dim(0);
    const std::size_t cols = c.weight.value.size() / rows;
    sigmas.push_back(spectral_normalize<T>(c.weight.value.values(), rows, cols, c.u, iterations, derive_seed(seed_, i)));
  }
  return sigmas;
}

template <typename T>
std::vector<T> PatchDiscriminator<T>::spectral_norms(int iterations) const {
  std::vector<T> sigmas;
  for (std::size_t i = 0; i < convs_.size(); ++i) {
    const Conv& c = convs_[i];
    const std::size_t rows = c.weight.value.dim(0);
    const std::size_t cols = c.weight.value.size() / rows;
    sigmas.push_back(estimate_spectral_norm<T>(c.weight.value.values(), rows, cols, c.u, iterations).sigma);
  }
  return sigmas;
}

template <typename T>
std::vector<Parameter<T>*> PatchDiscriminator<T>::parameters() {
  std::vector<Parameter<T>*> out;
  for (Conv& c : convs_) {
    out.push_back(&c.weight);
    if (c.normalized) {
      out.push_back(&c.gamma);
      out.push_back(&c.beta);
    } else {
      out.push_back(&c.bias);
    }
  }
  return out;
}

template <typename T>
std::vector<const Parameter<T>*> PatchDiscriminator<T>::parameters() const {
  std::vector<const Parameter<T>*> out;
  for (Parameter<T>* p : const_cast<PatchDiscriminator*>(this)->parameters()) out.push_back(p);
  return out;
}

template <typename T>
std::size_t PatchDiscriminator<T>::parameter_count() const {
  std::size_t n = 0;
  for (const auto* p : parameters()) n += p->value.size();
  return n;
}

template class PatchDiscriminator<float>;
template class PatchDiscriminator<double>;

}  // namespace medgan
