#include "medgan/losses.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>

namespace medgan {
namespace {

template <typename T>
using RowMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename T>
T clamp_prob(T p) {
  const T eps = static_cast<T>(kProbEps);
  return std::clamp(p, eps, T{1} - eps);
}

template <typename T>
T sign(T v) {
  return static_cast<T>((v > 0) - (v < 0));
}

void check_non_negative(const std::vector<double>& v, const char* name) {
  for (double x : v) {
    if (!(x >= 0.0)) throw ConfigError(std::string(name) + " entries must be >= 0");
  }
}

template <typename T>
void check_aligned(const std::vector<Tensor<T>>& a, const std::vector<Tensor<T>>& b, const std::vector<double>& lambda,
                   const char* what) {
  if (a.size() != b.size() || a.size() != lambda.size()) {
    throw ShapeError(std::string(what) + ": " + std::to_string(a.size()) + " fake / " + std::to_string(b.size()) +
                     " real entries with " + std::to_string(lambda.size()) + " weights");
  }
}

}  // namespace

void LossWeights::validate() const {
  for (double v : {lambda1, lambda2, lambda3, lambda_l1, lambda_l2, lambda_tv}) {
    if (!(v >= 0.0)) throw ConfigError("loss weights must be >= 0");
  }
  check_non_negative(lambda_p, "lambda_p");
  check_non_negative(lambda_s, "lambda_s");
  check_non_negative(lambda_c, "lambda_c");
}

bool LossWeights::uses_extractor() const {
  auto any = [](const std::vector<double>& v) { return std::any_of(v.begin(), v.end(), [](double x) { return x > 0; }); };
  return (lambda2 > 0 && any(lambda_s)) || (lambda3 > 0 && any(lambda_c));
}

std::vector<double> LossWeights::default_lambda_p(std::size_t hidden_layers) {
  return std::vector<double>(hidden_layers + 1, 1.0);
}

std::vector<double> LossWeights::default_lambda_s(std::size_t blocks) {
  std::vector<double> v(blocks, 0.0);
  if (blocks > 0) {
    v.front() = 1.0;
    v.back() = 1.0;
  }
  return v;
}

std::vector<double> LossWeights::default_lambda_c(std::size_t blocks) {
  std::vector<double> v(blocks, 1.0);
  if (blocks > 0) v.back() = 0.0;
  return v;
}

LossWeights LossWeights::with_masks(std::size_t hidden_layers, std::size_t blocks) const {
  LossWeights w = *this;
  w.lambda_p = default_lambda_p(hidden_layers);
  w.lambda_s = default_lambda_s(blocks);
  w.lambda_c = default_lambda_c(blocks);
  return w;
}

nlohmann::json to_json(const LossWeights& w) {
  return {{"lambda1", w.lambda1},     {"lambda2", w.lambda2},     {"lambda3", w.lambda3},
          {"lambda_p", w.lambda_p},   {"lambda_s", w.lambda_s},   {"lambda_c", w.lambda_c},
          {"lambda_l1", w.lambda_l1}, {"lambda_l2", w.lambda_l2}, {"lambda_tv", w.lambda_tv}};
}

LossWeights loss_weights_from_json(const nlohmann::json& j) {
  LossWeights w;
  w.lambda1 = j.value("lambda1", w.lambda1);
  w.lambda2 = j.value("lambda2", w.lambda2);
  w.lambda3 = j.value("lambda3", w.lambda3);
  w.lambda_p = j.value("lambda_p", w.lambda_p);
  w.lambda_s = j.value("lambda_s", w.lambda_s);
  w.lambda_c = j.value("lambda_c", w.lambda_c);
  w.lambda_l1 = j.value("lambda_l1", w.lambda_l1);
  w.lambda_l2 = j.value("lambda_l2", w.lambda_l2);
  w.lambda_tv = j.value("lambda_tv", w.lambda_tv);
  w.validate();
  return w;
}

const std::vector<std::string>& loss_preset_names() {
  static const std::vector<std::string> names{"cgan",         "pix2pix",   "perceptual", "style-content",
                                              "id-cgan-like", "fila-like", "medgan"};
  return names;
}

LossWeights loss_preset(const std::string& name) {
  LossWeights w;  // MedGAN defaults
  auto only = [&](double l1, double l2, double l3) {
    w.lambda1 = l1;
    w.lambda2 = l2;
    w.lambda3 = l3;
  };
  if (name == "medgan") return w;
  if (name == "cgan") {
    only(0, 0, 0);
  } else if (name == "pix2pix") {
    only(0, 0, 0);
    w.lambda_l1 = 100.0;
  } else if (name == "perceptual") {
    only(20.0, 0, 0);
  } else if (name == "style-content") {
    only(0, 1e-4, 1e-4);
  } else if (name == "id-cgan-like") {
    only(0, 0, 1e-4);
    w.lambda_l2 = 100.0;
  } else if (name == "fila-like") {
    only(0, 1e-4, 1e-4);
    w.lambda_l1 = 100.0;
    w.lambda_tv = 1.0;
  } else {
    std::string valid;
    for (const auto& n : loss_preset_names()) valid += (valid.empty() ? "" : ", ") + n;
    throw ConfigError("unknown loss preset '" + name + "' (valid presets: " + valid + ")");
  }
  return w;
}

nlohmann::json to_json(const LossBreakdown& b) {
  return {{"adversarial", b.adversarial}, {"perceptual", b.perceptual}, {"style", b.style}, {"content", b.content},
          {"l1", b.l1},                   {"l2", b.l2},                 {"tv", b.tv},       {"total", b.total}};
}

LossBreakdown medgan_generator_loss(double adversarial, double perceptual, double style, double content, double l1,
                                    double l2, double tv, const LossWeights& weights) {
  LossBreakdown b;
  b.adversarial = adversarial;
  b.perceptual = perceptual;
  b.style = style;
  b.content = content;
  b.l1 = l1;
  b.l2 = l2;
  b.tv = tv;
  b.weights = weights;
  b.total = adversarial + weights.lambda1 * perceptual + weights.lambda2 * style + weights.lambda3 * content +
            weights.lambda_l1 * l1 + weights.lambda_l2 * l2 + weights.lambda_tv * tv;
  return b;
}

template <typename T>
T adversarial_loss_discriminator(const Tensor<T>& prob_real, const Tensor<T>& prob_fake, Tensor<T>* grad_real,
                                 Tensor<T>* grad_fake) {
  const T nr = static_cast<T>(prob_real.size());
  const T nf = static_cast<T>(prob_fake.size());
  T sum_r = 0;
  T sum_f = 0;
  if (grad_real) *grad_real = Tensor<T>(prob_real.shape());
  if (grad_fake) *grad_fake = Tensor<T>(prob_fake.shape());
  for (std::size_t i = 0; i < prob_real.size(); ++i) {
    const T p = clamp_prob(prob_real[i]);
    sum_r += std::log(p);
    if (grad_real) (*grad_real)[i] = T{1} / (p * nr);
  }
  for (std::size_t i = 0; i < prob_fake.size(); ++i) {
    const T p = clamp_prob(prob_fake[i]);
    sum_f += std::log(T{1} - p);
    if (grad_fake) (*grad_fake)[i] = T{-1} / ((T{1} - p) * nf);
  }
  return sum_r / nr + sum_f / nf;
}

template <typename T>
T adversarial_loss_generator(const Tensor<T>& prob_fake, Tensor<T>* grad) {
  const T n = static_cast<T>(prob_fake.size());
  T sum = 0;
  if (grad) *grad = Tensor<T>(prob_fake.shape());
  for (std::size_t i = 0; i < prob_fake.size(); ++i) {
    const T p = clamp_prob(prob_fake[i]);
    sum -= std::log(p);
    if (grad) (*grad)[i] = T{-1} / (p * n);
  }
  return sum / n;
}

template <typename T>
T l1_loss(const Tensor<T>& xhat, const Tensor<T>& x, Tensor<T>* grad) {
  require_same_shape(xhat, x, "l1_loss");
  const T n = static_cast<T>(x.size());
  T sum = 0;
  if (grad) *grad = Tensor<T>(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const T d = xhat[i] - x[i];
    sum += std::abs(d);
    if (grad) (*grad)[i] = sign(d) / n;
  }
  return sum / n;
}

template <typename T>
T l2_loss(const Tensor<T>& xhat, const Tensor<T>& x, Tensor<T>* grad) {
  require_same_shape(xhat, x, "l2_loss");
  const T n = static_cast<T>(x.size());
  T sum = 0;
  if (grad) *grad = Tensor<T>(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const T d = xhat[i] - x[i];
    sum += d * d;
    if (grad) (*grad)[i] = T{2} * d / n;
  }
  return sum / n;
}

template <typename T>
T tv_loss(const Tensor<T>& image, Tensor<T>* grad) {
  const std::size_t c = image.channels();
  const std::size_t h = image.height();
  const std::size_t w = image.width();
  const std::size_t count = c * (h * (w - 1) + (h - 1) * w);
  if (grad) *grad = Tensor<T>(image.shape());
  if (count == 0) return T{0};
  const T inv = T{1} / static_cast<T>(count);
  T sum = 0;
  for (std::size_t ch = 0; ch < c; ++ch) {
    for (std::size_t i = 0; i < h; ++i) {
      for (std::size_t j = 0; j < w; ++j) {
        if (j + 1 < w) {
          const T d = image(ch, i, j + 1) - image(ch, i, j);
          sum += std::abs(d);
          if (grad) {
            (*grad)(ch, i, j + 1) += sign(d) * inv;
            (*grad)(ch, i, j) -= sign(d) * inv;
          }
        }
        if (i + 1 < h) {
          const T d = image(ch, i + 1, j) - image(ch, i, j);
          sum += std::abs(d);
          if (grad) {
            (*grad)(ch, i + 1, j) += sign(d) * inv;
            (*grad)(ch, i, j) -= sign(d) * inv;
          }
        }
      }
    }
  }
  return sum * inv;
}

template <typename T>
T perceptual_component(const Tensor<T>& fake, const Tensor<T>& real, Tensor<T>* grad) {
  require_same_shape(fake, real, "perceptual_component");
  return l1_loss(fake, real, grad);
}

template <typename T>
T perceptual_loss(const std::vector<Tensor<T>>& fake, const std::vector<Tensor<T>>& real,
                  const std::vector<double>& lambda_p, std::vector<Tensor<T>>* grads) {
  check_aligned(fake, real, lambda_p, "perceptual_loss");
  if (grads) grads->assign(fake.size(), {});
  T total = 0;
  for (std::size_t i = 0; i < fake.size(); ++i) {
    const T lam = static_cast<T>(lambda_p[i]);
    if (lam == T{0}) {
      require_same_shape(fake[i], real[i], "perceptual_component");
      if (grads) (*grads)[i] = Tensor<T>(fake[i].shape());
      continue;
    }
    Tensor<T> g;
    total += lam * perceptual_component(fake[i], real[i], grads ? &g : nullptr);
    if (grads) {
      for (auto& v : g.values()) v *= lam;
      (*grads)[i] = std::move(g);
    }
  }
  return total;
}

template <typename T>
Tensor<T> gram_matrix(const Tensor<T>& features) {
  const std::size_t d = features.channels();
  const std::size_t hw = features.height() * features.width();
  Eigen::Map<const RowMatrix<T>> f(features.data(), d, hw);
  Tensor<T> g(Shape{d, d});
  Eigen::Map<RowMatrix<T>> gm(g.data(), d, d);
  gm.noalias() = f * f.transpose();
  gm /= static_cast<T>(hw * d);
  return g;
}

template <typename T>
T style_loss(const std::vector<Tensor<T>>& fake, const std::vector<Tensor<T>>& real, const std::vector<double>& lambda_s,
             std::vector<Tensor<T>>* grads) {
  check_aligned(fake, real, lambda_s, "style_loss");
  if (grads) grads->assign(fake.size(), {});
  T total = 0;
  for (std::size_t j = 0; j < fake.size(); ++j) {
    require_same_shape(fake[j], real[j], "style_loss");
    const T lam = static_cast<T>(lambda_s[j]);
    if (lam == T{0}) {
      if (grads) (*grads)[j] = Tensor<T>(fake[j].shape());
      continue;
    }
    const std::size_t d = fake[j].channels();
    const std::size_t hw = fake[j].height() * fake[j].width();
    const Tensor<T> gf = gram_matrix(fake[j]);
    const Tensor<T> gr = gram_matrix(real[j]);
    Eigen::Map<const RowMatrix<T>> mf(gf.data(), d, d);
    Eigen::Map<const RowMatrix<T>> mr(gr.data(), d, d);
    const RowMatrix<T> diff = mf - mr;
    const T dd = static_cast<T>(d);
    total += lam / (T{4} * dd * dd) * diff.squaredNorm();
    if (grads) {
      Tensor<T> g(fake[j].shape());
      Eigen::Map<const RowMatrix<T>> f(fake[j].data(), d, hw);
      Eigen::Map<RowMatrix<T>> gm(g.data(), d, hw);
      gm.noalias() = (lam / (dd * dd * static_cast<T>(hw * d))) * (diff * f);
      (*grads)[j] = std::move(g);
    }
  }
  return total;
}

template <typename T>
T content_loss(const std::vector<Tensor<T>>& fake, const std::vector<Tensor<T>>& real,
               const std::vector<double>& lambda_c, std::vector<Tensor<T>>* grads) {
  check_aligned(fake, real, lambda_c, "content_loss");
  if (grads) grads->assign(fake.size(), {});
  T total = 0;
  for (std::size_t j = 0; j < fake.size(); ++j) {
    require_same_shape(fake[j], real[j], "content_loss");
    const T lam = static_cast<T>(lambda_c[j]);
    if (grads) (*grads)[j] = Tensor<T>(fake[j].shape());
    if (lam == T{0}) continue;
    const T n = static_cast<T>(fake[j].size());
    T sum = 0;
    for (std::size_t i = 0; i < fake[j].size(); ++i) {
      const T d = fake[j][i] - real[j][i];
      sum += d * d;
      if (grads) (*grads)[j][i] = T{2} * lam * d / n;
    }
    total += lam * sum / n;
  }
  return total;
}

#define MEDGAN_INSTANTIATE_LOSSES(T)                                                                          \
  template T adversarial_loss_discriminator(const Tensor<T>&, const Tensor<T>&, Tensor<T>*, Tensor<T>*);      \
  template T adversarial_loss_generator(const Tensor<T>&, Tensor<T>*);                                        \
  template T l1_loss(const Tensor<T>&, const Tensor<T>&, Tensor<T>*);                                         \
  template T l2_loss(const Tensor<T>&, const Tensor<T>&, Tensor<T>*);                                         \
  template T tv_loss(const Tensor<T>&, Tensor<T>*);                                                           \
  template T perceptual_component(const Tensor<T>&, const Tensor<T>&, Tensor<T>*);                            \
  template T perceptual_loss(const std::vector<Tensor<T>>&, const std::vector<Tensor<T>>&,                    \
                             const std::vector<double>&, std::vector<Tensor<T>>*);                            \
  template Tensor<T> gram_matrix(const Tensor<T>&);                                                           \
  template T style_loss(const std::vector<Tensor<T>>&, const std::vector<Tensor<T>>&, const std::vector<double>&, \
                        std::vector<Tensor<T>>*);                                                             \
  template T content_loss(const std::vector<Tensor<T>>&, const std::vector<Tensor<T>>&,                       \
                          const std::vector<double>&, std::vector<Tensor<T>>*);

MEDGAN_INSTANTIATE_LOSSES(float)
MEDGAN_INSTANTIATE_LOSSES(double)

#undef MEDGAN_INSTANTIATE_LOSSES

}  // namespace medgan
