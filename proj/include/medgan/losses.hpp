#pragma once

#include <string>
#include <vector>

#include "json.hpp"
#include "medgan/tensor.hpp"

namespace medgan {

// Probabilities are clamped to [eps, 1 - eps] inside logarithms.
inline constexpr double kProbEps = 1e-7;

// Every weighting coefficient of the composite generator objective.
//
// lambda_p is indexed by discriminator feature layer i = 0..L (0 is the raw
// input pair); lambda_s and lambda_c by extractor block j = 1..B. The per-layer
// lists act as masks, magnitudes live in lambda1..lambda3.
struct LossWeights {
  double lambda1 = 20.0;   // perceptual
  double lambda2 = 1e-4;   // style
  double lambda3 = 1e-4;   // content
  std::vector<double> lambda_p{1.0, 1.0, 1.0};
  std::vector<double> lambda_s{1.0, 0.0, 0.0, 0.0, 1.0};
  std::vector<double> lambda_c{1.0, 1.0, 1.0, 1.0, 0.0};
  double lambda_l1 = 0.0;
  double lambda_l2 = 0.0;
  double lambda_tv = 0.0;

  // Throws ConfigError for negative entries.
  void validate() const;
  bool uses_extractor() const;
  bool uses_perceptual() const { return lambda1 > 0.0; }

  // Default masks for L hidden discriminator layers and B extractor blocks:
  // all perceptual layers, style on the first and last block, content on all
  // but the deepest block.
  static std::vector<double> default_lambda_p(std::size_t hidden_layers);
  static std::vector<double> default_lambda_s(std::size_t blocks);
  static std::vector<double> default_lambda_c(std::size_t blocks);
  // Copy with masks regenerated for a different layer/block count, keeping scalars.
  LossWeights with_masks(std::size_t hidden_layers, std::size_t blocks) const;
};

nlohmann::json to_json(const LossWeights& w);
LossWeights loss_weights_from_json(const nlohmann::json& j);

// Names accepted by loss_preset().
const std::vector<std::string>& loss_preset_names();
// Throws ConfigError listing the valid names when `name` is unknown.
LossWeights loss_preset(const std::string& name);

// Unweighted terms plus the weighted total.
struct LossBreakdown {
  double adversarial = 0.0;
  double perceptual = 0.0;
  double style = 0.0;
  double content = 0.0;
  double l1 = 0.0;
  double l2 = 0.0;
  double tv = 0.0;
  double total = 0.0;
  LossWeights weights{};
};

nlohmann::json to_json(const LossBreakdown& b);

// total = adversarial + lambda1*perceptual + lambda2*style + lambda3*content
//       + lambda_l1*l1 + lambda_l2*l2 + lambda_tv*tv
LossBreakdown medgan_generator_loss(double adversarial, double perceptual, double style, double content, double l1,
                                    double l2, double tv, const LossWeights& weights);

// All gradient outputs below are optional and are overwritten (not accumulated).

// Discriminator objective mean(log D(x,y)) + mean(log(1 - D(G(y),y))), to be
// maximized; the gradients are those of this objective.
template <typename T>
T adversarial_loss_discriminator(const Tensor<T>& prob_real, const Tensor<T>& prob_fake, Tensor<T>* grad_real = nullptr,
                                 Tensor<T>* grad_fake = nullptr);

// Non-saturating generator term mean(-log D(G(y),y)).
template <typename T>
T adversarial_loss_generator(const Tensor<T>& prob_fake, Tensor<T>* grad = nullptr);

template <typename T>
T l1_loss(const Tensor<T>& xhat, const Tensor<T>& x, Tensor<T>* grad = nullptr);

template <typename T>
T l2_loss(const Tensor<T>& xhat, const Tensor<T>& x, Tensor<T>* grad = nullptr);

// Anisotropic total variation: sum of absolute forward differences along
// both axes divided by the number of differences.
template <typename T>
T tv_loss(const Tensor<T>& image, Tensor<T>* grad = nullptr);

// (1 / (h w d)) * ||a - b||_1 for one feature layer.
template <typename T>
T perceptual_component(const Tensor<T>& fake, const Tensor<T>& real, Tensor<T>* grad = nullptr);

// sum_i lambda_p[i] * P_i over aligned feature stacks.
template <typename T>
T perceptual_loss(const std::vector<Tensor<T>>& fake, const std::vector<Tensor<T>>& real,
                  const std::vector<double>& lambda_p, std::vector<Tensor<T>>* grads = nullptr);

// (d x d) Gram matrix normalized by 1 / (h w d).
template <typename T>
Tensor<T> gram_matrix(const Tensor<T>& features);

// sum_j lambda_s[j] / (4 d_j^2) * ||Gr_j(fake) - Gr_j(real)||_F^2
template <typename T>
T style_loss(const std::vector<Tensor<T>>& fake, const std::vector<Tensor<T>>& real, const std::vector<double>& lambda_s,
             std::vector<Tensor<T>>* grads = nullptr);

// sum_j lambda_c[j] / (h_j w_j d_j) * ||V_j(fake) - V_j(real)||_F^2
template <typename T>
T content_loss(const std::vector<Tensor<T>>& fake, const std::vector<Tensor<T>>& real,
               const std::vector<double>& lambda_c, std::vector<Tensor<T>>* grads = nullptr);

}  // namespace medgan
