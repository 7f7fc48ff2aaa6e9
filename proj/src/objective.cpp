#include "medgan/objective.hpp"

namespace medgan {

template <typename T>
PairReferences<T> compute_references(const PatchDiscriminator<T>& disc, const Extractor<T>* extractor,
                                     const Tensor<T>& target, const Tensor<T>& source, const LossWeights& weights) {
  PairReferences<T> refs;
  if (weights.uses_perceptual()) refs.real_features = disc.forward(target, source).features.layers;
  if (extractor && weights.uses_extractor()) refs.real_taps = extractor->forward(target);
  return refs;
}

template <typename T>
GeneratorObjective<T> generator_objective(const Tensor<T>& fake, const Tensor<T>& target, const Tensor<T>& source,
                                          PatchDiscriminator<T>& disc, const Extractor<T>* extractor,
                                          const LossWeights& weights, const PairReferences<T>& refs, bool need_grad) {
  require_same_shape(fake, target, "generator_objective");
  GeneratorObjective<T> out;
  Tensor<T> grad(fake.shape());

  DiscriminatorTrace<T> dtrace;
  const DiscriminatorOutput<T> d_fake = disc.forward(fake, source, need_grad ? &dtrace : nullptr);

  Tensor<T> g_prob;
  const double adversarial = adversarial_loss_generator(d_fake.prob, need_grad ? &g_prob : nullptr);

  double perceptual = 0.0;
  std::vector<Tensor<T>> g_feats;
  if (weights.uses_perceptual()) {
    if (refs.real_features.size() != d_fake.features.size()) {
      throw ShapeError("generator_objective: real discriminator features are missing");
    }
    perceptual = perceptual_loss(d_fake.features.layers, refs.real_features, weights.lambda_p,
                                 need_grad ? &g_feats : nullptr);
  }

  if (need_grad) {
    const T lam1 = static_cast<T>(weights.lambda1);
    std::vector<const Tensor<T>*> feat_ptrs;
    if (!g_feats.empty()) {
      for (auto& g : g_feats) {
        for (auto& v : g.values()) v *= lam1;
        feat_ptrs.push_back(&g);
      }
    }
    const Tensor<T> g_in = disc.backward(d_fake, dtrace, &g_prob, feat_ptrs, false);
    accumulate(grad, disc.candidate_gradient(g_in));
  }

  double style = 0.0;
  double content = 0.0;
  if (extractor && weights.uses_extractor()) {
    if (refs.real_taps.size() != extractor->blocks()) {
      throw ShapeError("generator_objective: real extractor taps are missing");
    }
    ExtractorTrace<T> etrace;
    const auto taps = extractor->forward(fake, need_grad ? &etrace : nullptr);
    std::vector<Tensor<T>> g_style;
    std::vector<Tensor<T>> g_content;
    style = style_loss(taps, refs.real_taps, weights.lambda_s, need_grad ? &g_style : nullptr);
    content = content_loss(taps, refs.real_taps, weights.lambda_c, need_grad ? &g_content : nullptr);
    if (need_grad) {
      const T lam2 = static_cast<T>(weights.lambda2);
      const T lam3 = static_cast<T>(weights.lambda3);
      std::vector<Tensor<T>> g_taps(taps.size());
      std::vector<const Tensor<T>*> ptrs(taps.size(), nullptr);
      for (std::size_t j = 0; j < taps.size(); ++j) {
        const bool s = weights.lambda_s[j] > 0 && lam2 > 0;
        const bool c = weights.lambda_c[j] > 0 && lam3 > 0;
        if (!s && !c) continue;
        g_taps[j] = Tensor<T>(taps[j].shape());
        for (std::size_t i = 0; i < taps[j].size(); ++i) {
          g_taps[j][i] = (s ? lam2 * g_style[j][i] : T{0}) + (c ? lam3 * g_content[j][i] : T{0});
        }
        ptrs[j] = &g_taps[j];
      }
      accumulate(grad, extractor->backward(etrace, ptrs));
    }
  }

  auto add_pixel_term = [&](double lambda, auto&& fn) -> double {
    if (lambda <= 0.0 && !need_grad) return fn(nullptr);
    Tensor<T> g;
    const double v = fn(need_grad ? &g : nullptr);
    if (need_grad && lambda > 0.0) {
      const T lam = static_cast<T>(lambda);
      for (std::size_t i = 0; i < g.size(); ++i) grad[i] += lam * g[i];
    }
    return v;
  };
  const double l1 = add_pixel_term(weights.lambda_l1, [&](Tensor<T>* g) { return l1_loss(fake, target, g); });
  const double l2 = add_pixel_term(weights.lambda_l2, [&](Tensor<T>* g) { return l2_loss(fake, target, g); });
  const double tv = add_pixel_term(weights.lambda_tv, [&](Tensor<T>* g) { return tv_loss(fake, g); });

  out.breakdown = medgan_generator_loss(adversarial, perceptual, style, content, l1, l2, tv, weights);
  if (need_grad) out.grad_fake = std::move(grad);
  return out;
}

template <typename T>
T discriminator_objective(PatchDiscriminator<T>& disc, const Tensor<T>& target, const Tensor<T>& fake,
                          const Tensor<T>& source, bool accumulate) {
  DiscriminatorTrace<T> tr_real;
  DiscriminatorTrace<T> tr_fake;
  const auto real = disc.forward(target, source, accumulate ? &tr_real : nullptr);
  const auto gen = disc.forward(fake, source, accumulate ? &tr_fake : nullptr);
  Tensor<T> g_real;
  Tensor<T> g_fake;
  const T objective = adversarial_loss_discriminator(real.prob, gen.prob, accumulate ? &g_real : nullptr,
                                                     accumulate ? &g_fake : nullptr);
  if (accumulate) {
    for (auto& v : g_real.values()) v = -v;
    for (auto& v : g_fake.values()) v = -v;
    disc.backward(real, tr_real, &g_real, {}, true);
    disc.backward(gen, tr_fake, &g_fake, {}, true);
  }
  return objective;
}

#define MEDGAN_INSTANTIATE_OBJECTIVE(T)                                                                        \
  template PairReferences<T> compute_references(const PatchDiscriminator<T>&, const Extractor<T>*,            \
                                                const Tensor<T>&, const Tensor<T>&, const LossWeights&);      \
  template GeneratorObjective<T> generator_objective(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,   \
                                                     PatchDiscriminator<T>&, const Extractor<T>*,             \
                                                     const LossWeights&, const PairReferences<T>&, bool);     \
  template T discriminator_objective(PatchDiscriminator<T>&, const Tensor<T>&, const Tensor<T>&,             \
                                     const Tensor<T>&, bool);

MEDGAN_INSTANTIATE_OBJECTIVE(float)
MEDGAN_INSTANTIATE_OBJECTIVE(double)

#undef MEDGAN_INSTANTIATE_OBJECTIVE

}  // namespace medgan
