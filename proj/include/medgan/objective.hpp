#pragma once

#include <vector>

#include "medgan/discriminator.hpp"
#include "medgan/extractor.hpp"
#include "medgan/losses.hpp"

namespace medgan {

// Quantities of one (target, source) pair that do not depend on the generator
// output: discriminator features of the real pair and extractor taps of the target.
template <typename T>
struct PairReferences {
  std::vector<Tensor<T>> real_features;
  std::vector<Tensor<T>> real_taps;  // empty when the weights do not use the extractor
};

template <typename T>
PairReferences<T> compute_references(const PatchDiscriminator<T>& disc, const Extractor<T>* extractor,
                                     const Tensor<T>& target, const Tensor<T>& source, const LossWeights& weights);

template <typename T>
struct GeneratorObjective {
  LossBreakdown breakdown;
  Tensor<T> grad_fake;  // d total / d fake, empty unless requested
};

// Full composite objective for one generated image, differentiated w.r.t. the
// image through the discriminator and extractor. Network parameters are not touched.
template <typename T>
GeneratorObjective<T> generator_objective(const Tensor<T>& fake, const Tensor<T>& target, const Tensor<T>& source,
                                          PatchDiscriminator<T>& disc, const Extractor<T>* extractor,
                                          const LossWeights& weights, const PairReferences<T>& refs, bool need_grad);

// Evaluates mean(log D(x,y)) + mean(log(1 - D(xhat,y))). When accumulate is set,
// gradients of its negation (the minimized discriminator loss) are added to
// the discriminator parameters.
template <typename T>
T discriminator_objective(PatchDiscriminator<T>& disc, const Tensor<T>& target, const Tensor<T>& fake,
                          const Tensor<T>& source, bool accumulate);

}  // namespace medgan
