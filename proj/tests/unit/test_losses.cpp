#include <cmath>

#include "doctest.h"
#include "medgan/losses.hpp"
#include "medgan/rng.hpp"
#include "suites.hpp"

using namespace medgan;

TEST_CASE("analytic gradients of every term match finite differences") {
  const auto r = suites::gradients();
  INFO(r.detail);
  CHECK(r.pass);
}

TEST_CASE("identical images zero every non-adversarial term") {
  const auto r = suites::identity_zero();
  INFO(r.detail);
  CHECK(r.pass);
}

TEST_CASE("losses, gram matrix and metrics agree with loop oracles") {
  const auto r = suites::oracles(50);
  INFO(r.detail);
  CHECK(r.pass);
}

TEST_CASE("default weights") {
  const LossWeights w;
  CHECK(w.lambda1 == 20.0);
  CHECK(w.lambda2 == 1e-4);
  CHECK(w.lambda3 == 1e-4);
  CHECK(w.lambda_s == std::vector<double>{1, 0, 0, 0, 1});
  CHECK(w.lambda_c == std::vector<double>{1, 1, 1, 1, 0});
  CHECK(w.uses_extractor());
}

TEST_CASE("presets") {
  const auto cgan = loss_preset("cgan");
  CHECK(cgan.lambda1 == 0);
  CHECK(cgan.lambda2 == 0);
  CHECK(cgan.lambda3 == 0);
  CHECK(cgan.lambda_l1 == 0);
  CHECK_FALSE(cgan.uses_extractor());
  CHECK(loss_preset("pix2pix").lambda_l1 == 100);
  CHECK(loss_preset("perceptual").lambda1 == 20);
  CHECK_FALSE(loss_preset("perceptual").uses_extractor());
  CHECK(loss_preset("style-content").lambda1 == 0);
  for (const auto& n : loss_preset_names()) CHECK_NOTHROW(loss_preset(n));
  try {
    loss_preset("bogus");
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("pix2pix") != std::string::npos);
  }
}

TEST_CASE("weights round-trip through JSON and reject negatives") {
  LossWeights w = loss_preset("fila-like");
  CHECK(to_json(loss_weights_from_json(to_json(w))) == to_json(w));
  w.lambda2 = -1;
  CHECK_THROWS_AS(w.validate(), ConfigError);
}

TEST_CASE("composite total") {
  LossWeights w;
  w.lambda_l1 = 2;
  const auto b = medgan_generator_loss(0.5, 1, 2, 3, 4, 5, 6, w);
  CHECK(b.total == doctest::Approx(0.5 + 20 * 1 + 1e-4 * 2 + 1e-4 * 3 + 2 * 4));
}

TEST_CASE("adversarial terms at known probabilities") {
  const Tensor<double> half(Shape{1, 2, 2}, 0.5);
  CHECK(adversarial_loss_generator(half) == doctest::Approx(std::log(2.0)));
  CHECK(adversarial_loss_discriminator(half, half) == doctest::Approx(-2 * std::log(2.0)));
  // clamped away from log(0)
  const Tensor<double> zero(Shape{1, 1, 1}, 0.0);
  CHECK(std::isfinite(adversarial_loss_generator(zero)));
}

TEST_CASE("gram matrix of a constant map") {
  const Tensor<double> f(Shape{2, 3, 3}, 2.0);
  const auto g = gram_matrix(f);
  REQUIRE(g.shape() == Shape{2, 2});
  for (std::size_t i = 0; i < 4; ++i) CHECK(g[i] == doctest::Approx(4.0 * 9 / 18));
}

TEST_CASE("tv of a ramp") {
  Tensor<double> x(Shape{1, 3, 3});
  for (std::size_t i = 0; i < 3; ++i) {
    for (std::size_t j = 0; j < 3; ++j) x(0, i, j) = static_cast<double>(j);
  }
  // 6 horizontal differences of 1, 6 vertical of 0
  CHECK(tv_loss(x) == doctest::Approx(0.5));
}

TEST_CASE("mismatched feature stacks are rejected") {
  std::vector<Tensor<double>> a{Tensor<double>(Shape{1, 2, 2})}, b{Tensor<double>(Shape{1, 3, 3})};
  CHECK_THROWS_AS(perceptual_loss(a, b, {1.0}), ShapeError);
  CHECK_THROWS(content_loss(a, a, {1.0, 1.0}));
}
