#include "doctest.h"
#include "medgan/discriminator.hpp"
#include "medgan/extractor.hpp"
#include "medgan/generator.hpp"
#include "medgan/rng.hpp"
#include "suites.hpp"

using namespace medgan;

TEST_CASE("shapes, parameter counts and receptive field") {
  const auto r = suites::architecture();
  INFO(r.detail);
  CHECK(r.pass);
}

TEST_CASE("default U-block layout") {
  const UBlockSpec s;
  CHECK(s.depth() == 8);
  CHECK(s.required_divisor() == 256);
  CHECK_NOTHROW(s.validate());
  const auto pairs = s.skip_pairs();
  REQUIRE(pairs.size() == 7);
  CHECK(pairs.front() == std::pair<std::size_t, std::size_t>{1, 8});
  CHECK(pairs.back() == std::pair<std::size_t, std::size_t>{7, 2});
}

TEST_CASE("scaled spec keeps the mirror") {
  const auto s = UBlockSpec::scaled(5, 4);
  CHECK(s.encoder_channels == std::vector<std::size_t>{16, 32, 64, 128, 128});
  CHECK(s.decoder_channels == std::vector<std::size_t>{128, 256, 128, 64, 32});
  CHECK_NOTHROW(s.validate());
}

TEST_CASE("inconsistent decoder widths are rejected") {
  auto s = UBlockSpec::scaled(4, 4);
  s.decoder_channels[1] += 1;
  CHECK_THROWS_AS(s.validate(), ConfigError);
  CasNetConfig c;
  c.n_blocks = 0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
}

TEST_CASE("input size must divide by 2^depth") {
  const UBlock<float> b(UBlockSpec::scaled(5, 8), 0);
  CHECK_THROWS_AS(b.forward(Tensor<float>(Shape{1, 48, 48})), ShapeError);
  CHECK_THROWS_AS(b.forward(Tensor<float>(Shape{2, 64, 64})), ShapeError);
}

TEST_CASE("skip connections carry information") {
  Engine rng(3);
  const UBlock<float> b(UBlockSpec::scaled(4, 8), 1);
  Tensor<float> x(Shape{1, 32, 32});
  fill_uniform(x, rng, -1, 1);
  const auto with = b.forward(x), without = b.forward(x, nullptr, true);
  double diff = 0;
  for (std::size_t i = 0; i < with.size(); ++i) diff += std::abs(with[i] - without[i]);
  CHECK(diff > 1e-3);
}

TEST_CASE("generator output is bounded") {
  Engine rng(4);
  const CasNet<float> g(CasNetConfig{2, UBlockSpec::scaled(5, 8)}, 9);
  Tensor<float> y(Shape{1, 64, 64});
  fill_uniform(y, rng, -1, 1);
  const auto out = g.forward(y);
  CHECK(out.shape() == y.shape());
  for (float v : out.values()) CHECK((v >= -1.f && v <= 1.f));
}

TEST_CASE("same seed, same weights") {
  const CasNet<float> a(CasNetConfig{1, UBlockSpec::scaled(4, 8)}, 5), b(CasNetConfig{1, UBlockSpec::scaled(4, 8)}, 5);
  const auto pa = a.parameters(), pb = b.parameters();
  REQUIRE(pa.size() == pb.size());
  for (std::size_t i = 0; i < pa.size(); ++i) CHECK(pa[i]->value == pb[i]->value);
}

TEST_CASE("discriminator geometry") {
  const PatchDiscriminatorSpec d;
  CHECK(d.receptive_field() == 16);
  CHECK(d.output_size(256) == 126);
  PatchDiscriminator<float> disc(PatchDiscriminatorSpec::scaled(8), 1);
  const Tensor<float> x(Shape{1, 64, 64}, 0.1f), y(Shape{1, 64, 64}, -0.3f);
  const auto out = disc.forward(x, y);
  CHECK(out.prob.shape() == Shape{1, 30, 30});
  REQUIRE(out.features.size() == 3);
  CHECK(out.features.depth(0) == 2);
  CHECK(out.features.depth(1) == 8);
  CHECK(out.features.depth(2) == 16);
  for (float p : out.prob.values()) CHECK((p > 0.f && p < 1.f));
  CHECK(disc.conv_count() == 3);
}

TEST_CASE("extractor taps") {
  ExtractorSpec s;
  s.width_divisor = 8;
  const Extractor<float> ex(s);
  const auto taps = ex.forward(Tensor<float>(Shape{1, 64, 64}, 0.2f));
  REQUIRE(taps.size() == 5);
  CHECK(taps[0].shape() == Shape{8, 64, 64});
  CHECK(taps[4].shape() == Shape{64, 4, 4});
  CHECK_THROWS_AS(ex.forward(Tensor<float>(Shape{1, 16, 16})), ShapeError);
  CHECK(ex.weights_digest() == Extractor<float>(s).weights_digest());
}

TEST_CASE("missing external extractor weights fail loudly") {
  ExtractorSpec s;
  s.weights_source = WeightsSource::external_file;
  s.weights_path = "/nonexistent/vgg19.mgck";
  CHECK_THROWS(Extractor<float>{s});
}
