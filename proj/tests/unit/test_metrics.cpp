#include <cmath>
#include <fstream>

#include "doctest.h"
#include "medgan/metrics.hpp"
#include "medgan/rng.hpp"

using namespace medgan;
namespace fs = std::filesystem;

namespace {

Tensor<double> image(std::size_t n, std::uint64_t seed, double lo = 0, double hi = 255) {
  Engine rng(seed);
  Tensor<double> t(Shape{1, n, n});
  fill_uniform(t, rng, lo, hi);
  return t;
}

Tensor<double> smooth(std::size_t n) {
  Tensor<double> t(Shape{1, n, n});
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) t(0, i, j) = 128 + 60 * std::sin(0.3 * i) * std::cos(0.2 * j);
  }
  return t;
}

}  // namespace

TEST_CASE("mse and psnr") {
  const auto a = image(16, 1);
  auto b = a;
  CHECK(mse(a, b) == 0.0);
  CHECK(std::isinf(psnr(a, b)));
  for (auto& v : b.values()) v += 5;
  CHECK(mse(a, b) == doctest::Approx(25));
  CHECK(psnr(a, b) == doctest::Approx(10 * std::log10(255.0 * 255.0 / 25)));
  CHECK_THROWS_AS(mse(a, image(8, 1)), ShapeError);
}

TEST_CASE("ssim bounds") {
  const auto a = smooth(32);
  CHECK(ssim(a, a) == doctest::Approx(1.0));
  auto b = a;
  for (auto& v : b.values()) v = 255 - v;
  CHECK(ssim(a, b) < 0.0);
  CHECK(ssim(a, image(32, 3)) < 0.3);
  CHECK_THROWS_AS(ssim(image(8, 1), image(8, 2)), ShapeError);
}

TEST_CASE("uqi degenerate windows") {
  const Tensor<double> flat(Shape{1, 16, 16}, 100.0), zero(Shape{1, 16, 16}, 0.0);
  CHECK(uqi(flat, flat) == 1.0);
  const auto r = uqi_detail(zero, zero);
  CHECK(r.value == 1.0);
  CHECK(r.skipped == r.windows);
  CHECK(uqi(zero, flat) == 0.0);
  // flat but different means: luminance term only
  const Tensor<double> other(Shape{1, 16, 16}, 50.0);
  CHECK(uqi(flat, other) == doctest::Approx(2.0 * 100 * 50 / (100.0 * 100 + 50 * 50)));
  const auto a = smooth(24);
  CHECK(uqi(a, a) == doctest::Approx(1.0));
}

TEST_CASE("vif") {
  const auto a = smooth(64);
  CHECK(vif(a, a) == doctest::Approx(1.0).epsilon(1e-6));
  auto noisy = a;
  Engine rng(4);
  std::normal_distribution<double> nd(0, 25);
  for (auto& v : noisy.values()) v += nd(rng);
  const double v = vif(a, noisy);
  CHECK(v > 0.0);
  CHECK(v < 0.9);
  CHECK(vif(Tensor<double>(Shape{1, 32, 32}, 7.0), Tensor<double>(Shape{1, 32, 32}, 7.0)) == 1.0);
  CHECK_THROWS_AS(vif(image(16, 1), image(16, 2)), ShapeError);
}

TEST_CASE("perceptual distance") {
  const Extractor<float> ex(evaluation_extractor_spec());
  Tensor<float> a(Shape{1, 64, 64});
  Engine rng(5);
  fill_uniform(a, rng, -1, 1);
  CHECK(perceptual_distance(ex, a, a) == 0.0);
  Tensor<float> b(Shape{1, 64, 64});
  fill_uniform(b, rng, -1, 1);
  const double d = perceptual_distance(ex, a, b);
  CHECK(d > 0.0);
  CHECK(d <= 4.0);
}

TEST_CASE("report aggregate and files") {
  MetricReport rep;
  rep.rows = {{"s1", 0.5, 20, 10, 0.4, 0.6, 0.1}, {"s2", 0.7, std::numeric_limits<double>::infinity(), 0, 1, 1, 0}};
  rep.compute_aggregate();
  CHECK(rep.aggregate.sample_id == "mean");
  CHECK(rep.aggregate.ssim == doctest::Approx(0.6));
  CHECK(rep.aggregate.mse == doctest::Approx(5));
  const std::string csv = rep.to_csv();
  CHECK(csv.find("inf") != std::string::npos);
  CHECK(csv.rfind("mean,", 0) == std::string::npos);
  CHECK(csv.find("\nmean,") != std::string::npos);
  const fs::path stem = fs::temp_directory_path() / "medgan-test-report" / "r";
  rep.write(stem);
  CHECK(fs::exists(stem.string() + ".csv"));
  std::ifstream in(stem.string() + ".json");
  const auto j = nlohmann::json::parse(in);
  CHECK(j.at("rows").size() == 2);
  CHECK(MetricReport::columns().size() == 7);
}

TEST_CASE("evaluate_dataset scores a translation") {
  const auto data = split_by_group(generate_synthetic_pairs(2, 6, 64, 3), 1).second;
  const Extractor<float> ex(evaluation_extractor_spec());
  const auto perfect = evaluate_dataset(
      [&](const Tensor<float>& y) {
        for (const auto& s : data.samples) {
          if (s.source == y) return s.target;
        }
        return y;
      },
      data, ex);
  CHECK(perfect.rows.size() == data.size());
  CHECK(perfect.aggregate.ssim == doctest::Approx(1.0));
  CHECK(perfect.aggregate.mse == 0.0);
  CHECK(perfect.metadata.at("dataset_digest") == data.manifest_digest);
}
