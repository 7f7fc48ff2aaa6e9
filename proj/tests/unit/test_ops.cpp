#include <cmath>
#include <functional>

#include "doctest.h"
#include "medgan/ops.hpp"
#include "medgan/rng.hpp"

using namespace medgan;
namespace nn = medgan::nn;

namespace {

Tensor<double> rnd(Shape s, Engine& rng, double lo = -1, double hi = 1) {
  Tensor<double> t(std::move(s));
  fill_uniform(t, rng, lo, hi);
  return t;
}

double dot(const Tensor<double>& a, const Tensor<double>& b) {
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

// Central differences of f at x, compared against `analytic`.
double fd_error(Tensor<double> x, const std::function<double(const Tensor<double>&)>& f, const Tensor<double>& analytic) {
  const double h = 1e-6;
  double diff = 0, norm = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double keep = x[i];
    x[i] = keep + h;
    const double fp = f(x);
    x[i] = keep - h;
    const double fm = f(x);
    x[i] = keep;
    const double num = (fp - fm) / (2 * h);
    diff += (num - analytic[i]) * (num - analytic[i]);
    norm += num * num;
  }
  return std::sqrt(diff) / std::max(std::sqrt(norm), 1e-12);
}

Tensor<double> naive_conv(const Tensor<double>& x, const Tensor<double>& w, const Tensor<double>& b, nn::ConvGeometry g) {
  const std::size_t co = w.dim(0), ci = w.dim(1), k = w.dim(2);
  const std::size_t ho = (x.height() + 2 * g.pad - k) / g.stride + 1, wo = (x.width() + 2 * g.pad - k) / g.stride + 1;
  Tensor<double> y(Shape{co, ho, wo});
  for (std::size_t o = 0; o < co; ++o) {
    for (std::size_t i = 0; i < ho; ++i) {
      for (std::size_t j = 0; j < wo; ++j) {
        double s = b[o];
        for (std::size_t c = 0; c < ci; ++c) {
          for (std::size_t p = 0; p < k; ++p) {
            for (std::size_t q = 0; q < k; ++q) {
              const long r = static_cast<long>(i * g.stride + p) - static_cast<long>(g.pad);
              const long cc = static_cast<long>(j * g.stride + q) - static_cast<long>(g.pad);
              if (r < 0 || cc < 0 || r >= static_cast<long>(x.height()) || cc >= static_cast<long>(x.width())) continue;
              s += w[((o * ci + c) * k + p) * k + q] * x(c, static_cast<std::size_t>(r), static_cast<std::size_t>(cc));
            }
          }
        }
        y(o, i, j) = s;
      }
    }
  }
  return y;
}

}  // namespace

TEST_CASE("conv output extents") {
  CHECK(nn::conv_out_size(64, {4, 2, 1}) == 32);
  CHECK(nn::conv_out_size(16, {4, 1, 1}) == 15);
  CHECK(nn::deconv_out_size(32, {4, 2, 1}) == 64);
  CHECK_THROWS_AS(nn::conv_out_size(1, {4, 2, 0}), ShapeError);
}

TEST_CASE("conv2d matches a direct loop") {
  Engine rng(1);
  for (nn::ConvGeometry g : {nn::ConvGeometry{4, 2, 1}, nn::ConvGeometry{4, 1, 1}, nn::ConvGeometry{3, 1, 1}}) {
    const auto x = rnd({3, 9, 8}, rng);
    const auto w = rnd({5, 3, g.kernel, g.kernel}, rng);
    const auto b = rnd({5}, rng);
    const auto y = nn::conv2d(x, w, &b, g);
    const auto ref = naive_conv(x, w, b, g);
    REQUIRE(y.shape() == ref.shape());
    for (std::size_t i = 0; i < y.size(); ++i) CHECK(y[i] == doctest::Approx(ref[i]).epsilon(1e-12));
  }
}

TEST_CASE("conv2d backward against finite differences") {
  Engine rng(2);
  const nn::ConvGeometry g{4, 2, 1};
  const auto x = rnd({2, 8, 8}, rng), w = rnd({3, 2, 4, 4}, rng), b = rnd({3}, rng);
  const auto r = rnd({3, 4, 4}, rng);
  Tensor<double> gw(w.shape()), gb(b.shape());
  const auto gx = nn::conv2d_backward(x, w, r, g, &gw, &gb, true);
  CHECK(fd_error(x, [&](const Tensor<double>& v) { return dot(nn::conv2d(v, w, &b, g), r); }, gx) < 1e-7);
  CHECK(fd_error(w, [&](const Tensor<double>& v) { return dot(nn::conv2d(x, v, &b, g), r); }, gw) < 1e-7);
  CHECK(fd_error(b, [&](const Tensor<double>& v) { return dot(nn::conv2d(x, w, &v, g), r); }, gb) < 1e-7);
}

TEST_CASE("transposed conv is the adjoint of conv and differentiates correctly") {
  Engine rng(3);
  const nn::ConvGeometry g{4, 2, 1};
  const auto x = rnd({3, 4, 4}, rng), w = rnd({3, 2, 4, 4}, rng), b = rnd({2}, rng);
  const auto y = nn::conv_transpose2d(x, w, static_cast<const Tensor<double>*>(nullptr), g);
  REQUIRE(y.shape() == Shape{2, 8, 8});
  // <deconv(x), z> == <x, conv(z)> with the same weights
  const auto z = rnd({2, 8, 8}, rng);
  Tensor<double> wt(Shape{3, 2, 4, 4});
  wt.storage() = w.storage();
  CHECK(dot(y, z) == doctest::Approx(dot(x, nn::conv2d(z, wt, static_cast<const Tensor<double>*>(nullptr), g))));

  const auto r = rnd({2, 8, 8}, rng);
  Tensor<double> gw(w.shape()), gb(b.shape());
  const auto gx = nn::conv_transpose2d_backward(x, w, r, g, &gw, &gb, true);
  CHECK(fd_error(x, [&](const Tensor<double>& v) { return dot(nn::conv_transpose2d(v, w, &b, g), r); }, gx) < 1e-7);
  CHECK(fd_error(w, [&](const Tensor<double>& v) { return dot(nn::conv_transpose2d(x, v, &b, g), r); }, gw) < 1e-7);
  CHECK(fd_error(b, [&](const Tensor<double>& v) { return dot(nn::conv_transpose2d(x, w, &v, g), r); }, gb) < 1e-7);
}

TEST_CASE("instance norm statistics and gradient") {
  Engine rng(4);
  const auto x = rnd({3, 5, 6}, rng, -3, 5), gamma = rnd({3}, rng, 0.5, 1.5), beta = rnd({3}, rng);
  nn::NormCache<double> cache;
  const auto y = nn::instance_norm(x, static_cast<const Tensor<double>*>(nullptr),
                                   static_cast<const Tensor<double>*>(nullptr), 1e-5, cache);
  for (std::size_t c = 0; c < 3; ++c) {
    double m = 0, v = 0;
    for (std::size_t i = 0; i < 30; ++i) m += y[c * 30 + i] / 30;
    for (std::size_t i = 0; i < 30; ++i) v += (y[c * 30 + i] - m) * (y[c * 30 + i] - m) / 30;
    CHECK(m == doctest::Approx(0).epsilon(1e-9).scale(1));
    CHECK(v == doctest::Approx(1).epsilon(1e-3));
  }
  const auto r = rnd({3, 5, 6}, rng);
  auto f = [&](const Tensor<double>& v) {
    nn::NormCache<double> c;
    return dot(nn::instance_norm(v, &gamma, &beta, 1e-5, c), r);
  };
  nn::instance_norm(x, &gamma, &beta, 1e-5, cache);
  Tensor<double> gg(gamma.shape()), gbeta(beta.shape());
  const auto gx = nn::instance_norm_backward(cache, &gamma, r, &gg, &gbeta);
  CHECK(fd_error(x, f, gx) < 1e-6);
}

TEST_CASE("pointwise activations and pooling backward") {
  Engine rng(5);
  const auto x = rnd({2, 6, 6}, rng);
  const auto r = rnd({2, 6, 6}, rng);
  auto check = [&](auto fwd, auto bwd) {
    const auto y = fwd(x);
    CHECK(fd_error(x, [&](const Tensor<double>& v) { return dot(fwd(v), r); }, bwd(y, r)) < 1e-6);
  };
  check([](const Tensor<double>& v) { return nn::leaky_relu(v, 0.2); },
        [](const Tensor<double>& y, const Tensor<double>& g) { return nn::leaky_relu_backward(y, g, 0.2); });
  check([](const Tensor<double>& v) { return nn::relu(v); },
        [](const Tensor<double>& y, const Tensor<double>& g) { return nn::relu_backward(y, g); });
  check([](const Tensor<double>& v) { return nn::tanh(v); },
        [](const Tensor<double>& y, const Tensor<double>& g) { return nn::tanh_backward(y, g); });
  check([](const Tensor<double>& v) { return nn::sigmoid(v); },
        [](const Tensor<double>& y, const Tensor<double>& g) { return nn::sigmoid_backward(y, g); });

  std::vector<std::size_t> arg;
  const auto p = nn::max_pool2(x, arg);
  REQUIRE(p.shape() == Shape{2, 3, 3});
  const auto rp = rnd({2, 3, 3}, rng);
  const auto gx = nn::max_pool2_backward(arg, rp, x.shape());
  CHECK(fd_error(x, [&](const Tensor<double>& v) {
          std::vector<std::size_t> a;
          return dot(nn::max_pool2(v, a), rp);
        }, gx) < 1e-6);
}

TEST_CASE("channel concat and split are inverse") {
  Engine rng(6);
  const auto a = rnd({2, 3, 3}, rng), b = rnd({1, 3, 3}, rng);
  const auto [x, y] = nn::split_channels(nn::concat_channels(a, b), 2);
  CHECK(x == a);
  CHECK(y == b);
}
