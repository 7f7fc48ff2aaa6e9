#pragma once

// Naive loop implementations used as references for the optimized code.

#include <cmath>
#include <vector>

#include "medgan/tensor.hpp"

namespace oracle {

using medgan::Tensor;

inline double l1(const Tensor<double>& a, const Tensor<double>& b) {
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += std::fabs(a[i] - b[i]);
  return s / static_cast<double>(a.size());
}

inline double l2(const Tensor<double>& a, const Tensor<double>& b) {
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return s / static_cast<double>(a.size());
}

inline double tv(const Tensor<double>& x) {
  double s = 0;
  double n = 0;
  for (std::size_t c = 0; c < x.channels(); ++c) {
    for (std::size_t i = 0; i < x.height(); ++i) {
      for (std::size_t j = 0; j + 1 < x.width(); ++j) {
        s += std::fabs(x(c, i, j + 1) - x(c, i, j));
        n += 1;
      }
    }
    for (std::size_t i = 0; i + 1 < x.height(); ++i) {
      for (std::size_t j = 0; j < x.width(); ++j) {
        s += std::fabs(x(c, i + 1, j) - x(c, i, j));
        n += 1;
      }
    }
  }
  return s / n;
}

inline double adversarial_g(const Tensor<double>& p) {
  double s = 0;
  for (std::size_t i = 0; i < p.size(); ++i) s -= std::log(p[i]);
  return s / static_cast<double>(p.size());
}

inline double adversarial_d(const Tensor<double>& real, const Tensor<double>& fake) {
  double a = 0, b = 0;
  for (std::size_t i = 0; i < real.size(); ++i) a += std::log(real[i]);
  for (std::size_t i = 0; i < fake.size(); ++i) b += std::log(1.0 - fake[i]);
  return a / static_cast<double>(real.size()) + b / static_cast<double>(fake.size());
}

// G[a][b] = sum_k F[a][k] F[b][k] / (h w d)
inline std::vector<std::vector<double>> gram(const Tensor<double>& f) {
  const std::size_t d = f.channels(), h = f.height(), w = f.width();
  std::vector<std::vector<double>> g(d, std::vector<double>(d, 0.0));
  for (std::size_t a = 0; a < d; ++a) {
    for (std::size_t b = 0; b < d; ++b) {
      double s = 0;
      for (std::size_t i = 0; i < h; ++i) {
        for (std::size_t j = 0; j < w; ++j) s += f(a, i, j) * f(b, i, j);
      }
      g[a][b] = s / static_cast<double>(h * w * d);
    }
  }
  return g;
}

inline double perceptual(const std::vector<Tensor<double>>& f, const std::vector<Tensor<double>>& r,
                         const std::vector<double>& lam) {
  double s = 0;
  for (std::size_t i = 0; i < f.size(); ++i) s += lam[i] * l1(f[i], r[i]);
  return s;
}

inline double style(const std::vector<Tensor<double>>& f, const std::vector<Tensor<double>>& r,
                    const std::vector<double>& lam) {
  double s = 0;
  for (std::size_t j = 0; j < f.size(); ++j) {
    const auto gf = gram(f[j]), gr = gram(r[j]);
    const double d = static_cast<double>(f[j].channels());
    double fro = 0;
    for (std::size_t a = 0; a < gf.size(); ++a) {
      for (std::size_t b = 0; b < gf.size(); ++b) fro += (gf[a][b] - gr[a][b]) * (gf[a][b] - gr[a][b]);
    }
    s += lam[j] * fro / (4.0 * d * d);
  }
  return s;
}

inline double content(const std::vector<Tensor<double>>& f, const std::vector<Tensor<double>>& r,
                      const std::vector<double>& lam) {
  double s = 0;
  for (std::size_t j = 0; j < f.size(); ++j) s += lam[j] * l2(f[j], r[j]);
  return s;
}

inline double mse(const Tensor<double>& a, const Tensor<double>& b) { return l2(a, b); }

// Direct windowed SSIM: 2-D Gaussian weights, centered moments per window.
inline double ssim(const Tensor<double>& a, const Tensor<double>& b, std::size_t win = 11, double sigma = 1.5,
                   double L = 255.0) {
  std::vector<std::vector<double>> w(win, std::vector<double>(win));
  double tot = 0;
  const double c = (static_cast<double>(win) - 1.0) / 2.0;
  for (std::size_t i = 0; i < win; ++i) {
    for (std::size_t j = 0; j < win; ++j) {
      const double di = static_cast<double>(i) - c, dj = static_cast<double>(j) - c;
      tot += w[i][j] = std::exp(-(di * di + dj * dj) / (2 * sigma * sigma));
    }
  }
  const double c1 = (0.01 * L) * (0.01 * L), c2 = (0.03 * L) * (0.03 * L);
  double acc = 0;
  std::size_t n = 0;
  for (std::size_t r = 0; r + win <= a.height(); ++r) {
    for (std::size_t q = 0; q + win <= a.width(); ++q) {
      double ma = 0, mb = 0;
      for (std::size_t i = 0; i < win; ++i) {
        for (std::size_t j = 0; j < win; ++j) {
          ma += w[i][j] / tot * a(0, r + i, q + j);
          mb += w[i][j] / tot * b(0, r + i, q + j);
        }
      }
      double va = 0, vb = 0, cov = 0;
      for (std::size_t i = 0; i < win; ++i) {
        for (std::size_t j = 0; j < win; ++j) {
          const double da = a(0, r + i, q + j) - ma, db = b(0, r + i, q + j) - mb;
          va += w[i][j] / tot * da * da;
          vb += w[i][j] / tot * db * db;
          cov += w[i][j] / tot * da * db;
        }
      }
      acc += (2 * ma * mb + c1) * (2 * cov + c2) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
      ++n;
    }
  }
  return acc / static_cast<double>(n);
}

// Correlation x luminance x contrast form, averaged over sliding windows.
inline double uqi(const Tensor<double>& a, const Tensor<double>& b, std::size_t win = 8) {
  double acc = 0;
  std::size_t n = 0;
  const double m = static_cast<double>(win * win);
  for (std::size_t r = 0; r + win <= a.height(); ++r) {
    for (std::size_t q = 0; q + win <= a.width(); ++q) {
      double ma = 0, mb = 0;
      for (std::size_t i = 0; i < win; ++i) {
        for (std::size_t j = 0; j < win; ++j) {
          ma += a(0, r + i, q + j) / m;
          mb += b(0, r + i, q + j) / m;
        }
      }
      double va = 0, vb = 0, cov = 0;
      for (std::size_t i = 0; i < win; ++i) {
        for (std::size_t j = 0; j < win; ++j) {
          const double da = a(0, r + i, q + j) - ma, db = b(0, r + i, q + j) - mb;
          va += da * da / m;
          vb += db * db / m;
          cov += da * db / m;
        }
      }
      const double sa = std::sqrt(va), sb = std::sqrt(vb);
      acc += (cov / (sa * sb)) * (2 * ma * mb / (ma * ma + mb * mb)) * (2 * sa * sb / (va + vb));
      ++n;
    }
  }
  return acc / static_cast<double>(n);
}

}  // namespace oracle
