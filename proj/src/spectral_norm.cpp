#include "medgan/spectral_norm.hpp"

#include <Eigen/Core>

#include "medgan/errors.hpp"
#include "medgan/rng.hpp"

namespace medgan {

template <typename T>
SpectralEstimate<T> estimate_spectral_norm(std::span<const T> matrix, std::size_t rows, std::size_t cols,
                                           std::span<const T> u_state, int iterations, std::uint64_t seed) {
  using Vec = Eigen::Matrix<T, Eigen::Dynamic, 1>;
  using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  if (matrix.size() != rows * cols) throw ShapeError("spectral norm: matrix size does not match rows x cols");
  if (!u_state.empty() && u_state.size() != rows) {
    throw ShapeError("spectral norm: u has " + std::to_string(u_state.size()) + " entries, expected " +
                     std::to_string(rows));
  }
  Eigen::Map<const Mat> w(matrix.data(), rows, cols);

  SpectralEstimate<T> out;
  out.u.assign(u_state.begin(), u_state.end());
  if (w.squaredNorm() == T{0}) {
    out.sigma = T{0};
    return out;
  }

  Vec u(rows);
  if (u_state.empty()) {
    Engine engine(seed);
    std::normal_distribution<double> dist(0.0, 1.0);
    for (std::size_t i = 0; i < rows; ++i) u[i] = static_cast<T>(dist(engine));
    u /= (u.norm() + static_cast<T>(kSpectralEps));
  } else {
    for (std::size_t i = 0; i < rows; ++i) u[i] = u_state[i];
  }

  const T eps = static_cast<T>(kSpectralEps);
  Vec v(cols);
  const int steps = iterations < 1 ? 1 : iterations;
  for (int it = 0; it < steps; ++it) {
    v.noalias() = w.transpose() * u;
    v /= (v.norm() + eps);
    u.noalias() = w * v;
    u /= (u.norm() + eps);
  }
  out.sigma = u.dot(w * v);
  out.u.assign(u.data(), u.data() + rows);
  return out;
}

template <typename T>
T spectral_normalize(std::span<T> matrix, std::size_t rows, std::size_t cols, std::vector<T>& u_state,
                     int iterations, std::uint64_t seed) {
  auto est = estimate_spectral_norm<T>(std::span<const T>(matrix.data(), matrix.size()), rows, cols, u_state,
                                       iterations, seed);
  if (est.sigma > T{0}) {
    const T inv = T{1} / est.sigma;
    for (T& x : matrix) x *= inv;
  }
  u_state = std::move(est.u);
  return est.sigma;
}

template SpectralEstimate<float> estimate_spectral_norm(std::span<const float>, std::size_t, std::size_t,
                                                        std::span<const float>, int, std::uint64_t);
template SpectralEstimate<double> estimate_spectral_norm(std::span<const double>, std::size_t, std::size_t,
                                                         std::span<const double>, int, std::uint64_t);
template float spectral_normalize(std::span<float>, std::size_t, std::size_t, std::vector<float>&, int,
                                  std::uint64_t);
template double spectral_normalize(std::span<double>, std::size_t, std::size_t, std::vector<double>&, int,
                                   std::uint64_t);

}  // namespace medgan
