#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace medgan {

inline constexpr double kSpectralEps = 1e-12;

template <typename T>
struct SpectralEstimate {
  T sigma{};
  std::vector<T> u;  // left singular vector estimate, unit norm
};

// Power-iteration estimate of the largest singular value of a row-major
// rows x cols matrix. An empty u_state is replaced by a seeded random unit
// vector. A zero matrix yields sigma = 0 and returns u_state unchanged.
template <typename T>
SpectralEstimate<T> estimate_spectral_norm(std::span<const T> matrix, std::size_t rows, std::size_t cols,
                                           std::span<const T> u_state, int iterations, std::uint64_t seed = 0);

// Divides the matrix by its estimated spectral norm in place and stores the
// refreshed u. Returns the estimate used; zero matrices are left untouched.
template <typename T>
T spectral_normalize(std::span<T> matrix, std::size_t rows, std::size_t cols, std::vector<T>& u_state,
                     int iterations, std::uint64_t seed = 0);

}  // namespace medgan
