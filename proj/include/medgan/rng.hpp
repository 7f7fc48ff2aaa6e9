#pragma once

#include <cstdint>
#include <random>
#include <string_view>

#include "medgan/tensor.hpp"

namespace medgan {

// SplitMix64 finalizer; used to derive independent sub-seeds.
inline std::uint64_t mix_seed(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  return mix_seed(seed ^ mix_seed(stream + 0x632be59bd9b4e019ULL));
}

inline std::uint64_t derive_seed(std::uint64_t seed, std::string_view label) {
  std::uint64_t h = 1469598103934665603ULL;  // FNV-1a
  for (char c : label) {
    h ^= static_cast<unsigned char>(c);
    h *= 1099511628211ULL;
  }
  return derive_seed(seed, h);
}

using Engine = std::mt19937_64;

template <typename T>
void fill_normal(Tensor<T>& t, Engine& engine, double mean, double stddev) {
  std::normal_distribution<double> dist(mean, stddev);
  for (auto& v : t.values()) v = static_cast<T>(dist(engine));
}

template <typename T>
void fill_uniform(Tensor<T>& t, Engine& engine, double lo, double hi) {
  std::uniform_real_distribution<double> dist(lo, hi);
  for (auto& v : t.values()) v = static_cast<T>(dist(engine));
}

}  // namespace medgan
