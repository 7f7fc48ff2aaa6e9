#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "medgan/tensor.hpp"

namespace medgan {

enum class Normalization { instance, none };

inline std::string to_string(Normalization n) { return n == Normalization::instance ? "instance" : "none"; }

inline Normalization normalization_from_string(const std::string& s) {
  if (s == "instance") return Normalization::instance;
  if (s == "none") return Normalization::none;
  throw ConfigError("unknown normalization '" + s + "' (expected instance|none)");
}

template <typename T>
std::size_t count_parameters(const std::vector<Parameter<T>*>& params) {
  std::size_t n = 0;
  for (const auto* p : params) n += p->value.size();
  return n;
}

template <typename T>
void zero_grads(const std::vector<Parameter<T>*>& params) {
  for (auto* p : params) p->zero_grad();
}

}  // namespace medgan
