#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace medgan {

// Lowercase hex SHA-256.
std::string sha256_hex(std::span<const std::byte> data);
std::string sha256_hex(std::string_view data);

// Incremental SHA-256 over several buffers.
class Sha256 {
 public:
  Sha256();
  ~Sha256();
  Sha256(const Sha256&) = delete;
  Sha256& operator=(const Sha256&) = delete;

  void update(const void* data, std::size_t size);
  template <typename T>
  void update_values(std::span<const T> values) {
    update(values.data(), values.size_bytes());
  }
  // Finalizes; call at most once.
  std::vector<std::byte> digest();
  std::string hex_digest();

 private:
  void* ctx_;
};

}  // namespace medgan
