#pragma once

#include <nlohmann/json.hpp>

#include <cstdint>
#include <span>
#include <string>
#include <string_view>

namespace reef {

/// Sorted-key, whitespace-free UTF-8 serialization. Equal JSON values always
/// produce equal bytes.
std::string canonical_json(nlohmann::json const &value);

/// Lowercase hex SHA-256 of a byte string.
std::string sha256_hex(std::string_view bytes);
std::string sha256_hex(std::span<std::uint8_t const> bytes);

/// Incremental SHA-256 for streams that should not be concatenated in memory.
class Sha256 {
public:
  Sha256();
  ~Sha256();
  Sha256(Sha256 const &) = delete;
  Sha256 &operator=(Sha256 const &) = delete;

  void update(std::string_view bytes);
  std::string finish_hex();

private:
  void *ctx_;
};

bool is_hex_digest(std::string_view s) noexcept;

} // namespace reef
