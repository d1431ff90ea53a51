#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace mistrat::codec {

/// Lowercase hex SHA-256 of `data`.
std::string sha256_hex(std::string_view data);

std::string base64_encode(std::span<const std::uint8_t> bytes);
/// Throws FormatError on invalid input.
std::vector<std::uint8_t> base64_decode(std::string_view text);

/// Little-endian IEEE-754 binary32 packing, independent of host byte order.
std::string encode_f32_le(std::span<const float> values);
std::vector<float> decode_f32_le(std::string_view base64);

std::string trim(std::string_view s);
std::string to_lower(std::string_view s);

}  // namespace mistrat::codec
