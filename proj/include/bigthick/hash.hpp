#pragma once

#include <cstdint>
#include <string>
#include <string_view>

namespace bigthick {

/// FNV-1a, 64 bit. Used for content-derived identifiers.
constexpr std::uint64_t fnv1a64(std::string_view data) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : data) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hex64(std::uint64_t value);
std::string hex32(std::uint32_t value);

/// CRC-32 (IEEE 802.3 polynomial), as used by zlib.
std::uint32_t crc32(std::string_view data);

}  // namespace bigthick
