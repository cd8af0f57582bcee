#pragma once

#include <array>
#include <cstddef>
#include <cstdint>

namespace ph {

// CRC-64/XZ (reflected 0x42F0E1EBA9EA3693), the trailing integrity check of
// the binary model/head formats and the frozen-weights digest.
class Crc64 {
 public:
  Crc64() : crc_(~0ULL) {}

  void update(const void* data, std::size_t len) {
    const auto* p = static_cast<const unsigned char*>(data);
    std::uint64_t c = crc_;
    for (std::size_t i = 0; i < len; ++i) {
      c = table()[(c ^ p[i]) & 0xFF] ^ (c >> 8);
    }
    crc_ = c;
  }

  std::uint64_t finish() const { return ~crc_; }

  static std::uint64_t of(const void* data, std::size_t len) {
    Crc64 c;
    c.update(data, len);
    return c.finish();
  }

 private:
  static const std::array<std::uint64_t, 256>& table() {
    static const std::array<std::uint64_t, 256> t = [] {
      std::array<std::uint64_t, 256> out{};
      constexpr std::uint64_t poly = 0xC96C5795D7870F42ULL;
      for (std::uint64_t i = 0; i < 256; ++i) {
        std::uint64_t c = i;
        for (int bit = 0; bit < 8; ++bit) {
          c = (c & 1) ? (c >> 1) ^ poly : c >> 1;
        }
        out[i] = c;
      }
      return out;
    }();
    return t;
  }

  std::uint64_t crc_;
};

}  // namespace ph
