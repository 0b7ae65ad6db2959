#pragma once

#include <cstdint>
#include <string>
#include <string_view>

namespace hse {

/// FNV-1a 64-bit over raw bytes. Used for content hashes of spaces, plans
/// and models; stable across platforms.
inline std::uint64_t fnv1a64(std::string_view bytes) {
    std::uint64_t h = 0xCBF29CE484222325ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001B3ULL;
    }
    return h;
}

inline std::string to_hex64(std::uint64_t v) {
    static const char* digits = "0123456789abcdef";
    std::string out(16, '0');
    for (int i = 15; i >= 0; --i) {
        out[static_cast<std::size_t>(i)] = digits[v & 0xF];
        v >>= 4;
    }
    return out;
}

inline std::string content_hash_hex(std::string_view bytes) {
    return to_hex64(fnv1a64(bytes));
}

}  // namespace hse
