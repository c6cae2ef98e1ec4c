#pragma once

#include <cstdint>
#include <string>
#include <string_view>

namespace racelab {

// FNV-1a, 64-bit: tiny, dependency-free content fingerprint for manifests.
inline std::uint64_t fnv1a64(std::string_view bytes) {
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

inline std::string hex64(std::uint64_t v) {
    static const char* digits = "0123456789abcdef";
    std::string out(16, '0');
    for (int i = 15; i >= 0; --i) {
        out[std::size_t(i)] = digits[v & 0xF];
        v >>= 4;
    }
    return out;
}

}  // namespace racelab
