#pragma once

#include <cstdint>
#include <string_view>

namespace gci {

// splitmix64 finalizer
constexpr std::uint64_t mix64(std::uint64_t x) noexcept {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

constexpr std::uint64_t fnv1a(std::string_view s) noexcept {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (char c : s) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001b3ULL;
    }
    return h;
}

/// Derive a child seed from a root seed and a label. Every random stream in
/// the project is reached from one root seed through this function.
constexpr std::uint64_t derive_seed(std::uint64_t root, std::string_view label) noexcept {
    return mix64(root ^ mix64(fnv1a(label)));
}

}  // namespace gci
