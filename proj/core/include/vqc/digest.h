#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>

namespace vqc {

// 64-bit FNV-1a. Stable across platforms and releases; group ids and cache
// keys depend on it, so never change the constants.
std::uint64_t fnv1a64(std::string_view bytes,
                      std::uint64_t seed = 0xcbf29ce484222325ULL);

// 16 lowercase hex characters.
std::string hex64(std::uint64_t value);

std::string digest_hex(std::string_view bytes);

// Digest of an ordered list; the unit separator keeps ("ab","c") and
// ("a","bc") distinct.
std::string digest_ordered(std::span<const std::string> parts);

std::string digest_file(const std::string& path);

}  // namespace vqc
