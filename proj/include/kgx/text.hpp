#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace kgx::text {

std::vector<std::string_view> split(std::string_view s, char sep);
std::string_view trim(std::string_view s);
std::string to_lower(std::string_view s);
bool starts_with_ci(std::string_view s, std::string_view prefix);

// Lowercased alphanumeric runs; everything else separates tokens.
std::vector<std::string> tokenize(std::string_view s);

// Lowercase, underscores to spaces, whitespace runs collapsed.
std::string normalize(std::string_view s);

bool is_stop_word(std::string_view token);

// 64-bit FNV-1a, hex-encoded. Stable across platforms.
std::uint64_t fnv1a64(std::string_view bytes);
std::string hex64(std::uint64_t v);

// Lowercase hex SHA-256 of the bytes.
std::string sha256_hex(std::string_view bytes);

} // namespace kgx::text
