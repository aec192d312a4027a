#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace todprime::text {

std::string_view trim(std::string_view s) noexcept;
std::string_view rtrim(std::string_view s) noexcept;
std::string to_lower(std::string_view s);

// Lower-case, trim, and collapse internal whitespace runs to one space.
std::string normalize(std::string_view s);

std::vector<std::string> split_whitespace(std::string_view s);
std::string join(const std::vector<std::string>& parts, std::string_view sep);

bool starts_with_ci(std::string_view s, std::string_view prefix) noexcept;
bool equals_ci(std::string_view a, std::string_view b) noexcept;
bool has_newline(std::string_view s) noexcept;

// 64-bit FNV-1a.
std::uint64_t fnv1a(std::string_view s, std::uint64_t seed = 0xcbf29ce484222325ULL) noexcept;
std::string hex64(std::uint64_t v);

}  // namespace todprime::text
