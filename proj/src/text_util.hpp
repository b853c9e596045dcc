#pragma once

#include <cstdint>

#include <string>
#include <string_view>
#include <vector>

namespace nvloc::detail {

std::string_view trim(std::string_view s);

/// Splits on commas, tabs or runs of whitespace.
std::vector<std::string> split_fields(std::string_view s);

/// Strict double parse; throws InputError on trailing garbage.
double parse_double(std::string_view s);

/// Writes `content` to `path` through a temporary file and rename.
void write_file_atomic(const std::string& path, const std::string& content);

/// 64-bit FNV-1a.
std::uint64_t fnv1a(std::string_view data, std::uint64_t seed = 14695981039346656037ull);

}  // namespace nvloc::detail
