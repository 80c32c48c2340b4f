#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>

namespace attrib {

/// Lowercase hex SHA-256.
std::string sha256_hex(std::string_view bytes);
std::string sha256_file_hex(const std::string& path);

/// Shortest round-trippable decimal text for a double, locale independent.
std::string format_double(double value);

/// Digest identifying an ordered id list, e.g. "subset-3fa1c0de9b2e4471".
std::string subset_digest(std::span<const std::uint64_t> ids);

}  // namespace attrib
