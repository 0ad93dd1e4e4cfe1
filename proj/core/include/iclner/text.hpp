#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace iclner {

bool has_whitespace(std::string_view s) noexcept;
std::string join(const std::vector<std::string>& parts, std::string_view sep);
std::vector<std::string> split_whitespace(std::string_view s);
std::string_view trim(std::string_view s) noexcept;
std::string to_lower(std::string_view s);
bool starts_with_upper(std::string_view s) noexcept;

std::string read_file(const std::filesystem::path& path);
/// Writes via a temporary sibling and rename, so readers never see a partial file.
void write_file_atomic(const std::filesystem::path& path, std::string_view contents);

/// Lowercase hex SHA-256 digest.
std::string sha256_hex(std::string_view data);

/// splitmix64 finalizer; used to derive independent seeds from (seed, key) pairs.
std::uint64_t mix64(std::uint64_t x) noexcept;
std::uint64_t hash_combine(std::uint64_t seed, std::string_view key) noexcept;

}  // namespace iclner
