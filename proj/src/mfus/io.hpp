#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace mfus {

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view contents);

std::vector<std::string> split(std::string_view s, char sep);
std::string_view trim(std::string_view s);
std::string to_lower(std::string_view s);

// Lines without their terminators; a trailing '\r' is stripped.
std::vector<std::string> lines(std::string_view contents);

// Hex SHA-256 digest.
std::string sha256_hex(std::string_view data);

// Stable 64-bit mixing for deriving child seeds from (seed, stream).
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

}  // namespace mfus
