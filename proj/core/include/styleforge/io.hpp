#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <vector>

namespace styleforge {

/// Whole-file binary read; throws IoError naming the path.
std::vector<std::byte> read_bytes(const std::filesystem::path& path);

/// Whole-file binary write (truncating); throws IoError naming the path.
void write_bytes(const std::filesystem::path& path, std::span<const std::byte> bytes);

}  // namespace styleforge
