#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace vasg {

/// Little-endian 32-bit float encoding of the given values.
std::vector<char> encode_f32le(std::span<const double> values);
std::vector<double> decode_f32le(std::span<const char> bytes);

std::vector<char> read_bytes(const std::filesystem::path& path);
void write_bytes(const std::filesystem::path& path, std::span<const char> bytes);
std::string read_text(const std::filesystem::path& path);
void write_text(const std::filesystem::path& path, const std::string& text);

/// 64-bit FNV-1a, printed as 16 hex digits.
std::string fnv1a_hex(std::span<const char> bytes);

}  // namespace vasg
