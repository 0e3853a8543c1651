#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "les/atoms.hpp"

namespace les {

/// Parses extended-XYZ text. Every frame needs an orthorhombic `Lattice` and a
/// `Properties` string with `species:S:1:pos:R:3`; `forces:R:3`,
/// `velocities:R:3` and `energy=` are picked up when present. Other comment-line
/// keys land in Configuration::info. Errors carry the 1-based line number.
std::vector<Configuration> parse_extxyz(std::string_view text);

/// Writes frames so that parse_extxyz(write_extxyz(c)) == c exactly.
std::string write_extxyz(std::span<const Configuration> configs);

std::vector<Configuration> read_extxyz_file(const std::filesystem::path& path);
void write_extxyz_file(const std::filesystem::path& path, std::span<const Configuration> configs);

} // namespace les
