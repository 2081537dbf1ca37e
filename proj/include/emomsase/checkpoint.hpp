#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>

#include "emomsase/graph.hpp"

namespace emomsase::graph {

std::string sha256_hex(std::string_view bytes);

/// Writes `<prefix>.json` (names, shapes, seed, config hash) and `<prefix>.bin`
/// (little-endian f64, row-major, params in manifest order).
void save_checkpoint(const std::filesystem::path& prefix, std::span<Param* const> params, std::uint64_t seed,
                     std::string_view config_hash);

/// Loads values into params with matching names and shapes. Throws on any mismatch,
/// including a config hash that differs from `expected_config_hash` when that is non-empty.
void load_checkpoint(const std::filesystem::path& prefix, std::span<Param* const> params,
                     std::string_view expected_config_hash = {});

}  // namespace emomsase::graph
