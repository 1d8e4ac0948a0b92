#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>

#include "sfg/param_set.hpp"

namespace sfg {

/// Binary container for named tensors ("SFGE" format).
///
///   magic        4 bytes  "SFGE"
///   version      u32      kCheckpointVersion
///   count        u32      number of tensors
///   per tensor:
///     name_len   u32
///     name       name_len bytes, UTF-8, no terminator
///     rank       u32
///     dims       rank × u64
///     payload    product(dims) × f64
///
/// Every integer and float is little-endian regardless of host order.
/// The same container is used for model checkpoints, saved latents and
/// embedding sets.
inline constexpr std::uint32_t kCheckpointVersion = 1;

void write_tensors(std::ostream& out, const ParamSet& tensors);
ParamSet read_tensors(std::istream& in);

void save_tensors(const std::filesystem::path& path, const ParamSet& tensors);
ParamSet load_tensors(const std::filesystem::path& path);

}  // namespace sfg
