#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string_view>

// Little-endian primitives shared by the MLSE and checkpoint formats.

namespace ffmsr::data {

void write_u32(std::ostream& out, std::uint32_t value);
std::uint32_t read_u32(std::istream& in);
void write_f32_array(std::ostream& out, std::span<const float> values);
void read_f32_array(std::istream& in, std::span<float> values);

/// Narrow a size for a u32 header field, throwing if it does not fit.
std::uint32_t checked_u32(std::size_t value, std::string_view field);

}  // namespace ffmsr::data
