#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace qufleet {

// Canonical number formatting: shortest representation that round-trips
// exactly (std::to_chars). Used everywhere a float crosses a wire or a file
// so identical values always produce identical bytes.
std::string format_double(double value);

double parse_double(std::string_view text);      // full-consume or DecodeError
std::uint64_t parse_u64(std::string_view text);
std::uint32_t parse_u32(std::string_view text);
std::int64_t parse_i64(std::string_view text);

// Backslash escaping for single-line text records: \\ \n \r.
std::string escape_field(std::string_view raw);
std::string unescape_field(std::string_view escaped);  // DecodeError on bad escape

std::vector<std::string_view> split(std::string_view text, char sep);

// 64-bit mixing for derived seeds (splitmix64 finalizer chain).
std::uint64_t mix64(std::uint64_t x);
std::uint64_t seed_mix(std::uint64_t a, std::uint64_t b);
std::uint64_t hash_str(std::string_view s);  // FNV-1a

} // namespace qufleet
