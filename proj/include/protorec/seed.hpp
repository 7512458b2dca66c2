#pragma once

#include <cstdint>
#include <string_view>

namespace protorec {

std::uint64_t fnv1a64(std::string_view bytes);

// Keyed derivation of an independent sub-seed from a master seed. Streams
// are identified by name, so adding a new consumer never shifts the others.
std::uint64_t derive_seed(std::uint64_t master, std::string_view stream);

}  // namespace protorec
