#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>

#include "protorec/model.hpp"

namespace protorec {

// Plain-text checkpoint, format version 1:
//
//   protorec-checkpoint 1
//   variant <mf|protomf>
//   filter <k_u> <k_t>            (-1 = all prototypes)
//   config_hash <16 hex digits>
//   matrix <name> <rows> <cols>   followed by <rows> lines of <cols> numbers
//   ...
//   end
//
// Matrices appear in the order user_factors, item_factors, then for
// protomf user_prototypes, item_prototypes, user_map, item_map. Numbers are
// printed in shortest round-trip form, so reloading reproduces every bit.
struct Checkpoint {
  ModelParams params;
  FilterSpec filter;
  std::string config_hash;

  bool operator==(const Checkpoint&) const = default;
};

void write_checkpoint(std::ostream& out, const Checkpoint& ckpt);
Checkpoint read_checkpoint(std::istream& in);

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

// Shortest decimal string that parses back to exactly `v`.
std::string format_double(double v);

}  // namespace protorec
