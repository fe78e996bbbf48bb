#pragma once

#include <string>

#include "darqn/model.hpp"
#include "darqn/params.hpp"

namespace darqn {

// Binary checkpoint layout, little-endian throughout:
//   "DARQ" magic, u32 format version (1), u32 architecture id, then one
//   record per array: u32 name length, name bytes, u32 rank, u32 dims,
//   f64 data. Records appear in parameter-set order, so save -> load ->
//   save round-trips byte-identically.
inline constexpr uint32_t kCheckpointVersion = 1;

void save_checkpoint(const std::string& path, Arch arch, const ParameterSet& ps);

// Loads into an already-built parameter set; the stored architecture id,
// name set and shapes must match exactly.
void load_checkpoint(const std::string& path, Arch expected, ParameterSet& ps);

Arch peek_checkpoint_arch(const std::string& path);

}  // namespace darqn
