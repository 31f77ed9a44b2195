#pragma once

#include <string>

#include "elastic/network.hpp"

namespace elastic {

struct CheckpointMeta {
  i64 step{0};
  std::uint64_t shuffle_state{0}, shuffle_inc{0};
  std::uint64_t augment_state{0}, augment_inc{0};
};

// Binary format, all integers little-endian:
//   magic "ELNETCK1", u32 format version (1),
//   u32 arch text length + the arch config (config_io grammar),
//   u64 step, 4 x u64 rng words (shuffle state/inc, augment state/inc),
//   u32 entry count, then per entry:
//     u16 name length + name bytes, u8 ndim, ndim x u32 dims,
//     payload as 32-bit little-endian floats.
// Entries are the named parameters in registry order followed by each norm's
// running_mean and running_var. save -> load -> save is byte-identical.
void save_checkpoint(const std::string& path, Network& net,
                     const CheckpointMeta& meta);

// Reads just the embedded arch config, for rebuilding the network to load
// into.
ArchSpec read_checkpoint_arch(const std::string& path);

// Loads parameters and running stats into a built network. The entry walk is
// sequential; the first name or shape mismatch raises FormatError naming it.
CheckpointMeta load_checkpoint(const std::string& path, Network& net);

}  // namespace elastic
