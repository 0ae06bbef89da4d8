#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "gripstab/models.hpp"
#include "gripstab/network.hpp"

namespace gripstab {

// Binary container, little-endian:
//   magic "GSCKPT01", u32 version, then length-prefixed sections
//   (model JSON, f32 parameters, f32 buffers, u64 step, rng state text),
//   closed by a u64 FNV-1a checksum over everything before it.
struct Checkpoint {
  ModelSpec spec;
  std::vector<float> parameters;
  std::vector<float> buffers;
  std::uint64_t step = 0;
  std::string rng_state;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
// Throws IoError on a missing, truncated or corrupted file.
Checkpoint load_checkpoint(const std::filesystem::path& path);

Checkpoint snapshot(const Network<float>& net, std::uint64_t step, std::string rng_state = {});
// Builds a network for the checkpoint's graph and loads its arrays.
Network<float> restore(const Checkpoint& ckpt);
// Loads arrays into an existing network; throws ShapeError if sizes differ.
void load_into(Network<float>& net, const Checkpoint& ckpt);

}  // namespace gripstab
