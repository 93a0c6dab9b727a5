#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>

#include "kgrec/params.h"

namespace kgrec {

// Binary layout (all integers little-endian), documented in docs/checkpoint.md:
//   "KGRECKPT" | u32 version | u32 dim | u64 entities | u64 relations | u64 users | u64 step
//   u32 n_tensors, then per tensor: u32 name_len | name | u64 rows | u64 cols | u64 count | f32[count]
//   u32 n_moments, then the same record format for adam_m/<name> followed by adam_v/<name>
inline constexpr std::uint32_t kCheckpointVersion = 1;

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct CheckpointHeader {
  std::uint32_t version = kCheckpointVersion;
  std::uint32_t dim = 0;
  std::uint64_t num_entities = 0;
  std::uint64_t num_relations = 0;
  std::uint64_t num_users = 0;
  std::uint64_t step = 0;
};

// Writes to a temporary sibling and renames it into place.
void save_checkpoint(const std::filesystem::path& path, const ParamStore& params);
ParamStore load_checkpoint(const std::filesystem::path& path, CheckpointHeader* header = nullptr);

// Rounds every tensor and moment to float32, i.e. the values a save/load cycle yields.
void round_to_checkpoint_precision(ParamStore& params);

}  // namespace kgrec
