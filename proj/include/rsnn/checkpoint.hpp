#pragma once

// Binary parameter snapshot:
//   "RZSN" | u32 version | records... | u64 step
// Each record: u16 name length, UTF-8 name, u8 rank, u32 dims[rank],
// float32 values. Every integer and float is little-endian.

#include <cstdint>
#include <iosfwd>
#include <string>

#include "rsnn/errors.hpp"
#include "rsnn/network.hpp"

namespace rsnn {

inline constexpr char kCheckpointMagic[4] = {'R', 'Z', 'S', 'N'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  ParameterSet<float> params;
  std::uint64_t step = 0;
};

void save_checkpoint(std::ostream& os, const ParameterSet<float>& params, std::uint64_t step);
void save_checkpoint(const std::string& path, const ParameterSet<float>& params, std::uint64_t step);

/// Throws DataError on a bad magic, version, or truncated record.
Checkpoint load_checkpoint(std::istream& is);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace rsnn
