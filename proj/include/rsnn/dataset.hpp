#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "rsnn/events.hpp"
#include "rsnn/network.hpp"

namespace rsnn {

struct SynthOptions {
  int height = 16;
  int width = 16;
  int steps = 16;
  int samples_per_class = 8;
  int events_per_step = 32;
  std::int64_t dt_us = 1000;
  std::uint64_t seed = 1;
};

/// Frame binning and optional noise applied when turning streams into samples.
struct FrameOptions {
  std::int64_t dt_us = 1000;
  Index steps = 16;
  double noise_rate = 0;
  std::uint64_t noise_seed = 0;
};

/// Labeled rotating-bar streams, classes interleaved (CW, CCW, CW, ...).
std::vector<EventStream> synth_streams(const SynthOptions& opt);

/// Writes sample_NNNN.csv files plus labels.csv (`file,label`). Returns the file count.
std::size_t write_synthetic_dataset(const std::filesystem::path& dir, const SynthOptions& opt);

Sample make_sample(const EventStream& stream, const FrameOptions& opt, std::size_t index, std::string name);

/// In-memory equivalent of write_synthetic_dataset followed by load_dataset.
std::vector<Sample> synth_dataset(const SynthOptions& synth, const FrameOptions& frames);

/// Reads labels.csv and every listed stream. Throws DataError naming the offending file.
std::vector<Sample> load_dataset(const std::filesystem::path& dir, const FrameOptions& opt);

}  // namespace rsnn
