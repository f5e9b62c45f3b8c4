#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "rsnn/tensor.hpp"

namespace rsnn {

struct Event {
  std::int64_t t_us = 0;
  int x = 0;
  int y = 0;
  int p = 0;

  friend bool operator==(const Event&, const Event&) = default;
};

struct Geometry {
  int height = 0;
  int width = 0;

  friend bool operator==(const Geometry&, const Geometry&) = default;
};

/// Time-ordered events of one recording.
struct EventStream {
  Geometry geometry;
  std::vector<Event> events;
  std::optional<int> label;
  bool reordered = false;  // set when the source was not sorted by timestamp
};

/// Per-window event counts, shape (T, C, H, W). C is 2 (one per polarity),
/// or 1 for single-row streams where polarity is folded.
struct FrameSequence {
  Tensor<float> data;
  Index steps = 0;
  std::int64_t dt_us = 0;
  std::size_t discarded = 0;  // events at or past steps * dt_us
};

class ParseError : public std::runtime_error {
 public:
  ParseError(std::size_t line, const std::string& what)
      : std::runtime_error("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

class RangeError : public std::out_of_range {
 public:
  RangeError(std::size_t line, const std::string& what)
      : std::out_of_range("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

enum class Direction { kClockwise, kCounterClockwise };

/// Parses `# geometry H W`, header `t_us,x,y,p`, and integer rows. Unsorted input
/// is stable-sorted and flagged.
EventStream parse_event_csv(std::string_view text);

/// Inverse of parse_event_csv for sorted streams.
std::string format_event_csv(const EventStream& stream);

int frame_channels(const Geometry& g);

FrameSequence accumulate_frames(const EventStream& stream, std::int64_t dt_us, Index steps);

/// A bar through the grid center rotating by 2*pi/T per window (sign by
/// direction) from a seed-dependent start angle. Window 0 is identical for
/// both directions; label 0 = clockwise, 1 = counter-clockwise.
EventStream synth_rotating_bar(int height, int width, int steps, Direction direction, int events_per_step,
                               std::uint64_t seed, std::int64_t dt_us = 1000);

/// Adds uniformly placed events, Poisson(rate) per window. The window count
/// defaults to the span of the stream.
EventStream inject_noise(const EventStream& stream, double rate_per_window, std::int64_t dt_us, std::uint64_t seed,
                         std::optional<std::int64_t> windows = std::nullopt);

}  // namespace rsnn
