#include "rsnn/events.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

namespace rsnn {
namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (std::size_t i = 0; i <= s.size(); ++i) {
    if (i == s.size() || s[i] == sep) {
      out.push_back(trim(s.substr(start, i - start)));
      start = i + 1;
    }
  }
  return out;
}

bool parse_int(std::string_view s, std::int64_t& out) {
  if (s.empty()) return false;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && ptr == s.data() + s.size();
}

void sort_events(std::vector<Event>& events) {
  std::stable_sort(events.begin(), events.end(), [](const Event& a, const Event& b) { return a.t_us < b.t_us; });
}

}  // namespace

EventStream parse_event_csv(std::string_view text) {
  EventStream stream;
  bool have_geometry = false;
  bool have_header = false;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    const std::string_view line = trim(text.substr(pos, end - pos));
    pos = end + 1;
    ++line_no;
    if (line.empty()) continue;

    if (line.front() == '#') {
      std::istringstream is{std::string(line.substr(1))};
      std::string key;
      is >> key;
      if (key == "geometry") {
        int h = 0, w = 0;
        if (!(is >> h >> w) || h < 1 || w < 1) throw ParseError(line_no, "malformed geometry line");
        stream.geometry = {h, w};
        have_geometry = true;
      } else if (key == "label") {
        int label = -1;
        if (!(is >> label) || label < 0) throw ParseError(line_no, "malformed label line");
        stream.label = label;
      }
      continue;
    }
    if (!have_geometry) throw ParseError(line_no, "missing '# geometry H W' before data");
    if (!have_header) {
      if (line != "t_us,x,y,p") throw ParseError(line_no, "expected header 't_us,x,y,p'");
      have_header = true;
      continue;
    }

    const auto fields = split(line, ',');
    std::int64_t v[4];
    if (fields.size() != 4) throw ParseError(line_no, "expected 4 fields, got " + std::to_string(fields.size()));
    for (int i = 0; i < 4; ++i)
      if (!parse_int(fields[i], v[i]) || v[i] < 0)
        throw ParseError(line_no, "field " + std::to_string(i + 1) + " is not a non-negative integer");
    if (v[1] >= stream.geometry.width || v[2] >= stream.geometry.height)
      throw RangeError(line_no, "coordinate (" + std::to_string(v[1]) + ", " + std::to_string(v[2]) +
                                    ") outside geometry " + std::to_string(stream.geometry.height) + "x" +
                                    std::to_string(stream.geometry.width));
    if (v[3] > 1) throw RangeError(line_no, "polarity must be 0 or 1");
    stream.events.push_back({v[0], static_cast<int>(v[1]), static_cast<int>(v[2]), static_cast<int>(v[3])});
  }
  if (!have_geometry) throw ParseError(line_no, "missing '# geometry H W'");
  if (!have_header) throw ParseError(line_no, "missing header 't_us,x,y,p'");

  const bool sorted = std::is_sorted(stream.events.begin(), stream.events.end(),
                                     [](const Event& a, const Event& b) { return a.t_us < b.t_us; });
  if (!sorted) {
    sort_events(stream.events);
    stream.reordered = true;
  }
  return stream;
}

std::string format_event_csv(const EventStream& stream) {
  std::ostringstream os;
  os << "# geometry " << stream.geometry.height << ' ' << stream.geometry.width << '\n';
  if (stream.label) os << "# label " << *stream.label << '\n';
  os << "t_us,x,y,p\n";
  for (const Event& e : stream.events) os << e.t_us << ',' << e.x << ',' << e.y << ',' << e.p << '\n';
  return os.str();
}

int frame_channels(const Geometry& g) { return g.height == 1 ? 1 : 2; }

FrameSequence accumulate_frames(const EventStream& stream, std::int64_t dt_us, Index steps) {
  if (dt_us < 1) throw std::invalid_argument("accumulate_frames: dt_us must be >= 1");
  if (steps < 1) throw std::invalid_argument("accumulate_frames: steps must be >= 1");
  const Geometry g = stream.geometry;
  const int channels = frame_channels(g);
  FrameSequence frames{Tensor<float>(Shape{steps, channels, g.height, g.width}), steps, dt_us, 0};
  for (const Event& e : stream.events) {
    const std::int64_t t = e.t_us / dt_us;
    if (t >= steps) {
      ++frames.discarded;
      continue;
    }
    const int c = channels == 2 ? e.p : 0;
    frames.data.at(t, c, e.y, e.x) += 1.0f;
  }
  return frames;
}

EventStream synth_rotating_bar(int height, int width, int steps, Direction direction, int events_per_step,
                               std::uint64_t seed, std::int64_t dt_us) {
  if (height < 4 || width < 4) throw std::invalid_argument("synth_rotating_bar: H and W must be >= 4");
  if (steps < 2) throw std::invalid_argument("synth_rotating_bar: T must be >= 2");
  if (events_per_step < 0 || dt_us < 1) throw std::invalid_argument("synth_rotating_bar: invalid rate or window");

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_int_distribution<std::int64_t> offset(0, dt_us - 1);
  std::bernoulli_distribution polarity(0.5);

  const double two_pi = 2.0 * std::numbers::pi;
  const double start = two_pi * unit(rng);
  const double sign = direction == Direction::kCounterClockwise ? 1.0 : -1.0;
  const double cx = (width - 1) / 2.0;
  const double cy = (height - 1) / 2.0;
  const double radius = std::min(height, width) / 2.0 - 0.5;

  EventStream stream;
  stream.geometry = {height, width};
  stream.label = direction == Direction::kClockwise ? 0 : 1;
  stream.events.reserve(static_cast<std::size_t>(steps) * events_per_step);
  for (int t = 0; t < steps; ++t) {
    const double angle = start + sign * two_pi * t / steps;
    const double c = std::cos(angle), s = std::sin(angle);
    for (int k = 0; k < events_per_step; ++k) {
      const double r = radius * (2.0 * unit(rng) - 1.0);
      const std::int64_t t_us = t * dt_us + offset(rng);
      const int p = polarity(rng) ? 1 : 0;
      const int x = std::clamp(static_cast<int>(std::lround(cx + r * c)), 0, width - 1);
      const int y = std::clamp(static_cast<int>(std::lround(cy - r * s)), 0, height - 1);
      stream.events.push_back({t_us, x, y, p});
    }
  }
  sort_events(stream.events);
  return stream;
}

EventStream inject_noise(const EventStream& stream, double rate_per_window, std::int64_t dt_us, std::uint64_t seed,
                         std::optional<std::int64_t> windows) {
  if (!(rate_per_window >= 0)) throw std::invalid_argument("inject_noise: rate must be non-negative");
  if (dt_us < 1) throw std::invalid_argument("inject_noise: dt_us must be >= 1");
  EventStream out = stream;
  if (rate_per_window == 0) return out;
  const std::int64_t n_windows =
      windows.value_or(stream.events.empty() ? 0 : stream.events.back().t_us / dt_us + 1);

  std::mt19937_64 rng(seed);
  std::poisson_distribution<int> count(rate_per_window);
  std::uniform_int_distribution<int> xs(0, stream.geometry.width - 1);
  std::uniform_int_distribution<int> ys(0, stream.geometry.height - 1);
  std::uniform_int_distribution<std::int64_t> offset(0, dt_us - 1);
  std::bernoulli_distribution polarity(0.5);
  for (std::int64_t w = 0; w < n_windows; ++w) {
    const int n = count(rng);
    for (int k = 0; k < n; ++k) {
      const std::int64_t t_us = w * dt_us + offset(rng);
      const int x = xs(rng);
      const int y = ys(rng);
      out.events.push_back({t_us, x, y, polarity(rng) ? 1 : 0});
    }
  }
  sort_events(out.events);
  return out;
}

}  // namespace rsnn
