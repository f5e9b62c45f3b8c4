#include "rsnn/dataset.hpp"

#include <fstream>
#include <iomanip>
#include <sstream>

#include "rsnn/errors.hpp"

namespace rsnn {
namespace {

std::uint64_t mix(std::uint64_t seed, std::uint64_t index) {
  // splitmix64 finalizer
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (index + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

std::string sample_name(std::size_t i) {
  std::ostringstream os;
  os << "sample_" << std::setw(4) << std::setfill('0') << i << ".csv";
  return os.str();
}

std::string read_file(const std::filesystem::path& p) {
  std::ifstream is(p, std::ios::binary);
  if (!is) throw DataError("cannot read " + p.string());
  std::ostringstream os;
  os << is.rdbuf();
  return os.str();
}

}  // namespace

std::vector<EventStream> synth_streams(const SynthOptions& opt) {
  std::vector<EventStream> out;
  const std::size_t n = static_cast<std::size_t>(opt.samples_per_class) * 2;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const Direction dir = i % 2 == 0 ? Direction::kClockwise : Direction::kCounterClockwise;
    out.push_back(
        synth_rotating_bar(opt.height, opt.width, opt.steps, dir, opt.events_per_step, mix(opt.seed, i), opt.dt_us));
  }
  return out;
}

std::size_t write_synthetic_dataset(const std::filesystem::path& dir, const SynthOptions& opt) {
  std::filesystem::create_directories(dir);
  const auto streams = synth_streams(opt);
  std::ostringstream labels;
  labels << "file,label\n";
  for (std::size_t i = 0; i < streams.size(); ++i) {
    const std::string name = sample_name(i);
    std::ofstream os(dir / name, std::ios::binary | std::ios::trunc);
    os << format_event_csv(streams[i]);
    if (!os) throw DataError("cannot write " + (dir / name).string());
    labels << name << ',' << *streams[i].label << '\n';
  }
  std::ofstream os(dir / "labels.csv", std::ios::binary | std::ios::trunc);
  os << labels.str();
  if (!os) throw DataError("cannot write " + (dir / "labels.csv").string());
  return streams.size();
}

Sample make_sample(const EventStream& stream, const FrameOptions& opt, std::size_t index, std::string name) {
  if (!stream.label) throw DataError("sample '" + name + "' has no label");
  const EventStream noisy = opt.noise_rate > 0
                                ? inject_noise(stream, opt.noise_rate, opt.dt_us, mix(opt.noise_seed, index), opt.steps)
                                : stream;
  return {accumulate_frames(noisy, opt.dt_us, opt.steps), *stream.label, std::move(name)};
}

std::vector<Sample> synth_dataset(const SynthOptions& synth, const FrameOptions& frames) {
  const auto streams = synth_streams(synth);
  std::vector<Sample> out;
  out.reserve(streams.size());
  for (std::size_t i = 0; i < streams.size(); ++i) out.push_back(make_sample(streams[i], frames, i, sample_name(i)));
  return out;
}

std::vector<Sample> load_dataset(const std::filesystem::path& dir, const FrameOptions& opt) {
  const std::string labels = read_file(dir / "labels.csv");
  std::istringstream is(labels);
  std::string line;
  std::size_t line_no = 0;
  std::vector<Sample> out;
  while (std::getline(is, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line_no == 1) {
      if (line != "file,label") throw DataError("labels.csv: expected header 'file,label'");
      continue;
    }
    const auto comma = line.find(',');
    if (comma == std::string::npos) throw DataError("labels.csv line " + std::to_string(line_no) + ": missing label");
    const std::string file = line.substr(0, comma);
    int label = -1;
    try {
      label = std::stoi(line.substr(comma + 1));
    } catch (const std::exception&) {
      throw DataError("labels.csv line " + std::to_string(line_no) + ": bad label");
    }
    EventStream stream;
    try {
      stream = parse_event_csv(read_file(dir / file));
    } catch (const std::exception& e) {
      throw DataError("sample '" + file + "': " + e.what());
    }
    stream.label = label;
    out.push_back(make_sample(stream, opt, out.size(), file));
  }
  if (out.empty()) throw DataError("dataset " + dir.string() + " is empty");
  return out;
}

}  // namespace rsnn
