#include "rsnn/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

namespace rsnn {
namespace {

template <typename T>
void put_le(std::ostream& os, T value) {
  static_assert(std::is_unsigned_v<T>);
  char bytes[sizeof(T)];
  for (std::size_t i = 0; i < sizeof(T); ++i) bytes[i] = static_cast<char>((value >> (8 * i)) & 0xFF);
  os.write(bytes, sizeof(T));
}

template <typename T>
T get_le(std::istream& is, const char* what) {
  unsigned char bytes[sizeof(T)];
  if (!is.read(reinterpret_cast<char*>(bytes), sizeof(T)))
    throw DataError(std::string("checkpoint truncated while reading ") + what);
  T value = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) value |= static_cast<T>(bytes[i]) << (8 * i);
  return value;
}

}  // namespace

void save_checkpoint(std::ostream& os, const ParameterSet<float>& params, std::uint64_t step) {
  os.write(kCheckpointMagic, 4);
  put_le<std::uint32_t>(os, kCheckpointVersion);
  for (std::size_t i = 0; i < params.size(); ++i) {
    const std::string& name = params.names[i];
    const Tensor<float>& t = params.tensors[i];
    if (name.size() > 0xFFFF) throw DataError("tensor name too long: " + name.substr(0, 32));
    put_le<std::uint16_t>(os, static_cast<std::uint16_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    os.put(static_cast<char>(t.shape().rank()));
    for (Index d : t.shape().dims()) put_le<std::uint32_t>(os, static_cast<std::uint32_t>(d));
    for (Index k = 0; k < t.size(); ++k) put_le<std::uint32_t>(os, std::bit_cast<std::uint32_t>(t[k]));
  }
  put_le<std::uint64_t>(os, step);
  if (!os) throw DataError("checkpoint write failed");
}

void save_checkpoint(const std::string& path, const ParameterSet<float>& params, std::uint64_t step) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw DataError("cannot open checkpoint for writing: " + path);
  save_checkpoint(os, params, step);
}

Checkpoint load_checkpoint(std::istream& is) {
  char magic[4];
  if (!is.read(magic, 4) || std::memcmp(magic, kCheckpointMagic, 4) != 0)
    throw DataError("not a checkpoint: missing RZSN magic bytes");
  const auto version = get_le<std::uint32_t>(is, "version");
  if (version != kCheckpointVersion) throw DataError("unsupported RZSN checkpoint version " + std::to_string(version));

  // Records run until exactly 8 bytes (the step counter) remain.
  const std::streampos body = is.tellg();
  is.seekg(0, std::ios::end);
  const std::streamoff total = is.tellg() - body;
  is.seekg(body);
  if (total < 8) throw DataError("checkpoint truncated: missing step counter");
  const std::streamoff records_end = static_cast<std::streamoff>(body) + total - 8;

  Checkpoint ck;
  while (static_cast<std::streamoff>(is.tellg()) < records_end) {
    const auto len = get_le<std::uint16_t>(is, "name length");
    std::string name(len, '\0');
    if (!is.read(name.data(), len)) throw DataError("checkpoint truncated in tensor name");
    const int rank = static_cast<unsigned char>(get_le<std::uint8_t>(is, "rank"));
    if (rank > Shape::kMaxRank) throw DataError("tensor '" + name + "' has rank " + std::to_string(rank));
    std::array<Index, Shape::kMaxRank> dims{};
    for (int d = 0; d < rank; ++d) dims[d] = get_le<std::uint32_t>(is, "dimension");
    Tensor<float> t(Shape(std::span<const Index>(dims.data(), rank)));
    for (Index k = 0; k < t.size(); ++k) t[k] = std::bit_cast<float>(get_le<std::uint32_t>(is, "tensor data"));
    if (static_cast<std::streamoff>(is.tellg()) > records_end)
      throw DataError("checkpoint truncated in tensor '" + name + "'");
    ck.params.add(std::move(name), std::move(t));
  }
  ck.step = get_le<std::uint64_t>(is, "step counter");
  return ck;
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open checkpoint: " + path);
  return load_checkpoint(is);
}

}  // namespace rsnn
