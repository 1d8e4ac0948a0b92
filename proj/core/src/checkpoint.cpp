#include "sfg/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <limits>

#include "sfg/errors.hpp"

namespace sfg {

namespace {

constexpr char kMagic[4] = {'S', 'F', 'G', 'E'};
constexpr std::uint32_t kMaxRank = 8;
constexpr std::uint32_t kMaxNameLength = 4096;

template <typename U>
void put_le(std::ostream& out, U value) {
  unsigned char bytes[sizeof(U)];
  for (std::size_t i = 0; i < sizeof(U); ++i) bytes[i] = static_cast<unsigned char>(value >> (8 * i));
  out.write(reinterpret_cast<const char*>(bytes), sizeof(U));
}

template <typename U>
U get_le(std::istream& in) {
  unsigned char bytes[sizeof(U)];
  if (!in.read(reinterpret_cast<char*>(bytes), sizeof(U))) throw FormatError("truncated tensor file");
  U value = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) value |= static_cast<U>(bytes[i]) << (8 * i);
  return value;
}

}  // namespace

void write_tensors(std::ostream& out, const ParamSet& tensors) {
  out.write(kMagic, 4);
  put_le<std::uint32_t>(out, kCheckpointVersion);
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(tensors.size()));
  for (std::size_t i = 0; i < tensors.size(); ++i) {
    const std::string& name = tensors.name(i);
    const Tensor& t = tensors.tensor(i);
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(t.rank()));
    for (std::size_t d : t.shape()) put_le<std::uint64_t>(out, d);
    for (double v : t.values()) put_le<std::uint64_t>(out, std::bit_cast<std::uint64_t>(v));
  }
  if (!out) throw FormatError("failed writing tensor stream");
}

ParamSet read_tensors(std::istream& in) {
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0) {
    throw FormatError("not an SFGE tensor file (bad magic)");
  }
  const auto version = get_le<std::uint32_t>(in);
  if (version != kCheckpointVersion) {
    throw FormatError("unsupported SFGE version " + std::to_string(version));
  }
  const auto count = get_le<std::uint32_t>(in);
  ParamSet out;
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto name_len = get_le<std::uint32_t>(in);
    if (name_len > kMaxNameLength) throw FormatError("tensor name too long");
    std::string name(name_len, '\0');
    if (!in.read(name.data(), name_len)) throw FormatError("truncated tensor name");
    const auto rank = get_le<std::uint32_t>(in);
    if (rank > kMaxRank) throw FormatError("tensor rank too large in " + name);
    std::vector<std::size_t> shape(rank);
    std::uint64_t count_elems = 1;
    for (auto& d : shape) {
      const auto dim = get_le<std::uint64_t>(in);
      if (dim != 0 && count_elems > std::numeric_limits<std::uint32_t>::max() / dim) {
        throw FormatError("tensor too large: " + name);
      }
      d = static_cast<std::size_t>(dim);
      count_elems *= dim;
    }
    std::vector<double> data(count_elems);
    for (double& v : data) v = std::bit_cast<double>(get_le<std::uint64_t>(in));
    out.add(std::move(name), Tensor(std::move(shape), std::move(data)));
  }
  return out;
}

void save_tensors(const std::filesystem::path& path, const ParamSet& tensors) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot open for writing: " + path.string());
  write_tensors(out, tensors);
}

ParamSet load_tensors(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open: " + path.string());
  return read_tensors(in);
}

}  // namespace sfg
