#include "finprint/core/tensor_io.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <functional>
#include <numeric>

#include "finprint/core/error.hpp"

namespace finprint {
namespace {

constexpr std::array<char, 4> kMagic = {'F', 'N', 'T', '1'};
constexpr std::uint32_t kMaxRank = 16;
constexpr std::size_t kMaxElements = std::size_t{1} << 32;

static_assert(std::endian::native == std::endian::little ||
                  std::endian::native == std::endian::big,
              "mixed-endian platforms are not supported");

template <typename T>
void put_le(std::ostream& out, T value) {
  std::array<char, sizeof(T)> bytes;
  std::memcpy(bytes.data(), &value, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) {
    std::reverse(bytes.begin(), bytes.end());
  }
  out.write(bytes.data(), bytes.size());
}

template <typename T>
bool get_le(std::istream& in, T& value) {
  std::array<char, sizeof(T)> bytes;
  if (!in.read(bytes.data(), bytes.size())) return false;
  if constexpr (std::endian::native == std::endian::big) {
    std::reverse(bytes.begin(), bytes.end());
  }
  std::memcpy(&value, bytes.data(), sizeof(T));
  return true;
}

std::size_t product(std::span<const std::uint32_t> dims) {
  return std::accumulate(dims.begin(), dims.end(), std::size_t{1},
                         std::multiplies<>());
}

}  // namespace

std::size_t Tensor::element_count() const { return product(dims); }

std::size_t tensor_file_size(std::span<const std::uint32_t> dims) {
  return 4 + 4 + 4 * dims.size() + 8 * product(dims);
}

void write_tensor(std::ostream& out, std::span<const std::uint32_t> dims,
                  std::span<const double> data) {
  if (product(dims) != data.size()) {
    throw ContractError("write_tensor: dims product " +
                        std::to_string(product(dims)) + " != data length " +
                        std::to_string(data.size()));
  }
  out.write(kMagic.data(), kMagic.size());
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(dims.size()));
  for (auto d : dims) put_le<std::uint32_t>(out, d);
  if constexpr (std::endian::native == std::endian::little) {
    out.write(reinterpret_cast<const char*>(data.data()),
              static_cast<std::streamsize>(data.size() * sizeof(double)));
  } else {
    for (double v : data) put_le<double>(out, v);
  }
}

void write_tensor(const std::string& path, std::span<const std::uint32_t> dims,
                  std::span<const double> data) {
  if (product(dims) != data.size()) {
    throw ContractError("write_tensor " + path + ": dims product " +
                        std::to_string(product(dims)) + " != data length " +
                        std::to_string(data.size()));
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError(path, "cannot open for writing");
  write_tensor(out, dims, data);
  out.flush();
  if (!out) throw IoError(path, "write failed");
}

void write_tensor(const std::string& path, const Tensor& t) {
  write_tensor(path, t.dims, t.data);
}

Tensor read_tensor(std::istream& in, const std::string& source) {
  std::array<char, 4> magic{};
  if (!in.read(magic.data(), magic.size())) {
    throw FormatError(source, "truncated tensor header");
  }
  if (magic != kMagic) throw FormatError(source, "bad tensor magic");
  std::uint32_t rank = 0;
  if (!get_le(in, rank)) throw FormatError(source, "truncated tensor rank");
  if (rank > kMaxRank) {
    throw FormatError(source, "tensor rank " + std::to_string(rank) +
                                  " exceeds " + std::to_string(kMaxRank));
  }
  Tensor t;
  t.dims.resize(rank);
  for (auto& d : t.dims) {
    if (!get_le(in, d)) throw FormatError(source, "truncated tensor dims");
  }
  const std::size_t n = product(t.dims);
  if (n > kMaxElements) throw FormatError(source, "tensor too large");
  t.data.resize(n);
  if constexpr (std::endian::native == std::endian::little) {
    if (!in.read(reinterpret_cast<char*>(t.data.data()),
                 static_cast<std::streamsize>(n * sizeof(double)))) {
      throw FormatError(source, "truncated tensor data");
    }
  } else {
    for (auto& v : t.data) {
      if (!get_le(in, v)) throw FormatError(source, "truncated tensor data");
    }
  }
  return t;
}

Tensor read_tensor(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(path, "cannot open for reading");
  return read_tensor(in, path);
}

}  // namespace finprint
