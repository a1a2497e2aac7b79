#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace finprint {

/// Dense row-major tensor of doubles. `dims` may be empty only for a scalar
/// (one element).
struct Tensor {
  std::vector<std::uint32_t> dims;
  std::vector<double> data;

  std::size_t element_count() const;
  bool operator==(const Tensor&) const = default;
};

// FNT1 layout: "FNT1", u32 rank, u32 per dim, f64 values; all little-endian.

void write_tensor(const std::string& path, std::span<const std::uint32_t> dims,
                  std::span<const double> data);
void write_tensor(const std::string& path, const Tensor& t);
Tensor read_tensor(const std::string& path);

// Stream variants, used when several blobs share one file. `source` names the
// stream in error messages.
void write_tensor(std::ostream& out, std::span<const std::uint32_t> dims,
                  std::span<const double> data);
Tensor read_tensor(std::istream& in, const std::string& source);

std::size_t tensor_file_size(std::span<const std::uint32_t> dims);

}  // namespace finprint
