#pragma once

#include <array>
#include <filesystem>
#include <iosfwd>

#include "omniscan/numerics/tensor.hpp"

namespace omniscan {

// Record layout, little-endian: 8-byte magic, u32 rank, rank x u32 extents,
// then product(extents) f32 values in row-major order.
inline constexpr std::array<char, 8> kTensorMagic{'O', 'M', 'N', 'I', 'T', 'N', 'S', '1'};

class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

void write_tensor(std::ostream& os, const Tensor<float>& t);
Tensor<float> read_tensor(std::istream& is);

void save_tensor(const std::filesystem::path& path, const Tensor<float>& t);
Tensor<float> load_tensor(const std::filesystem::path& path);

}  // namespace omniscan
