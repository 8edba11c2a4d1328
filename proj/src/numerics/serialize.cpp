#include "omniscan/numerics/serialize.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

namespace omniscan {

namespace {

void put_u32(std::ostream& os, std::uint32_t v) {
  const unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                              static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t get_u32(std::istream& is) {
  unsigned char b[4];
  if (!is.read(reinterpret_cast<char*>(b), 4)) throw FormatError("tensor record truncated");
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

}  // namespace

void write_tensor(std::ostream& os, const Tensor<float>& t) {
  os.write(kTensorMagic.data(), kTensorMagic.size());
  put_u32(os, static_cast<std::uint32_t>(t.rank()));
  for (auto d : t.shape()) put_u32(os, static_cast<std::uint32_t>(d));
  for (float v : t.data()) put_u32(os, std::bit_cast<std::uint32_t>(v));
  if (!os) throw FormatError("failed writing tensor record");
}

Tensor<float> read_tensor(std::istream& is) {
  std::array<char, 8> magic{};
  if (!is.read(magic.data(), magic.size())) throw FormatError("tensor record truncated at magic");
  if (magic != kTensorMagic) throw FormatError("bad tensor magic");
  const std::uint32_t rank = get_u32(is);
  if (rank == 0 || rank > 8) throw FormatError("bad tensor rank " + std::to_string(rank));
  Shape shape(rank);
  for (auto& d : shape) {
    d = get_u32(is);
    if (d == 0) throw FormatError("zero tensor extent");
  }
  std::vector<float> data(shape_numel(shape));
  for (auto& v : data) v = std::bit_cast<float>(get_u32(is));
  return Tensor<float>(std::move(shape), std::move(data));
}

void save_tensor(const std::filesystem::path& path, const Tensor<float>& t) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw FormatError("cannot open " + path.string() + " for writing");
  write_tensor(os, t);
}

Tensor<float> load_tensor(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FormatError("cannot open " + path.string());
  return read_tensor(is);
}

}  // namespace omniscan
