#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "omniscan/metrics/box.hpp"
#include "omniscan/numerics/tensor.hpp"

namespace omniscan::harness {

class ImageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// 8-bit RGB raster, row-major, interleaved.
struct Image {
  std::size_t width = 0, height = 0;
  std::vector<std::uint8_t> rgb;

  Image() = default;
  Image(std::size_t w, std::size_t h, std::uint8_t fill = 0) : width(w), height(h), rgb(w * h * 3, fill) {}
  std::uint8_t* at(std::size_t x, std::size_t y) { return &rgb[(y * width + x) * 3]; }
  const std::uint8_t* at(std::size_t x, std::size_t y) const { return &rgb[(y * width + x) * 3]; }
};

/// Binary PPM (P6, maxval 255). Comments in the header are skipped.
Image read_ppm(const std::filesystem::path& path);
void write_ppm(const std::filesystem::path& path, const Image& image);
/// Binary PGM (P5) from values in [0, 1], row-major.
void write_pgm(const std::filesystem::path& path, const std::vector<float>& values, std::size_t width,
               std::size_t height);

/// Aspect-preserving resize into a size x size canvas, centered, gray padding.
struct Letterbox {
  double scale_x = 1, scale_y = 1;
  double pad_x = 0, pad_y = 0;

  metrics::Box forward(const metrics::Box& b) const;
  metrics::Box inverse(const metrics::Box& b) const;
};

inline constexpr std::uint8_t kPadValue = 128;

Letterbox letterbox_transform(std::size_t width, std::size_t height, std::size_t size);
/// Bilinear resample (half-pixel centers) into the letterboxed canvas.
Image letterbox(const Image& image, std::size_t size, Letterbox* transform = nullptr);

/// Writes one image into row `offset` of a (B, 3, H, W) tensor, scaled to [0, 1].
void fill_batch(Tensor<float>& batch, std::size_t offset, const Image& image);

}  // namespace omniscan::harness
