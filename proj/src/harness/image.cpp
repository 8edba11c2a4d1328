#include "omniscan/harness/image.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

namespace omniscan::harness {

namespace {

std::size_t header_number(std::istream& is, const std::filesystem::path& path) {
  int c = is.get();
  while (is && (std::isspace(c) || c == '#')) {
    if (c == '#')
      while (is && c != '\n') c = is.get();
    c = is.get();
  }
  std::size_t v = 0;
  bool any = false;
  while (is && std::isdigit(c)) {
    v = v * 10 + static_cast<std::size_t>(c - '0');
    any = true;
    c = is.get();
  }
  if (!any) throw ImageError(path.string() + ": malformed PPM header");
  return v;
}

}  // namespace

Image read_ppm(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ImageError("cannot open image " + path.string());
  char magic[2];
  if (!is.read(magic, 2) || magic[0] != 'P' || magic[1] != '6') throw ImageError(path.string() + ": not a binary PPM");
  const auto w = header_number(is, path), h = header_number(is, path), maxval = header_number(is, path);
  if (w == 0 || h == 0 || w > 16384 || h > 16384) throw ImageError(path.string() + ": bad dimensions");
  if (maxval != 255) throw ImageError(path.string() + ": only maxval 255 is supported");
  Image img(w, h);
  if (!is.read(reinterpret_cast<char*>(img.rgb.data()), static_cast<std::streamsize>(img.rgb.size())))
    throw ImageError(path.string() + ": truncated pixel data");
  return img;
}

void write_ppm(const std::filesystem::path& path, const Image& image) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw ImageError("cannot write " + path.string());
  os << "P6\n" << image.width << ' ' << image.height << "\n255\n";
  os.write(reinterpret_cast<const char*>(image.rgb.data()), static_cast<std::streamsize>(image.rgb.size()));
  if (!os) throw ImageError("failed writing " + path.string());
}

void write_pgm(const std::filesystem::path& path, const std::vector<float>& values, std::size_t width,
               std::size_t height) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw ImageError("cannot write " + path.string());
  os << "P5\n" << width << ' ' << height << "\n255\n";
  std::vector<std::uint8_t> bytes(width * height);
  for (std::size_t i = 0; i < bytes.size(); ++i)
    bytes[i] = static_cast<std::uint8_t>(std::lround(std::clamp(values[i], 0.f, 1.f) * 255.f));
  os.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

metrics::Box Letterbox::forward(const metrics::Box& b) const {
  return {b.x0 * scale_x + pad_x, b.y0 * scale_y + pad_y, b.x1 * scale_x + pad_x, b.y1 * scale_y + pad_y};
}

metrics::Box Letterbox::inverse(const metrics::Box& b) const {
  return {(b.x0 - pad_x) / scale_x, (b.y0 - pad_y) / scale_y, (b.x1 - pad_x) / scale_x, (b.y1 - pad_y) / scale_y};
}

Letterbox letterbox_transform(std::size_t width, std::size_t height, std::size_t size) {
  const double s = std::min(static_cast<double>(size) / width, static_cast<double>(size) / height);
  const auto nw = std::clamp<std::size_t>(static_cast<std::size_t>(std::lround(width * s)), 1, size);
  const auto nh = std::clamp<std::size_t>(static_cast<std::size_t>(std::lround(height * s)), 1, size);
  Letterbox t;
  t.scale_x = static_cast<double>(nw) / width;
  t.scale_y = static_cast<double>(nh) / height;
  t.pad_x = static_cast<double>((size - nw) / 2);
  t.pad_y = static_cast<double>((size - nh) / 2);
  return t;
}

Image letterbox(const Image& image, std::size_t size, Letterbox* transform) {
  const auto t = letterbox_transform(image.width, image.height, size);
  if (transform) *transform = t;
  Image out(size, size, kPadValue);
  const auto nw = static_cast<std::size_t>(std::lround(image.width * t.scale_x));
  const auto nh = static_cast<std::size_t>(std::lround(image.height * t.scale_y));
  const auto px = static_cast<std::size_t>(t.pad_x), py = static_cast<std::size_t>(t.pad_y);
  const bool identity = nw == image.width && nh == image.height;
  for (std::size_t y = 0; y < nh; ++y) {
    const double sy = std::clamp((y + 0.5) / t.scale_y - 0.5, 0.0, image.height - 1.0);
    const auto y0 = static_cast<std::size_t>(sy);
    const auto y1 = std::min(y0 + 1, image.height - 1);
    const double fy = sy - y0;
    for (std::size_t x = 0; x < nw; ++x) {
      auto* dst = out.at(x + px, y + py);
      if (identity) {
        std::copy_n(image.at(x, y), 3, dst);
        continue;
      }
      const double sx = std::clamp((x + 0.5) / t.scale_x - 0.5, 0.0, image.width - 1.0);
      const auto x0 = static_cast<std::size_t>(sx);
      const auto x1 = std::min(x0 + 1, image.width - 1);
      const double fx = sx - x0;
      for (std::size_t c = 0; c < 3; ++c) {
        const double top = image.at(x0, y0)[c] * (1 - fx) + image.at(x1, y0)[c] * fx;
        const double bottom = image.at(x0, y1)[c] * (1 - fx) + image.at(x1, y1)[c] * fx;
        dst[c] = static_cast<std::uint8_t>(std::lround(top * (1 - fy) + bottom * fy));
      }
    }
  }
  return out;
}

void fill_batch(Tensor<float>& batch, std::size_t offset, const Image& image) {
  const std::size_t plane = image.width * image.height;
  if (batch.dim(1) != 3 || batch.dim(2) != image.height || batch.dim(3) != image.width || offset >= batch.dim(0))
    throw ShapeError("fill_batch: image does not fit the batch tensor");
  float* dst = batch.data().data() + offset * 3 * plane;
  for (std::size_t i = 0; i < plane; ++i)
    for (std::size_t c = 0; c < 3; ++c) dst[c * plane + i] = image.rgb[i * 3 + c] / 255.f;
}

}  // namespace omniscan::harness
