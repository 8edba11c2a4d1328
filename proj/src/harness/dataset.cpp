#include "omniscan/harness/dataset.hpp"

#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

namespace omniscan::harness {

namespace {

[[noreturn]] void fail(const std::string& source, std::size_t line, const std::string& what) {
  throw DataError(source + ":" + std::to_string(line) + ": " + what);
}

}  // namespace

std::vector<ManifestRecord> parse_manifest(std::istream& is, const std::string& source, std::size_t class_count) {
  std::vector<ManifestRecord> out;
  std::string text;
  std::size_t line = 0;
  while (std::getline(is, text)) {
    ++line;
    const auto first = text.find_first_not_of(" \t\r");
    if (first == std::string::npos || text[first] == '#') continue;
    std::istringstream ls(text);
    ManifestRecord r;
    r.line = line;
    long long cls = 0;
    auto& b = r.truth.box;
    if (!(ls >> r.path >> cls >> b.x0 >> b.y0 >> b.x1 >> b.y1))
      fail(source, line, "expected `path class_id x_min y_min x_max y_max`");
    std::string extra;
    if (ls >> extra) fail(source, line, "unexpected trailing field '" + extra + "'");
    if (cls < 0 || static_cast<std::size_t>(cls) >= class_count)
      fail(source, line, "class id " + std::to_string(cls) + " outside [0, " + std::to_string(class_count) + ")");
    if (!std::isfinite(b.x0) || !std::isfinite(b.y0) || !std::isfinite(b.x1) || !std::isfinite(b.y1) || !b.valid())
      fail(source, line, "box must satisfy x_min < x_max and y_min < y_max");
    r.truth.class_id = static_cast<std::size_t>(cls);
    out.push_back(std::move(r));
  }
  return out;
}

std::vector<AnnotatedImage> load_dataset(const std::filesystem::path& manifest, std::size_t input_size,
                                         std::size_t class_count) {
  std::ifstream is(manifest);
  if (!is) throw DataError("cannot open manifest " + manifest.string());
  const auto records = parse_manifest(is, manifest.string(), class_count);
  const auto base = manifest.parent_path();

  std::vector<AnnotatedImage> out;
  std::map<std::string, std::size_t> index;
  for (const auto& r : records) {
    auto it = index.find(r.path);
    if (it == index.end()) {
      AnnotatedImage a;
      a.path = std::filesystem::path(r.path).is_absolute() ? std::filesystem::path(r.path) : base / r.path;
      Image raw;
      try {
        raw = read_ppm(a.path);
      } catch (const ImageError& e) {
        fail(manifest.string(), r.line, e.what());
      }
      a.original_width = raw.width;
      a.original_height = raw.height;
      a.image = letterbox(raw, input_size, &a.transform);
      it = index.emplace(r.path, out.size()).first;
      out.push_back(std::move(a));
    }
    auto& a = out[it->second];
    const auto& b = r.truth.box;
    if (b.x0 < 0 || b.y0 < 0 || b.x1 > static_cast<double>(a.original_width) ||
        b.y1 > static_cast<double>(a.original_height))
      fail(manifest.string(), r.line,
           "box outside the " + std::to_string(a.original_width) + "x" + std::to_string(a.original_height) + " image");
    a.truths.push_back({r.truth.class_id, a.transform.forward(b)});
  }
  return out;
}

}  // namespace omniscan::harness
