#pragma once

#include <filesystem>
#include <istream>
#include <stdexcept>
#include <string>
#include <vector>

#include "omniscan/harness/image.hpp"
#include "omniscan/metrics/box.hpp"

namespace omniscan::harness {

/// Manifest problems; the message names the file and line.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr std::size_t kClassCount = 7;
inline const std::vector<std::string> kClassNames{"Anger",   "Disgust",  "Fear",   "Happiness",
                                                  "Sadness", "Surprise", "Neutral"};

/// One manifest line: `path class_id x_min y_min x_max y_max`.
struct ManifestRecord {
  std::string path;
  metrics::GroundTruth truth;
  std::size_t line = 0;
};

/// Blank lines and lines starting with '#' are skipped.
std::vector<ManifestRecord> parse_manifest(std::istream& is, const std::string& source,
                                           std::size_t class_count = kClassCount);

struct AnnotatedImage {
  std::filesystem::path path;
  Image image;  // letterboxed to the input size
  Letterbox transform;
  std::size_t original_width = 0, original_height = 0;
  std::vector<metrics::GroundTruth> truths;  // in letterboxed pixels
};

/// Reads the manifest, groups records by image (first-appearance order), checks
/// boxes against the image bounds, and letterboxes. Relative paths resolve
/// against the manifest's directory.
std::vector<AnnotatedImage> load_dataset(const std::filesystem::path& manifest, std::size_t input_size,
                                         std::size_t class_count = kClassCount);

}  // namespace omniscan::harness
