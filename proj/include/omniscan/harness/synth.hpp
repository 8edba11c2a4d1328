#pragma once

#include <array>
#include <cstdint>
#include <filesystem>

#include "omniscan/harness/dataset.hpp"

namespace omniscan::harness {

/// Geometry of one expression; `brow_angle` in degrees, positive pulls the
/// inner brow ends down. Curvature > 0 lifts the mouth corners.
struct FaceParams {
  double mouth_curvature = 0, brow_angle = 0, eye_aperture = 0.5, mouth_open = 0, brow_raise = 0;
};

/// Class prototypes, indexed like kClassNames.
extern const std::array<FaceParams, kClassCount> kExpressionPrototypes;

struct SynthSpec {
  std::size_t image_size = 160;
  std::size_t count = 700;
  std::size_t class_count = kClassCount;
  double noise = 0.04;       // stddev of per-pixel background noise, [0, 1] units
  double jitter = 1.0;       // fraction of the free placement range the face center may use
  double min_face = 0.35, max_face = 0.75;  // face width as a fraction of the image
  double param_jitter = 1.0;  // scales the per-instance expression noise
  double val_fraction = 0.15;
  std::uint64_t seed = 0;

  /// Throws std::invalid_argument naming the offending field.
  void validate() const;
};

struct SynthSample {
  Image image;
  metrics::GroundTruth truth;
};

/// Sample i of the corpus; class i % class_count. Depends only on (spec, i).
SynthSample render_sample(const SynthSpec& spec, std::size_t index);

struct SynthSummary {
  std::vector<std::size_t> per_class, train_per_class, val_per_class;
};

/// Writes images/NNNNN.ppm, train.txt, val.txt (manifests) and classes.txt under
/// `out`. The validation split takes round(val_fraction * n_c) of each class.
SynthSummary generate_synth(const SynthSpec& spec, const std::filesystem::path& out);

}  // namespace omniscan::harness
