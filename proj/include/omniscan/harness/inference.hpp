#pragma once

#include <filesystem>

#include "omniscan/harness/dataset.hpp"
#include "omniscan/metrics/evaluation.hpp"
#include "omniscan/net/decode.hpp"

namespace omniscan::harness {

/// Decode threshold used when collecting predictions for AP.
inline constexpr double kEvalDecodeThreshold = 1e-3;

/// Batched inference; detections in letterboxed pixels.
std::vector<std::vector<net::Detection>> predict(const net::Detector<float>& model,
                                                 const std::vector<AnnotatedImage>& images, double conf_threshold,
                                                 std::size_t batch_size = 16);

/// Predictions at kEvalDecodeThreshold against the letterboxed truths; precision,
/// recall and F1 use the model's conf_threshold.
metrics::EvalReport evaluate_model(const net::Detector<float>& model, const std::vector<AnnotatedImage>& images,
                                   std::size_t batch_size = 16);

/// sigmoid(obj) * sigmoid(cls[class_id]) per level, each bilinearly upsampled to
/// the input size, max-fused, then min-max normalized; a constant field becomes
/// 0.5 everywhere. Row-major, input_size x input_size.
std::vector<float> class_heatmap(const std::vector<net::LevelMaps<float>>& levels, std::size_t image,
                                 std::size_t class_id, std::size_t input_size);

struct DetectResult {
  std::vector<net::Detection> detections;  // original image pixels
  std::vector<float> heatmap;              // input_size^2, empty unless requested
  std::size_t heatmap_class = 0;
};

/// Letterbox, forward, decode at conf_threshold, map boxes back. The heatmap
/// class is the top detection's, or the class with the highest cell score when
/// nothing passes the threshold.
DetectResult detect_image(const net::Detector<float>& model, const Image& image, double conf_threshold,
                          bool with_heatmap);

/// Writes heatmap.pgm and heatmap.csv (one row per image row) into `dir`.
void write_heatmap(const std::filesystem::path& dir, const std::vector<float>& heatmap, std::size_t size);

}  // namespace omniscan::harness
