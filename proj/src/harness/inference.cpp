#include "omniscan/harness/inference.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

namespace omniscan::harness {

namespace {

double sigmoid(double v) { return 1.0 / (1.0 + std::exp(-v)); }

std::vector<net::LevelMaps<float>> run(const net::Detector<float>& model, const Tensor<float>& images) {
  NoGradGuard guard;
  return net::level_maps(model.forward(constant(images)));
}

}  // namespace

std::vector<std::vector<net::Detection>> predict(const net::Detector<float>& model,
                                                 const std::vector<AnnotatedImage>& images, double conf_threshold,
                                                 std::size_t batch_size) {
  const std::size_t S = model.config().input_size;
  net::DecodeOptions opt;
  opt.conf_threshold = conf_threshold;
  opt.nms_iou = model.config().nms_iou;
  opt.image_width = opt.image_height = static_cast<double>(S);
  std::vector<std::vector<net::Detection>> out;
  out.reserve(images.size());
  for (std::size_t first = 0; first < images.size(); first += batch_size) {
    const std::size_t n = std::min(batch_size, images.size() - first);
    Tensor<float> batch({n, 3, S, S});
    for (std::size_t j = 0; j < n; ++j) fill_batch(batch, j, images[first + j].image);
    for (auto& dets : net::decode(run(model, batch), opt)) out.push_back(std::move(dets));
  }
  return out;
}

metrics::EvalReport evaluate_model(const net::Detector<float>& model, const std::vector<AnnotatedImage>& images,
                                   std::size_t batch_size) {
  const auto preds = predict(model, images, kEvalDecodeThreshold, batch_size);
  std::vector<metrics::ImageResult> results(images.size());
  for (std::size_t i = 0; i < images.size(); ++i) results[i] = {preds[i], images[i].truths};
  const auto& names = kClassNames;
  std::vector<std::string> classes;
  for (std::size_t c = 0; c < model.config().class_count; ++c)
    classes.push_back(c < names.size() ? names[c] : "class" + std::to_string(c));
  metrics::EvalOptions opt;
  opt.conf_threshold = model.config().conf_threshold;
  return metrics::evaluate(results, classes, opt);
}

std::vector<float> class_heatmap(const std::vector<net::LevelMaps<float>>& levels, std::size_t image,
                                 std::size_t class_id, std::size_t input_size) {
  const std::size_t S = input_size;
  std::vector<float> fused(S * S, 0.f);
  for (const auto& l : levels) {
    const std::size_t K = l.cls.dim(1), H = l.cls.dim(2), W = l.cls.dim(3);
    if (class_id >= K) throw std::invalid_argument("class_heatmap: class id out of range");
    std::vector<double> grid(H * W);
    for (std::size_t i = 0; i < H * W; ++i)
      grid[i] = sigmoid(l.obj[image * H * W + i]) * sigmoid(l.cls[(image * K + class_id) * H * W + i]);
    const double scale = static_cast<double>(l.stride);
    for (std::size_t y = 0; y < S; ++y) {
      const double sy = std::clamp((y + 0.5) / scale - 0.5, 0.0, H - 1.0);
      const auto y0 = static_cast<std::size_t>(sy);
      const auto y1 = std::min(y0 + 1, H - 1);
      const double fy = sy - y0;
      for (std::size_t x = 0; x < S; ++x) {
        const double sx = std::clamp((x + 0.5) / scale - 0.5, 0.0, W - 1.0);
        const auto x0 = static_cast<std::size_t>(sx);
        const auto x1 = std::min(x0 + 1, W - 1);
        const double fx = sx - x0;
        const double v = (grid[y0 * W + x0] * (1 - fx) + grid[y0 * W + x1] * fx) * (1 - fy) +
                         (grid[y1 * W + x0] * (1 - fx) + grid[y1 * W + x1] * fx) * fy;
        fused[y * S + x] = std::max(fused[y * S + x], static_cast<float>(v));
      }
    }
  }
  const auto [lo, hi] = std::minmax_element(fused.begin(), fused.end());
  const float min = *lo, range = *hi - *lo;
  for (auto& v : fused) v = range > 0 ? (v - min) / range : 0.5f;
  return fused;
}

DetectResult detect_image(const net::Detector<float>& model, const Image& image, double conf_threshold,
                          bool with_heatmap) {
  const std::size_t S = model.config().input_size;
  Letterbox t;
  const auto boxed = letterbox(image, S, &t);
  Tensor<float> batch({1, 3, S, S});
  fill_batch(batch, 0, boxed);
  const auto levels = run(model, batch);
  net::DecodeOptions opt;
  opt.conf_threshold = conf_threshold;
  opt.nms_iou = model.config().nms_iou;
  opt.image_width = opt.image_height = static_cast<double>(S);

  DetectResult r;
  const auto decoded = net::decode(levels, opt);
  for (const auto& d : decoded[0]) {
    auto box = metrics::clip(t.inverse(d.box), static_cast<double>(image.width), static_cast<double>(image.height));
    if (box.valid()) r.detections.push_back({d.class_id, d.score, box});
  }
  if (with_heatmap) {
    if (!r.detections.empty()) {
      r.heatmap_class = r.detections.front().class_id;
    } else {
      double best = -1;
      for (const auto& l : levels) {
        const std::size_t K = l.cls.dim(1), HW = l.cls.dim(2) * l.cls.dim(3);
        for (std::size_t k = 0; k < K; ++k)
          for (std::size_t i = 0; i < HW; ++i) {
            const double s = sigmoid(l.obj[i]) * sigmoid(l.cls[k * HW + i]);
            if (s > best) best = s, r.heatmap_class = k;
          }
      }
    }
    r.heatmap = class_heatmap(levels, 0, r.heatmap_class, S);
  }
  return r;
}

void write_heatmap(const std::filesystem::path& dir, const std::vector<float>& heatmap, std::size_t size) {
  std::filesystem::create_directories(dir);
  write_pgm(dir / "heatmap.pgm", heatmap, size, size);
  std::ofstream os(dir / "heatmap.csv");
  if (!os) throw ImageError("cannot write " + (dir / "heatmap.csv").string());
  os.precision(6);
  for (std::size_t y = 0; y < size; ++y) {
    for (std::size_t x = 0; x < size; ++x) os << (x ? "," : "") << heatmap[y * size + x];
    os << '\n';
  }
}

}  // namespace omniscan::harness
