#include "omniscan/harness/synth.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numbers>
#include <random>
#include <sstream>
#include <stdexcept>

namespace omniscan::harness {

const std::array<FaceParams, kClassCount> kExpressionPrototypes{{
    {-0.50, 28, 0.30, 0.00, 0.00},   // Anger
    {-0.15, 12, 0.12, 0.35, -0.05},  // Disgust
    {-0.35, -22, 0.95, 0.55, 0.12},  // Fear
    {0.80, 0, 0.45, 0.00, 0.00},     // Happiness
    {-0.80, -25, 0.40, 0.00, 0.00},  // Sadness
    {0.00, -5, 1.00, 1.00, 0.20},    // Surprise
    {0.00, 0, 0.55, 0.00, 0.00},     // Neutral
}};

namespace {

// Engine-only draws so the corpus does not depend on the standard library's distributions.
class Draw {
 public:
  explicit Draw(std::uint64_t seed) : rng_(seed) {}
  double uniform() { return static_cast<double>(rng_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  double normal() {
    const double u1 = std::max(uniform(), 1e-300), u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

 private:
  std::mt19937_64 rng_;
};

std::uint64_t sample_seed(std::uint64_t seed, std::size_t index) {
  std::uint64_t z = seed * 0x9E3779B97F4A7C15ull + index + 1;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

struct Canvas {
  std::size_t size;
  std::vector<double> px;  // RGB in [0, 1]
  void blend(std::size_t x, std::size_t y, const std::array<double, 3>& c, double alpha) {
    if (alpha <= 0) return;
    alpha = std::min(alpha, 1.0);
    double* p = &px[(y * size + x) * 3];
    for (int k = 0; k < 3; ++k) p[k] = p[k] * (1 - alpha) + c[k] * alpha;
  }
};

double segment_distance(double px, double py, double ax, double ay, double bx, double by) {
  const double vx = bx - ax, vy = by - ay;
  const double len2 = vx * vx + vy * vy;
  const double t = len2 > 0 ? std::clamp(((px - ax) * vx + (py - ay) * vy) / len2, 0.0, 1.0) : 0.0;
  return std::hypot(px - ax - t * vx, py - ay - t * vy);
}

// Coverage of a filled ellipse at a pixel center, with a one-pixel soft edge.
double ellipse_alpha(double x, double y, double cx, double cy, double ax, double ay) {
  const double r = std::hypot((x - cx) / ax, (y - cy) / ay);
  return std::clamp((1.0 - r) * std::min(ax, ay) + 0.5, 0.0, 1.0);
}

}  // namespace

void SynthSpec::validate() const {
  auto bad = [](const std::string& f) { throw std::invalid_argument("synth spec: invalid " + f); };
  if (image_size < 32) bad("image_size (need >= 32)");
  if (class_count == 0 || class_count > kClassCount) bad("class_count");
  if (count == 0) bad("count");
  if (!(noise >= 0 && noise <= 0.5)) bad("noise");
  if (!(jitter >= 0 && jitter <= 1)) bad("jitter");
  if (!(min_face > 0.05 && min_face <= max_face && max_face <= 0.8)) bad("min_face/max_face");
  if (!(param_jitter >= 0)) bad("param_jitter");
  if (!(val_fraction >= 0 && val_fraction < 1)) bad("val_fraction");
}

SynthSample render_sample(const SynthSpec& spec, std::size_t index) {
  Draw rng(sample_seed(spec.seed, index));
  const std::size_t S = spec.image_size;
  const std::size_t cls = index % spec.class_count;

  Canvas cv{S, std::vector<double>(S * S * 3)};
  std::array<double, 3> bg{};
  for (auto& c : bg) c = rng.uniform(0.05, 0.45);
  const double gdir = rng.uniform(0, 2 * std::numbers::pi), gamp = rng.uniform(0, 0.15);
  for (std::size_t y = 0; y < S; ++y)
    for (std::size_t x = 0; x < S; ++x) {
      const double g = gamp * ((x * std::cos(gdir) + y * std::sin(gdir)) / S);
      for (int k = 0; k < 3; ++k) cv.px[(y * S + x) * 3 + k] = bg[k] + g + spec.noise * rng.normal();
    }

  // Integer box so the manifest is exact.
  const auto fw = static_cast<std::size_t>(std::lround(rng.uniform(spec.min_face, spec.max_face) * S));
  const auto fh = std::min<std::size_t>(static_cast<std::size_t>(std::lround(fw * rng.uniform(1.12, 1.3))), S - 2);
  const double free_x = static_cast<double>(S - fw), free_y = static_cast<double>(S - fh);
  const double ux = 0.5 + spec.jitter * (rng.uniform() - 0.5), uy = 0.5 + spec.jitter * (rng.uniform() - 0.5);
  const auto x0 = static_cast<std::size_t>(std::lround(ux * free_x));
  const auto y0 = static_cast<std::size_t>(std::lround(uy * free_y));
  const double a = fw / 2.0, b = fh / 2.0, cx = x0 + a, cy = y0 + b;

  FaceParams p = kExpressionPrototypes[cls];
  const double j = spec.param_jitter;
  p.mouth_curvature += j * 0.08 * rng.normal();
  p.brow_angle += j * 4.0 * rng.normal();
  p.eye_aperture = std::clamp(p.eye_aperture + j * 0.05 * rng.normal(), 0.05, 1.1);
  p.mouth_open = std::max(0.0, p.mouth_open + j * 0.06 * rng.normal());
  p.brow_raise += j * 0.03 * rng.normal();

  const double r = rng.uniform(0.72, 0.95), g = r * rng.uniform(0.68, 0.84), bl = g * rng.uniform(0.68, 0.9);
  const std::array<double, 3> skin{r, g, bl}, ink{0.08, 0.05, 0.05}, rim{r * 0.55, g * 0.55, bl * 0.55};
  const double stroke = std::max(1.5, 0.07 * b);

  // Feature geometry in pixels.
  const double eye_y = cy - 0.15 * b, eye_dx = 0.38 * a, eye_ax = 0.2 * a;
  const double eye_ay = std::max(0.8, p.eye_aperture * 0.17 * b);
  const double brow_y = cy - (0.45 + p.brow_raise) * b;
  const double tilt = std::tan(p.brow_angle * std::numbers::pi / 180.0) * 0.22 * a;
  const double mouth_y = cy + 0.5 * b, mouth_w = 0.4 * a;
  constexpr int kMouthPoints = 17;
  std::array<std::pair<double, double>, kMouthPoints> mouth{};
  for (int i = 0; i < kMouthPoints; ++i) {
    const double u = -1.0 + 2.0 * i / (kMouthPoints - 1);
    mouth[i] = {cx + u * mouth_w, mouth_y + p.mouth_curvature * 0.22 * b * (0.5 - u * u)};
  }

  for (std::size_t y = y0; y < y0 + fh; ++y)
    for (std::size_t x = x0; x < x0 + fw; ++x) {
      const double px = x + 0.5, py = y + 0.5;
      const double face = ellipse_alpha(px, py, cx, cy, a, b);
      if (face <= 0) continue;
      cv.blend(x, y, skin, face);
      const double edge = std::abs(std::hypot((px - cx) / a, (py - cy) / b) - 1.0) * std::min(a, b);
      cv.blend(x, y, rim, std::clamp(1.0 - edge, 0.0, 1.0) * face);
      for (double side : {-1.0, 1.0}) {
        cv.blend(x, y, ink, ellipse_alpha(px, py, cx + side * eye_dx, eye_y, eye_ax, eye_ay));
        const double d = segment_distance(px, py, cx + side * 0.15 * a, brow_y + tilt, cx + side * 0.62 * a,
                                          brow_y - tilt);
        cv.blend(x, y, ink, stroke / 2 - d + 0.5);
      }
      double md = 1e9;
      for (int i = 0; i + 1 < kMouthPoints; ++i)
        md = std::min(md, segment_distance(px, py, mouth[i].first, mouth[i].second, mouth[i + 1].first,
                                           mouth[i + 1].second));
      cv.blend(x, y, ink, stroke / 2 - md + 0.5);
      if (p.mouth_open * 0.16 * b >= 1.0)
        cv.blend(x, y, ink, ellipse_alpha(px, py, cx, mouth_y + 0.04 * b, 0.22 * a, p.mouth_open * 0.16 * b));
    }

  SynthSample s;
  s.image = Image(S, S);
  for (std::size_t i = 0; i < S * S * 3; ++i)
    s.image.rgb[i] = static_cast<std::uint8_t>(std::lround(std::clamp(cv.px[i], 0.0, 1.0) * 255.0));
  s.truth = {cls, {static_cast<double>(x0), static_cast<double>(y0), static_cast<double>(x0 + fw),
                   static_cast<double>(y0 + fh)}};
  return s;
}

SynthSummary generate_synth(const SynthSpec& spec, const std::filesystem::path& out) {
  spec.validate();
  std::filesystem::create_directories(out / "images");
  const std::size_t K = spec.class_count;
  SynthSummary summary;
  summary.per_class.assign(K, 0);
  summary.train_per_class.assign(K, 0);
  summary.val_per_class.assign(K, 0);

  std::vector<std::vector<std::size_t>> by_class(K);
  for (std::size_t i = 0; i < spec.count; ++i) by_class[i % K].push_back(i);
  std::vector<bool> is_val(spec.count, false);
  Draw split(sample_seed(spec.seed, ~std::size_t{0}));
  for (std::size_t c = 0; c < K; ++c) {
    auto& ids = by_class[c];
    for (std::size_t i = ids.size(); i > 1; --i)
      std::swap(ids[i - 1], ids[static_cast<std::size_t>(split.uniform() * i)]);
    const auto nval = static_cast<std::size_t>(std::lround(spec.val_fraction * ids.size()));
    for (std::size_t i = 0; i < nval; ++i) is_val[ids[i]] = true;
  }

  std::ofstream train(out / "train.txt"), val(out / "val.txt"), classes(out / "classes.txt");
  if (!train || !val || !classes) throw std::runtime_error("cannot write manifests under " + out.string());
  for (std::size_t c = 0; c < K; ++c) classes << kClassNames[c] << '\n';
  for (std::size_t i = 0; i < spec.count; ++i) {
    const auto s = render_sample(spec, i);
    std::ostringstream name;
    name << "images/" << std::setw(5) << std::setfill('0') << i << ".ppm";
    write_ppm(out / name.str(), s.image);
    const auto& bx = s.truth.box;
    auto& os = is_val[i] ? val : train;
    os << name.str() << ' ' << s.truth.class_id << ' ' << bx.x0 << ' ' << bx.y0 << ' ' << bx.x1 << ' ' << bx.y1 << '\n';
    ++summary.per_class[s.truth.class_id];
    ++(is_val[i] ? summary.val_per_class : summary.train_per_class)[s.truth.class_id];
  }
  return summary;
}

}  // namespace omniscan::harness
