#include <gtest/gtest.h>

#include <cmath>
#include <algorithm>
#include <filesystem>
#include <functional>
#include <fstream>
#include <iterator>
#include <limits>
#include <sstream>

#include "omniscan/harness/inference.hpp"
#include "omniscan/harness/synth.hpp"
#include "omniscan/harness/train.hpp"
#include "omniscan/net/checkpoint.hpp"

using namespace omniscan;
using namespace omniscan::harness;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  auto p = fs::temp_directory_path() / ("omniscan_harness_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(is), {}};
}

void write_text(const fs::path& p, const std::string& text) { std::ofstream(p) << text; }

std::string error_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const std::exception& e) {
    return e.what();
  }
  return "";
}

net::NetConfig micro() {
  auto c = net::NetConfig::tiny();
  c.input_size = 64;
  return c;
}

// Small corpus rendered at 64 px and letterboxed in memory.
std::vector<AnnotatedImage> synth_set(std::size_t count, std::uint64_t seed = 0) {
  SynthSpec spec;
  spec.image_size = 64;
  spec.seed = seed;
  std::vector<AnnotatedImage> out;
  for (std::size_t i = 0; i < count; ++i) {
    auto s = render_sample(spec, i);
    AnnotatedImage a;
    a.path = "mem" + std::to_string(i);
    a.original_width = a.original_height = 64;
    a.image = letterbox(s.image, 64, &a.transform);
    a.truths = {s.truth};
    out.push_back(std::move(a));
  }
  return out;
}

// Grayscale crop resampled to n x n, zero mean, unit norm.
std::vector<double> crop_features(const Image& img, const metrics::Box& b, std::size_t n) {
  std::vector<double> f(n * n);
  double mean = 0;
  for (std::size_t y = 0; y < n; ++y)
    for (std::size_t x = 0; x < n; ++x) {
      const auto sx = static_cast<std::size_t>(b.x0 + (x + 0.5) * b.width() / n);
      const auto sy = static_cast<std::size_t>(b.y0 + (y + 0.5) * b.height() / n);
      const auto* p = img.at(sx, sy);
      f[y * n + x] = (p[0] + p[1] + p[2]) / 765.0;
      mean += f[y * n + x];
    }
  mean /= static_cast<double>(f.size());
  double norm = 0;
  for (auto& v : f) v -= mean, norm += v * v;
  for (auto& v : f) v /= std::sqrt(norm) + 1e-12;
  return f;
}

}  // namespace

TEST(Image, PpmRoundTrip) {
  const auto dir = scratch("ppm");
  Image img(5, 3);
  for (std::size_t i = 0; i < img.rgb.size(); ++i) img.rgb[i] = static_cast<std::uint8_t>(i * 7);
  write_ppm(dir / "a.ppm", img);
  auto back = read_ppm(dir / "a.ppm");
  EXPECT_EQ(back.width, 5u);
  EXPECT_EQ(back.height, 3u);
  EXPECT_EQ(back.rgb, img.rgb);
}

TEST(Image, ReadErrors) {
  const auto dir = scratch("ppm_err");
  EXPECT_THROW(read_ppm(dir / "missing.ppm"), ImageError);
  write_text(dir / "bad.ppm", "P3\n1 1\n255\n0 0 0\n");
  EXPECT_THROW(read_ppm(dir / "bad.ppm"), ImageError);
  write_text(dir / "short.ppm", "P6\n4 4\n255\nabc");
  EXPECT_THROW(read_ppm(dir / "short.ppm"), ImageError);
  write_text(dir / "comment.ppm", std::string("P6\n# c\n1 1\n255\n") + "xyz");
  EXPECT_EQ(read_ppm(dir / "comment.ppm").rgb, (std::vector<std::uint8_t>{'x', 'y', 'z'}));
}

TEST(Letterbox, HandComputedTransform) {
  // 100 wide, 200 tall into 320: scale 1.6, content 160 x 320, 80 px bars left and right.
  const auto t = letterbox_transform(100, 200, 320);
  EXPECT_EQ(t.scale_x, 1.6);
  EXPECT_EQ(t.scale_y, 1.6);
  EXPECT_EQ(t.pad_x, 80.0);
  EXPECT_EQ(t.pad_y, 0.0);
  const auto b = t.forward({10, 20, 50, 100});
  EXPECT_DOUBLE_EQ(b.x0, 96.0);
  EXPECT_DOUBLE_EQ(b.y0, 32.0);
  EXPECT_DOUBLE_EQ(b.x1, 160.0);
  EXPECT_DOUBLE_EQ(b.y1, 160.0);
  const auto back = t.inverse(b);
  EXPECT_DOUBLE_EQ(back.x0, 10.0);
  EXPECT_DOUBLE_EQ(back.y1, 100.0);
}

TEST(Letterbox, PixelsLandInsideContentRegion) {
  Image img(100, 200);
  for (std::size_t i = 0; i < img.rgb.size(); i += 3) img.rgb[i] = 200, img.rgb[i + 1] = 10, img.rgb[i + 2] = 30;
  const auto out = letterbox(img, 320);
  ASSERT_EQ(out.width, 320u);
  EXPECT_EQ(out.at(79, 100)[0], kPadValue);
  EXPECT_EQ(out.at(80, 100)[0], 200);
  EXPECT_EQ(out.at(239, 319)[1], 10);
  EXPECT_EQ(out.at(240, 0)[2], kPadValue);
  Tensor<float> batch({2, 3, 320, 320});
  fill_batch(batch, 1, out);
  EXPECT_FLOAT_EQ(batch.at({1, 0, 100, 100}), 200.f / 255.f);
  EXPECT_EQ(batch.at({0, 0, 100, 100}), 0.f);
}

TEST(Manifest, EmptyManifestIsEmptyDataset) {
  const auto dir = scratch("empty");
  write_text(dir / "m.txt", "");
  EXPECT_TRUE(load_dataset(dir / "m.txt", 64).empty());
  write_text(dir / "c.txt", "# only a comment\n\n");
  EXPECT_TRUE(load_dataset(dir / "c.txt", 64).empty());
}

TEST(Manifest, ErrorsNameTheLine) {
  std::istringstream bad_class("a.ppm 1 0 0 5 5\n\na.ppm 9 0 0 5 5\n");
  const auto msg = error_of([&] { parse_manifest(bad_class, "m.txt"); });
  EXPECT_NE(msg.find("m.txt:3"), std::string::npos) << msg;
  EXPECT_NE(msg.find("class id 9"), std::string::npos) << msg;

  std::istringstream short_line("a.ppm 1 0 0 5\n");
  EXPECT_NE(error_of([&] { parse_manifest(short_line, "m.txt"); }).find("m.txt:1"), std::string::npos);
  std::istringstream extra("a.ppm 1 0 0 5 5 7\n");
  EXPECT_THROW(parse_manifest(extra, "m.txt"), DataError);
  std::istringstream flipped("a.ppm 1 5 0 2 5\n");
  EXPECT_THROW(parse_manifest(flipped, "m.txt"), DataError);
}

TEST(Manifest, LoadGroupsBoxesAndChecksBounds) {
  const auto dir = scratch("load");
  write_ppm(dir / "a.ppm", Image(40, 20, 50));
  write_text(dir / "m.txt", "a.ppm 1 0 0 10 10\na.ppm 2 20 5 40 20\n");
  auto data = load_dataset(dir / "m.txt", 64);
  ASSERT_EQ(data.size(), 1u);
  ASSERT_EQ(data[0].truths.size(), 2u);
  EXPECT_EQ(data[0].truths[1].class_id, 2u);
  // 40 x 20 into 64: scale 1.6, bars of 16 above and below.
  EXPECT_DOUBLE_EQ(data[0].truths[1].box.y0, 5 * 1.6 + 16);
  EXPECT_EQ(data[0].image.width, 64u);

  write_text(dir / "out.txt", "a.ppm 1 0 0 10 10\na.ppm 1 30 0 41 10\n");
  const auto msg = error_of([&] { load_dataset(dir / "out.txt", 64); });
  EXPECT_NE(msg.find(":2:"), std::string::npos) << msg;

  write_text(dir / "missing.txt", "# header\nnope.ppm 0 0 0 1 1\n");
  const auto miss = error_of([&] { load_dataset(dir / "missing.txt", 64); });
  EXPECT_NE(miss.find(":2:"), std::string::npos) << miss;
  EXPECT_THROW(load_dataset(dir / "absent.txt", 64), DataError);
}

TEST(Synth, SameSeedGivesIdenticalFiles) {
  SynthSpec spec;
  spec.count = 14;
  const auto a = scratch("synth_a"), b = scratch("synth_b");
  generate_synth(spec, a);
  generate_synth(spec, b);
  for (const char* f : {"train.txt", "val.txt", "classes.txt", "images/00000.ppm", "images/00013.ppm"})
    EXPECT_EQ(slurp(a / f), slurp(b / f)) << f;
  spec.seed = 1;
  const auto c = scratch("synth_c");
  generate_synth(spec, c);
  EXPECT_NE(slurp(a / "images/00003.ppm"), slurp(c / "images/00003.ppm"));
}

TEST(Synth, SevenHundredImagesAreBalanced) {
  SynthSpec spec;
  const auto dir = scratch("synth_700");
  const auto summary = generate_synth(spec, dir);
  for (std::size_t c = 0; c < kClassCount; ++c) {
    EXPECT_EQ(summary.per_class[c], 100u);
    EXPECT_EQ(summary.val_per_class[c], 15u);
  }
  const auto val = load_dataset(dir / "val.txt", 160);
  const auto train = load_dataset(dir / "train.txt", 160);
  EXPECT_EQ(val.size(), 105u);
  EXPECT_EQ(train.size(), 595u);
  for (const auto& a : train) ASSERT_EQ(a.truths.size(), 1u);
  fs::remove_all(dir);
}

TEST(Synth, FaceFillsItsBoxAndStaysInside) {
  SynthSpec spec;
  for (std::size_t i = 0; i < 50; ++i) {
    const auto s = render_sample(spec, i);
    const auto& b = s.truth.box;
    ASSERT_GE(b.x0, 0.0);
    ASSERT_GE(b.y0, 0.0);
    ASSERT_LE(b.x1, 160.0);
    ASSERT_LE(b.y1, 160.0);
    EXPECT_EQ(s.truth.class_id, i % kClassCount);
    // Face center differs from the corners of its own box (background).
    const auto* center = s.image.at(static_cast<std::size_t>(b.cx()), static_cast<std::size_t>(b.y0 + 0.3 * b.height()));
    const auto* corner = s.image.at(static_cast<std::size_t>(b.x0), static_cast<std::size_t>(b.y0));
    EXPECT_GT(std::abs(int(center[0]) - int(corner[0])) + std::abs(int(center[1]) - int(corner[1])), 40) << i;
  }
  SynthSpec bad;
  bad.max_face = 0.9;
  EXPECT_THROW(bad.validate(), std::invalid_argument);
}

TEST(Synth, ClassesSeparableByNearestCentroid) {
  SynthSpec spec;
  constexpr std::size_t kPerClass = 30, kTrain = 20, kSide = 24;
  std::vector<std::vector<double>> centroid(kClassCount, std::vector<double>(kSide * kSide, 0.0));
  std::vector<std::pair<std::size_t, std::vector<double>>> test;
  for (std::size_t i = 0; i < kPerClass * kClassCount; ++i) {
    const auto s = render_sample(spec, i);
    auto f = crop_features(s.image, s.truth.box, kSide);
    if (i / kClassCount < kTrain) {
      for (std::size_t k = 0; k < f.size(); ++k) centroid[s.truth.class_id][k] += f[k] / kTrain;
    } else {
      test.emplace_back(s.truth.class_id, std::move(f));
    }
  }
  std::size_t correct = 0;
  for (const auto& [cls, f] : test) {
    std::size_t best = 0;
    double best_d = 1e300;
    for (std::size_t c = 0; c < kClassCount; ++c) {
      double d = 0;
      for (std::size_t k = 0; k < f.size(); ++k) d += (f[k] - centroid[c][k]) * (f[k] - centroid[c][k]);
      if (d < best_d) best_d = d, best = c;
    }
    correct += best == cls;
  }
  const double accuracy = static_cast<double>(correct) / test.size();
  EXPECT_GE(accuracy, 3.0 / 7.0) << accuracy;
}

TEST(Schedule, PaperExamples) {
  TrainConfig c;
  EXPECT_DOUBLE_EQ(learning_rate(c, 0), 0.001);
  EXPECT_DOUBLE_EQ(learning_rate(c, 63), 0.001);
  EXPECT_DOUBLE_EQ(learning_rate(c, 64), 0.0009);
  EXPECT_DOUBLE_EQ(learning_rate(c, 128), 0.00081);
}

TEST(Schedule, PiecewiseConstantClosedForm) {
  TrainConfig c;
  for (std::size_t e = 0; e <= 1000; ++e) {
    const auto k = static_cast<int>(e / 64);
    double expected = 0.001;
    for (int i = 0; i < k; ++i) expected *= 0.9;
    ASSERT_NEAR(learning_rate(c, e), expected, 1e-15) << e;
    if (e > 0 && e % 64 != 0) {
      ASSERT_EQ(learning_rate(c, e), learning_rate(c, e - 1));
    }
  }
}

TEST(RunConfigFile, ParsesEveryFieldAndRoundTrips) {
  RunConfig rc;
  rc.train.epochs = 7;
  rc.train.batch_size = 4;
  rc.net.vss_p5 = false;
  rc.net.seed = rc.train.seed = 42;
  std::ostringstream os;
  write_run_config(os, rc);
  std::istringstream is(os.str());
  auto back = parse_run_config(is, "rt");
  EXPECT_EQ(back.net, rc.net);
  EXPECT_EQ(back.train.epochs, 7u);
  EXPECT_EQ(back.train.batch_size, 4u);
  EXPECT_EQ(back.train.seed, 42u);
}

TEST(RunConfigFile, RejectsUnknownDuplicateAndInvalid) {
  auto parse = [](const std::string& text) {
    std::istringstream is(text);
    return parse_run_config(is, "cfg");
  };
  EXPECT_NE(error_of([&] { parse("epochs = 3\nlearning_rate = 0.1\n"); }).find("cfg:2: unknown key"), std::string::npos);
  EXPECT_NE(error_of([&] { parse("epochs = 3\nepochs = 4\n"); }).find("duplicate"), std::string::npos);
  EXPECT_THROW(parse("epochs 3\n"), std::invalid_argument);
  EXPECT_THROW(parse("batch_size = 0\n"), std::invalid_argument);
  EXPECT_THROW(parse("lr_decay_factor = 1.5\n"), std::invalid_argument);
  EXPECT_THROW(parse("input_size = 100\n"), std::invalid_argument);
  auto ok = parse("# comment\n  epochs=2   # trailing\nwidth = 0.5\n");
  EXPECT_EQ(ok.train.epochs, 2u);
  EXPECT_EQ(ok.net.width, 0.5);
}

TEST(Adam, FirstStepMovesByLearningRate) {
  auto w = parameter(Tensor<float>({3}, std::vector<float>{1.f, -2.f, 0.5f}));
  ParamList<float> params{{"w", &w}};
  Adam adam(params, 0.9, 0.999, 1e-8);
  backward(ops::sum(ops::mul(w, constant(Tensor<float>({3}, std::vector<float>{2.f, -3.f, 0.f})))));
  adam.step(0.1);
  EXPECT_NEAR(w.value()[0], 0.9f, 1e-6);
  EXPECT_NEAR(w.value()[1], -1.9f, 1e-6);
  EXPECT_EQ(w.value()[2], 0.5f);
  EXPECT_EQ(w.grad()[0], 0.f);
  EXPECT_EQ(adam.steps(), 1u);
}

TEST(Adam, MinimizesQuadratic) {
  auto w = parameter(Tensor<float>({2}, std::vector<float>{3.f, -4.f}));
  Adam adam({{"w", &w}}, 0.9, 0.999, 1e-8);
  for (int i = 0; i < 500; ++i) {
    backward(ops::sum(ops::mul(w, w)));
    adam.step(0.05);
  }
  EXPECT_LT(std::abs(w.value()[0]), 0.05f);
  EXPECT_LT(std::abs(w.value()[1]), 0.05f);
}

TEST(Training, SingleImageOverfit) {
  auto data = synth_set(1);
  net::Detector<float> model(micro());
  TrainConfig tc;
  tc.epochs = 200;
  auto r = train(model, data, nullptr, tc);
  ASSERT_EQ(r.batch_losses.size(), 200u);
  EXPECT_LT(r.batch_losses.back(), 0.1 * r.batch_losses.front())
      << r.batch_losses.front() << " -> " << r.batch_losses.back();
}

TEST(Training, FixedSeedReproducesTrajectory) {
  auto data = synth_set(10);
  TrainConfig tc;
  tc.epochs = 2;
  tc.batch_size = 4;
  tc.seed = 5;
  auto run = [&] {
    net::Detector<float> model(micro());
    return train(model, data, &data, tc).batch_losses;
  };
  const auto a = run(), b = run();
  ASSERT_EQ(a.size(), 6u);
  EXPECT_EQ(a, b);
  tc.seed = 6;
  EXPECT_NE(run(), a);
}

TEST(Training, NanLossAbortsNamingTheBatch) {
  auto data = synth_set(3);
  data[2].path = "poisoned.ppm";
  net::Detector<float> model(micro());
  model.head[0].obj_pred.bias.mutable_value()[0] = std::numeric_limits<float>::quiet_NaN();
  TrainConfig tc;
  tc.epochs = 1;
  const auto msg = error_of([&] { train(model, data, nullptr, tc); });
  EXPECT_NE(msg.find("nan"), std::string::npos) << msg;
  EXPECT_NE(msg.find("batch 0"), std::string::npos) << msg;
  EXPECT_NE(msg.find("poisoned.ppm"), std::string::npos) << msg;
}

TEST(Training, WritesCheckpointsAndLog) {
  auto data = synth_set(4);
  const auto dir = scratch("train_out");
  net::Detector<float> model(micro());
  TrainConfig tc;
  tc.epochs = 2;
  TrainOptions opt;
  opt.out_dir = dir;
  auto r = train(model, data, &data, tc, opt);
  EXPECT_TRUE(fs::exists(dir / "best.ckpt"));
  EXPECT_TRUE(fs::exists(dir / "final.ckpt"));
  std::ifstream log(dir / "train_log.csv");
  std::string line;
  std::size_t lines = 0;
  while (std::getline(log, line)) ++lines;
  EXPECT_EQ(lines, 3u);
  EXPECT_GE(r.best_map, 0.0);
  EXPECT_EQ(r.log.size(), 2u);

  // Reloaded final checkpoint evaluates identically.
  auto back = net::load_detector(dir / "final.ckpt");
  std::ostringstream a, b;
  metrics::write_table(a, evaluate_model(model, data));
  metrics::write_table(b, evaluate_model(back, data));
  EXPECT_EQ(a.str(), b.str());
}

TEST(Evaluation, OracleAndSilentDetectors) {
  auto data = synth_set(14);
  std::vector<metrics::ImageResult> perfect, silent;
  for (const auto& a : data) {
    std::vector<net::Detection> dets;
    for (const auto& t : a.truths) dets.push_back({t.class_id, 1.0, t.box});
    perfect.push_back({dets, a.truths});
    silent.push_back({{}, a.truths});
  }
  EXPECT_DOUBLE_EQ(metrics::evaluate(perfect, kClassNames).map, 1.0);
  const auto none = metrics::evaluate(silent, kClassNames);
  EXPECT_EQ(none.map, 0.0);
  for (const auto& c : none.classes) EXPECT_EQ(c.recall, 0.0);
}

TEST(Heatmap, ConstantFieldIsHalf) {
  std::vector<net::LevelMaps<float>> levels;
  for (std::size_t l = 0; l < 3; ++l) {
    const std::size_t g = 64 / net::kStrides[l];
    levels.push_back({Tensor<float>({1, 7, g, g}), Tensor<float>({1, 4, g, g}), Tensor<float>({1, 1, g, g}),
                      net::kStrides[l]});
  }
  const auto h = class_heatmap(levels, 0, 3, 64);
  ASSERT_EQ(h.size(), 64u * 64u);
  for (float v : h) ASSERT_EQ(v, 0.5f);
}

TEST(Heatmap, PeaksAtTheHotCell) {
  std::vector<net::LevelMaps<float>> levels;
  for (std::size_t l = 0; l < 3; ++l) {
    const std::size_t g = 64 / net::kStrides[l];
    levels.push_back({Tensor<float>({1, 2, g, g}, -5.f), Tensor<float>({1, 4, g, g}), Tensor<float>({1, 1, g, g}, -5.f),
                      net::kStrides[l]});
  }
  levels[0].obj.at({0, 0, 5, 2}) = 5.f;
  levels[0].cls.at({0, 1, 5, 2}) = 5.f;
  const auto h = class_heatmap(levels, 0, 1, 64);
  const auto peak = static_cast<std::size_t>(std::max_element(h.begin(), h.end()) - h.begin());
  EXPECT_EQ(peak / 64 / 8, 5u);
  EXPECT_EQ(peak % 64 / 8, 2u);
  EXPECT_EQ(*std::min_element(h.begin(), h.end()), 0.f);
  EXPECT_EQ(*std::max_element(h.begin(), h.end()), 1.f);
}

TEST(Detect, HeatmapMatchesInputSizeAndFilesAreWritten) {
  net::Detector<float> model(micro());
  Image img(100, 50, 90);
  auto r = detect_image(model, img, 0.5, true);
  ASSERT_EQ(r.heatmap.size(), 64u * 64u);
  for (const auto& d : r.detections) {
    EXPECT_LE(d.box.x1, 100.0);
    EXPECT_LE(d.box.y1, 50.0);
  }
  const auto dir = scratch("heatmap");
  write_heatmap(dir, r.heatmap, 64);
  const auto pgm = slurp(dir / "heatmap.pgm");
  EXPECT_EQ(pgm.rfind("P5\n64 64\n255\n", 0), 0u);
  EXPECT_EQ(pgm.size(), std::string("P5\n64 64\n255\n").size() + 64 * 64);
  std::ifstream csv(dir / "heatmap.csv");
  std::string line;
  std::size_t rows = 0;
  while (std::getline(csv, line)) {
    ++rows;
    EXPECT_EQ(std::count(line.begin(), line.end(), ','), 63);
  }
  EXPECT_EQ(rows, 64u);
}
