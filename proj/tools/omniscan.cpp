#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <stdexcept>

#include "omniscan/blocks/vss.hpp"
#include "omniscan/harness/dataset.hpp"
#include "omniscan/harness/inference.hpp"
#include "omniscan/harness/synth.hpp"
#include "omniscan/harness/train.hpp"
#include "omniscan/net/checkpoint.hpp"
#include "omniscan/net/cost.hpp"
#include "omniscan/net/loss.hpp"
#include "omniscan/numerics/gradcheck.hpp"
#include "omniscan/numerics/serialize.hpp"
#include "omniscan/ssm/bench.hpp"
#include "omniscan/ssm/selective.hpp"

namespace fs = std::filesystem;
using namespace omniscan;

namespace {

enum Exit { kOk = 0, kInvalid = 1, kRuntime = 2 };

constexpr double kGradTolerance = 1e-4;

// A data argument is either a manifest file or a directory holding `name`.
fs::path manifest_in(const fs::path& data, const std::string& name) {
  if (fs::is_regular_file(data)) return data;
  const auto p = data / name;
  if (!fs::exists(p)) throw harness::DataError("no " + name + " in " + data.string());
  return p;
}

int gen_synth(const fs::path& out, std::size_t count, std::uint64_t seed, std::size_t size) {
  harness::SynthSpec spec;
  spec.count = count;
  spec.seed = seed;
  spec.image_size = size;
  spec.validate();
  const auto summary = harness::generate_synth(spec, out);
  std::size_t train = 0, val = 0;
  for (std::size_t k = 0; k < summary.per_class.size(); ++k) {
    std::cout << harness::kClassNames[k] << ": " << summary.per_class[k] << " (" << summary.train_per_class[k]
              << " train, " << summary.val_per_class[k] << " val)\n";
    train += summary.train_per_class[k];
    val += summary.val_per_class[k];
  }
  std::cout << "wrote " << count << " images to " << out.string() << " (" << train << " train, " << val << " val)\n";
  return kOk;
}

int train(const fs::path& data, const fs::path& config_path, const fs::path& out) {
  const auto rc = harness::load_run_config(config_path, {});
  const std::size_t S = rc.net.input_size;
  const auto train_set = harness::load_dataset(manifest_in(data, "train.txt"), S, rc.net.class_count);
  std::vector<harness::AnnotatedImage> val_set;
  const bool has_val = fs::is_directory(data) && fs::exists(data / "val.txt");
  if (has_val) val_set = harness::load_dataset(data / "val.txt", S, rc.net.class_count);
  fs::create_directories(out);
  {
    std::ofstream os(out / "config.txt");
    harness::write_run_config(os, rc);
  }
  std::cout << "training on " << train_set.size() << " images, validating on " << val_set.size() << "\n";
  net::Detector<float> model(rc.net);
  harness::TrainOptions opt;
  opt.out_dir = out;
  opt.progress = &std::cout;
  const auto r = harness::train(model, train_set, has_val ? &val_set : nullptr, rc.train, opt);
  if (has_val)
    std::cout << "best val mAP " << std::fixed << std::setprecision(4) << r.best_map << " at epoch " << r.best_epoch
              << ", final " << r.final_map << "\n";
  std::cout << "checkpoints in " << out.string() << "\n";
  return kOk;
}

int eval(const fs::path& ckpt, const fs::path& data, const std::string& csv) {
  auto model = net::load_detector(ckpt);
  const auto& cfg = model.config();
  const auto images = harness::load_dataset(manifest_in(data, "val.txt"), cfg.input_size, cfg.class_count);
  const auto report = harness::evaluate_model(model, images);
  metrics::write_table(std::cout, report);
  if (!csv.empty()) {
    std::ofstream os(csv);
    if (!os) throw std::runtime_error("cannot write " + csv);
    metrics::write_csv(os, report);
  }
  return kOk;
}

int detect(const fs::path& ckpt, const fs::path& image_path, double conf, const std::string& heatmap_dir) {
  if (conf < 0.0 || conf > 1.0) throw std::invalid_argument("--conf must lie in [0, 1]");
  auto model = net::load_detector(ckpt);
  const auto image = harness::read_ppm(image_path);
  const auto r = harness::detect_image(model, image, conf, !heatmap_dir.empty());
  const auto& names = harness::kClassNames;
  std::cout << std::fixed << std::setprecision(2);
  for (const auto& d : r.detections) {
    const auto name = d.class_id < names.size() ? names[d.class_id] : "class" + std::to_string(d.class_id);
    std::cout << name << " " << d.score << "  [" << d.box.x0 << ", " << d.box.y0 << ", " << d.box.x1 << ", "
              << d.box.y1 << "]\n";
  }
  if (r.detections.empty()) std::cout << "no detections at confidence " << conf << "\n";
  if (!heatmap_dir.empty()) {
    harness::write_heatmap(heatmap_dir, r.heatmap, model.config().input_size);
    const auto k = r.heatmap_class;
    std::cout << "heatmap for " << (k < names.size() ? names[k] : std::to_string(k)) << " in " << heatmap_dir << "\n";
  }
  return kOk;
}

int bench(const ssm::BenchConfig& cfg) {
  if (cfg.length == 0 || cfg.channels == 0 || cfg.states == 0 || cfg.repeats == 0 || cfg.lanes == 0)
    throw std::invalid_argument("--L, --D, --N, --repeats and --lanes must be positive");
  ssm::write_bench_csv(std::cout, {ssm::bench_scan(cfg)});
  return kOk;
}

int gradcheck(const std::string& op, std::uint64_t seed) {
  GradCheckRegistry reg;
  register_numerics_cases(reg);
  ssm::register_ssm_cases(reg);
  blocks::register_block_cases(reg);
  net::register_net_cases(reg);
  std::vector<std::string> names = op.empty() ? reg.names() : std::vector<std::string>{op};
  if (!op.empty() && !reg.contains(op)) throw std::invalid_argument("unknown op '" + op + "'");
  bool ok = true;
  double worst = 0.0;
  for (const auto& name : names) {
    const auto r = reg.run(name, {}, seed);
    const bool pass = r.max_rel_err < kGradTolerance;
    ok = ok && pass;
    worst = std::max(worst, r.max_rel_err);
    std::cout << std::left << std::setw(26) << name << std::scientific << std::setprecision(3) << r.max_rel_err
              << "  " << (pass ? "ok" : "FAIL") << "\n";
  }
  std::cout << names.size() << " ops, max relative error " << worst << "\n";
  return ok ? kOk : kRuntime;
}

int report_cost(const fs::path& config_path) {
  const auto rc = harness::load_run_config(config_path, {});
  net::write_cost_report(std::cout, rc.net, net::report_cost(rc.net), net::hand_counted_layers());
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"omniscan: state-space detector for facial expressions"};
  app.require_subcommand(1);

  fs::path out, data, config, ckpt, image;
  std::size_t count = 700, size = 160;
  std::uint64_t seed = 0;
  std::string csv, heatmap, op;
  double conf = 0.5;
  ssm::BenchConfig bench_cfg;
  std::string kernel = "sequential";

  auto* gen = app.add_subcommand("gen-synth", "Render the synthetic expression corpus");
  gen->add_option("--out", out, "Output directory")->required();
  gen->add_option("--count", count, "Number of images")->capture_default_str();
  gen->add_option("--seed", seed, "Generator seed")->capture_default_str();
  gen->add_option("--size", size, "Image side in pixels")->capture_default_str();

  auto* tr = app.add_subcommand("train", "Train a detector");
  tr->add_option("--data", data, "Directory with train.txt (and optionally val.txt)")->required();
  tr->add_option("--config", config, "key = value run config")->required()->check(CLI::ExistingFile);
  tr->add_option("--out", out, "Output directory for checkpoints and log")->required();

  auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint");
  ev->add_option("--ckpt", ckpt, "Checkpoint file")->required()->check(CLI::ExistingFile);
  ev->add_option("--data", data, "Manifest, or directory holding val.txt")->required()->check(CLI::ExistingPath);
  ev->add_option("--csv", csv, "Also write the report as CSV");

  auto* de = app.add_subcommand("detect", "Detect faces in one PPM image");
  de->add_option("--ckpt", ckpt, "Checkpoint file")->required()->check(CLI::ExistingFile);
  de->add_option("--image", image, "Binary PPM image")->required()->check(CLI::ExistingFile);
  de->add_option("--conf", conf, "Confidence threshold")->capture_default_str();
  de->add_option("--heatmap", heatmap, "Write heatmap.pgm and heatmap.csv here");

  auto* be = app.add_subcommand("bench-scan", "Time one scan kernel configuration");
  be->add_option("--L", bench_cfg.length, "Sequence length")->capture_default_str();
  be->add_option("--D", bench_cfg.channels, "Channels")->capture_default_str();
  be->add_option("--N", bench_cfg.states, "State size")->capture_default_str();
  be->add_option("--kernel", kernel, "sequential or parallel")->capture_default_str();
  be->add_option("--lanes", bench_cfg.lanes, "Worker lanes for the parallel kernel")->capture_default_str();
  be->add_option("--chunk", bench_cfg.chunk, "Chunk length (0: automatic)")->capture_default_str();
  be->add_option("--repeats", bench_cfg.repeats, "Timed repetitions")->capture_default_str();
  be->add_option("--seed", bench_cfg.seed, "Input seed")->capture_default_str();

  auto* gc = app.add_subcommand("gradcheck", "Finite-difference gradient checks");
  gc->add_option("--op", op, "Single op (default: all)");
  gc->add_option("--seed", seed, "Probe seed")->capture_default_str();

  auto* rc = app.add_subcommand("report-cost", "Parameter and FLOP count for a config");
  rc->add_option("--config", config, "key = value run config")->required()->check(CLI::ExistingFile);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kInvalid;
  }

  try {
    if (gen->parsed()) return gen_synth(out, count, seed, size);
    if (tr->parsed()) return train(data, config, out);
    if (ev->parsed()) return eval(ckpt, data, csv);
    if (de->parsed()) return detect(ckpt, image, conf, heatmap);
    if (be->parsed()) {
      bench_cfg.kernel = ssm::parse_kernel(kernel);
      return bench(bench_cfg);
    }
    if (gc->parsed()) return gradcheck(op, seed);
    if (rc->parsed()) return report_cost(config);
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kInvalid;
  } catch (const harness::DataError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kInvalid;
  } catch (const harness::ImageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kInvalid;
  } catch (const FormatError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kInvalid;
  } catch (const std::exception& e) {
    std::cerr << "failed: " << e.what() << "\n";
    return kRuntime;
  }
  return kRuntime;
}
