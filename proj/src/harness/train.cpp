#include "omniscan/harness/train.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <random>
#include <set>
#include <sstream>

#include "omniscan/harness/inference.hpp"
#include "omniscan/net/checkpoint.hpp"

namespace omniscan::harness {

using net::fields::format;
using net::fields::parse_double;
using net::fields::parse_size;

void TrainConfig::validate() const {
  auto require = [](bool ok, const std::string& msg) {
    if (!ok) throw std::invalid_argument(msg);
  };
  require(batch_size >= 1, "batch_size must be at least 1");
  require(epochs >= 1, "epochs must be at least 1");
  require(initial_lr > 0 && std::isfinite(initial_lr), "initial_lr must be positive");
  require(lr_decay_factor > 0 && lr_decay_factor <= 1, "lr_decay_factor must lie in (0, 1]");
  require(lr_decay_interval >= 1, "lr_decay_interval must be at least 1");
  require(adam_beta1 >= 0 && adam_beta1 < 1 && adam_beta2 >= 0 && adam_beta2 < 1, "adam betas must lie in [0, 1)");
  require(adam_eps > 0, "adam_eps must be positive");
}

double learning_rate(const TrainConfig& config, std::size_t epoch) {
  return config.initial_lr * std::pow(config.lr_decay_factor, static_cast<double>(epoch / config.lr_decay_interval));
}

namespace {

bool set_train_field(TrainConfig& c, const std::string& key, const std::string& value) {
  if (key == "batch_size") c.batch_size = parse_size(key, value);
  else if (key == "epochs") c.epochs = parse_size(key, value);
  else if (key == "initial_lr") c.initial_lr = parse_double(key, value);
  else if (key == "lr_decay_factor") c.lr_decay_factor = parse_double(key, value);
  else if (key == "lr_decay_interval") c.lr_decay_interval = parse_size(key, value);
  else if (key == "adam_beta1") c.adam_beta1 = parse_double(key, value);
  else if (key == "adam_beta2") c.adam_beta2 = parse_double(key, value);
  else if (key == "adam_eps") c.adam_eps = parse_double(key, value);
  else return false;
  return true;
}

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  return s.substr(a, s.find_last_not_of(" \t\r") - a + 1);
}

}  // namespace

RunConfig parse_run_config(std::istream& is, const std::string& source, RunConfig base) {
  std::set<std::string> seen;
  std::string text;
  std::size_t line = 0;
  while (std::getline(is, text)) {
    ++line;
    const auto content = trim(text.substr(0, text.find('#')));
    if (content.empty()) continue;
    const std::string where = source + ":" + std::to_string(line) + ": ";
    const auto eq = content.find('=');
    if (eq == std::string::npos) throw std::invalid_argument(where + "expected key = value");
    const auto key = trim(content.substr(0, eq)), value = trim(content.substr(eq + 1));
    if (!seen.insert(key).second) throw std::invalid_argument(where + "duplicate key '" + key + "'");
    try {
      if (key == "seed") {
        base.net.seed = base.train.seed = parse_size(key, value);
      } else if (!set_train_field(base.train, key, value) && !net::set_config_field(base.net, key, value)) {
        throw std::invalid_argument("unknown key '" + key + "'");
      }
    } catch (const std::invalid_argument& e) {
      throw std::invalid_argument(where + e.what());
    }
  }
  try {
    base.net.validate();
    base.train.validate();
  } catch (const std::invalid_argument& e) {
    throw std::invalid_argument(source + ": " + e.what());
  }
  return base;
}

RunConfig load_run_config(const std::filesystem::path& path, RunConfig base) {
  std::ifstream is(path);
  if (!is) throw std::invalid_argument("cannot open config " + path.string());
  return parse_run_config(is, path.string(), std::move(base));
}

void write_run_config(std::ostream& os, const RunConfig& c) {
  const auto& t = c.train;
  os << "batch_size = " << t.batch_size << "\nepochs = " << t.epochs << "\ninitial_lr = " << format(t.initial_lr)
     << "\nlr_decay_factor = " << format(t.lr_decay_factor) << "\nlr_decay_interval = " << t.lr_decay_interval
     << "\nadam_beta1 = " << format(t.adam_beta1) << "\nadam_beta2 = " << format(t.adam_beta2)
     << "\nadam_eps = " << format(t.adam_eps) << '\n';
  for (const auto& [k, v] : net::config_fields(c.net)) os << k << " = " << v << '\n';
}

Adam::Adam(ParamList<float> params, double beta1, double beta2, double eps)
    : params_(std::move(params)), beta1_(beta1), beta2_(beta2), eps_(eps) {
  for (const auto& p : params_) {
    m_.emplace_back(p.var->value().shape());
    v_.emplace_back(p.var->value().shape());
  }
}

void Adam::step(double lr) {
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  const auto b1 = static_cast<float>(beta1_), b2 = static_cast<float>(beta2_);
  const auto step = static_cast<float>(lr / c1), root_c2 = static_cast<float>(std::sqrt(c2));
  const auto eps = static_cast<float>(eps_);
  for (std::size_t i = 0; i < params_.size(); ++i) {
    auto& var = *params_[i].var;
    const auto g = var.grad();
    auto& w = var.mutable_value();
    auto& m = m_[i];
    auto& v = v_[i];
    for (std::size_t k = 0; k < w.size(); ++k) {
      m[k] = b1 * m[k] + (1 - b1) * g[k];
      v[k] = b2 * v[k] + (1 - b2) * g[k] * g[k];
      w[k] -= step * m[k] / (std::sqrt(v[k]) / root_c2 + eps);
    }
    var.zero_grad();
  }
}

TrainResult train(net::Detector<float>& model, const std::vector<AnnotatedImage>& train_set,
                  const std::vector<AnnotatedImage>* val_set, const TrainConfig& config, const TrainOptions& options) {
  config.validate();
  if (train_set.empty()) throw std::invalid_argument("train: empty training set");
  const std::size_t S = model.config().input_size;
  for (const auto& a : train_set)
    if (a.image.width != S || a.image.height != S)
      throw std::invalid_argument("train: image " + a.path.string() + " is not letterboxed to " + std::to_string(S));

  std::ofstream csv;
  if (!options.out_dir.empty()) {
    std::filesystem::create_directories(options.out_dir);
    csv.open(options.out_dir / "train_log.csv");
    csv << "epoch,lr,loss,iou,obj,cls,val_map,seconds\n";
  }

  Adam adam(model.parameters(), config.adam_beta1, config.adam_beta2, config.adam_eps);
  std::mt19937_64 rng(config.seed);
  std::vector<std::size_t> order(train_set.size());
  TrainResult result;

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    const auto start = std::chrono::steady_clock::now();
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    for (std::size_t i = order.size(); i > 1; --i)
      std::swap(order[i - 1], order[static_cast<std::size_t>(static_cast<double>(rng() >> 11) * 0x1.0p-53 * i)]);

    EpochLog log;
    log.epoch = epoch;
    log.lr = learning_rate(config, epoch);
    std::size_t batches = 0;
    for (std::size_t first = 0; first < order.size(); first += config.batch_size) {
      const std::size_t n = std::min(config.batch_size, order.size() - first);
      Tensor<float> images({n, 3, S, S});
      std::vector<std::vector<net::GroundTruth>> truths(n);
      for (std::size_t j = 0; j < n; ++j) {
        const auto& a = train_set[order[first + j]];
        fill_batch(images, j, a.image);
        truths[j] = a.truths;
      }
      auto loss = net::detection_loss(model.forward(constant(std::move(images))), truths, model.config());
      if (!std::isfinite(loss.parts.total)) {
        std::ostringstream msg;
        msg << "loss is " << loss.parts.total << " at epoch " << epoch << ", batch " << batches << " (images";
        for (std::size_t j = 0; j < n; ++j) msg << ' ' << train_set[order[first + j]].path.filename().string();
        msg << ')';
        throw DivergenceError(msg.str());
      }
      backward(loss.total);
      adam.step(log.lr);
      result.batch_losses.push_back(loss.parts.total);
      log.loss.iou += loss.parts.iou;
      log.loss.obj += loss.parts.obj;
      log.loss.cls += loss.parts.cls;
      log.loss.total += loss.parts.total;
      log.loss.positives += loss.parts.positives;
      ++batches;
    }
    log.loss.iou /= batches;
    log.loss.obj /= batches;
    log.loss.cls /= batches;
    log.loss.total /= batches;

    if (val_set && !val_set->empty()) {
      log.val_map = evaluate_model(model, *val_set, config.batch_size).map;
      if (log.val_map > result.best_map) {
        result.best_map = log.val_map;
        result.best_epoch = epoch;
        if (!options.out_dir.empty()) net::save_checkpoint(options.out_dir / "best.ckpt", model);
      }
    }
    log.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    result.log.push_back(log);
    result.final_map = log.val_map;

    if (csv.is_open())
      csv << epoch << ',' << format(log.lr) << ',' << log.loss.total << ',' << log.loss.iou << ',' << log.loss.obj << ','
          << log.loss.cls << ',' << log.val_map << ',' << log.seconds << std::endl;
    if (options.progress) {
      auto& os = *options.progress;
      os << "epoch " << std::setw(3) << epoch << "  lr " << format(log.lr) << "  loss " << std::fixed
         << std::setprecision(4) << log.loss.total << " (iou " << log.loss.iou << ", obj " << log.loss.obj << ", cls "
         << log.loss.cls << ")";
      if (log.val_map >= 0) os << "  val mAP " << log.val_map;
      os << "  " << std::setprecision(1) << log.seconds << "s" << std::defaultfloat << std::endl;
    }
    if (options.on_epoch && !options.on_epoch(log)) break;
  }
  if (!options.out_dir.empty()) net::save_checkpoint(options.out_dir / "final.ckpt", model);
  return result;
}

}  // namespace omniscan::harness
