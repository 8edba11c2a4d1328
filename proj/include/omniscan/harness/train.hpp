#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <istream>
#include <ostream>
#include <stdexcept>

#include "omniscan/harness/dataset.hpp"
#include "omniscan/net/config.hpp"
#include "omniscan/net/loss.hpp"

namespace omniscan::harness {

struct TrainConfig {
  std::size_t batch_size = 16;
  std::size_t epochs = 50;
  double initial_lr = 1e-3;
  double lr_decay_factor = 0.9;
  std::size_t lr_decay_interval = 64;  // epochs
  double adam_beta1 = 0.9, adam_beta2 = 0.999, adam_eps = 1e-8;
  std::uint64_t seed = 0;  // batch order

  void validate() const;
};

/// initial_lr * factor^floor(epoch / interval).
double learning_rate(const TrainConfig& config, std::size_t epoch);

/// Both halves of a run. In the flat file one `seed` key sets the network
/// initialization seed and the batch-order seed.
struct RunConfig {
  net::NetConfig net = net::NetConfig::tiny();
  TrainConfig train;
};

/// Parses `key = value` lines ('#' comments, blank lines allowed) over the
/// defaults in `base`. Unknown keys, duplicates and malformed values throw
/// std::invalid_argument naming the line.
RunConfig parse_run_config(std::istream& is, const std::string& source, RunConfig base = {});
RunConfig load_run_config(const std::filesystem::path& path, RunConfig base = {});
void write_run_config(std::ostream& os, const RunConfig& config);

/// Adaptive-moment optimizer with bias correction.
class Adam {
 public:
  Adam(ParamList<float> params, double beta1, double beta2, double eps);
  /// Applies the accumulated gradients at `lr`, then clears them.
  void step(double lr);
  std::size_t steps() const { return t_; }

 private:
  ParamList<float> params_;
  std::vector<Tensor<float>> m_, v_;
  double beta1_, beta2_, eps_;
  std::size_t t_ = 0;
};

class DivergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct EpochLog {
  std::size_t epoch = 0;
  double lr = 0;
  net::LossParts loss;  // means over the epoch's batches
  double val_map = -1;  // -1 without a validation set
  double seconds = 0;
};

struct TrainResult {
  std::vector<EpochLog> log;
  double best_map = -1, final_map = -1;
  std::size_t best_epoch = 0;
  std::vector<double> batch_losses;  // total loss per optimizer step
};

struct TrainOptions {
  std::filesystem::path out_dir;     // empty: no checkpoints or log file
  std::ostream* progress = nullptr;  // one line per epoch
  /// Called after each epoch; returning false stops training early.
  std::function<bool(const EpochLog&)> on_epoch;
};

/// Shuffled minibatches (seeded), detection loss, Adam at learning_rate(epoch).
/// Writes best.ckpt on every validation-mAP improvement, final.ckpt at the end,
/// and train_log.csv. Throws DivergenceError naming the batch when the loss is
/// not finite.
TrainResult train(net::Detector<float>& model, const std::vector<AnnotatedImage>& train_set,
                  const std::vector<AnnotatedImage>* val_set, const TrainConfig& config,
                  const TrainOptions& options = {});

}  // namespace omniscan::harness
