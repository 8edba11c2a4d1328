#pragma once

#include <memory>
#include <random>
#include <variant>

#include "omniscan/blocks/vss.hpp"
#include "omniscan/net/config.hpp"
#include "omniscan/numerics/layers.hpp"

namespace omniscan::net {

/// Conv (no bias), group norm, SiLU. Padding k/2.
template <typename T>
class ConvUnit {
 public:
  ConvUnit() = default;
  ConvUnit(std::size_t in, std::size_t out, std::size_t kernel, std::size_t stride, std::mt19937_64& rng);

  Var<T> forward(const Var<T>& x) const;
  void collect(const std::string& prefix, ParamList<T>& out);

  Conv2d<T> conv;
  GroupNorm<T> norm;
};

/// 1x1 then 3x3, residual.
template <typename T>
class Bottleneck {
 public:
  Bottleneck() = default;
  Bottleneck(std::size_t channels, std::mt19937_64& rng);
  Var<T> forward(const Var<T>& x) const;
  void collect(const std::string& prefix, ParamList<T>& out);

  ConvUnit<T> reduce, expand;
};

/// Two 1x1 halves; one runs through the bottlenecks; concat; 1x1 merge.
template <typename T>
class CspBlock {
 public:
  CspBlock() = default;
  CspBlock(std::size_t channels, std::size_t depth, std::mt19937_64& rng);
  Var<T> forward(const Var<T>& x) const;
  void collect(const std::string& prefix, ParamList<T>& out);

  ConvUnit<T> main, shortcut, merge;
  std::vector<Bottleneck<T>> blocks;
};

/// Spatial pyramid pooling, three chained 5x5 max pools.
template <typename T>
class Sppf {
 public:
  Sppf() = default;
  Sppf(std::size_t channels, std::mt19937_64& rng);
  Var<T> forward(const Var<T>& x) const;
  void collect(const std::string& prefix, ParamList<T>& out);

  ConvUnit<T> reduce, merge;
};

template <typename T>
struct Pyramid {
  Var<T> p3, p4, p5;
};

template <typename T>
class Backbone {
 public:
  Backbone() = default;
  Backbone(const NetConfig& config, std::mt19937_64& rng);

  /// Throws ShapeError unless H and W are positive multiples of 32.
  Pyramid<T> forward(const Var<T>& image) const;
  void collect(const std::string& prefix, ParamList<T>& out);

  ConvUnit<T> stem;
  std::array<ConvUnit<T>, 4> down;
  std::array<CspBlock<T>, 4> csp;
  Sppf<T> sppf;
};

/// A VSS block when enabled, otherwise a 1x1 conv unit with the same channel
/// contract (or the identity for a disabled lateral).
template <typename T>
class FusionNode {
 public:
  FusionNode() = default;
  FusionNode(std::size_t in, std::size_t out, bool vss, bool identity_fallback, std::size_t states, std::mt19937_64& rng);
  Var<T> forward(const Var<T>& x) const;
  void collect(const std::string& prefix, ParamList<T>& out);
  bool uses_vss() const { return vss_ != nullptr; }
  void set_scan_chunk(std::size_t chunk);

 private:
  std::shared_ptr<blocks::Vss<T>> vss_;
  std::shared_ptr<ConvUnit<T>> conv_;
};

/// Top-down then bottom-up fusion; output shapes equal input shapes.
template <typename T>
class Fpn {
 public:
  Fpn() = default;
  Fpn(const NetConfig& config, std::mt19937_64& rng);

  Pyramid<T> forward(const Pyramid<T>& in) const;
  void collect(const std::string& prefix, ParamList<T>& out);

  FusionNode<T> lateral3, lateral4, lateral5;  // VSS2 on each backbone output
  FusionNode<T> fuse4, fuse3;                   // VSS1 (channel halving)
  FusionNode<T> out4, out5;                     // VSS2 after the bottom-up concat
  ConvUnit<T> reduce5, reduce4, down3, down4;

 private:
  std::array<std::size_t, 3> channels_{};
};

template <typename T>
struct LevelOutput {
  Var<T> cls, box, obj;  // (B, K, H, W), (B, 4, H, W), (B, 1, H, W)
  std::size_t stride = 0;
};

/// Classification and regression stacks share nothing.
template <typename T>
class HeadLevel {
 public:
  HeadLevel() = default;
  HeadLevel(std::size_t in, std::size_t hidden, std::size_t classes, std::mt19937_64& rng);
  LevelOutput<T> forward(const Var<T>& x) const;
  void collect(const std::string& prefix, ParamList<T>& out);

  ConvUnit<T> cls_stem, reg_stem;
  Conv2d<T> cls_pred, box_pred, obj_pred;
};

inline constexpr double kPriorProbability = 0.01;

template <typename T>
class Detector {
 public:
  Detector() = default;
  explicit Detector(const NetConfig& config);

  std::vector<LevelOutput<T>> forward(const Var<T>& images) const;
  void collect(ParamList<T>& out);
  ParamList<T> parameters();
  const NetConfig& config() const { return config_; }

  Backbone<T> backbone;
  Fpn<T> fpn;
  std::array<HeadLevel<T>, 3> head;

 private:
  NetConfig config_;
};

}  // namespace omniscan::net
