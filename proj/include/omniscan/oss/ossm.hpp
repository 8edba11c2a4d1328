#pragma once

#include <array>
#include <bitset>
#include <random>

#include "omniscan/oss/direction.hpp"
#include "omniscan/ssm/selective.hpp"

namespace omniscan::oss {

/// (B, C, H, W) -> (B, C, H*W) in the map's visiting order.
template <typename T>
Var<T> flatten(const Var<T>& x, const DirectionMap& map);

/// (B, C, H*W) in visiting order -> (B, C, H, W).
template <typename T>
Var<T> unflatten(const Var<T>& seq, const DirectionMap& map);

using DirectionMask = std::bitset<kDirections>;
inline const DirectionMask kAllDirectionsMask = DirectionMask().set();

/// Eight independent selective SSMs, one per direction, merged by a sum in the
/// fixed direction order.
template <typename T>
class OssmBlock {
 public:
  OssmBlock() = default;
  OssmBlock(std::size_t channels, std::size_t states, std::mt19937_64& rng);

  Var<T> forward(const Var<T>& x, DirectionMask active = kAllDirectionsMask) const;

  ssm::SelectiveSsm<T>& direction(Direction d) { return ssms_[static_cast<std::size_t>(d)]; }
  const ssm::SelectiveSsm<T>& direction(Direction d) const { return ssms_[static_cast<std::size_t>(d)]; }

  void collect(const std::string& prefix, ParamList<T>& out);
  std::size_t channels() const { return ssms_[0].channels(); }
  std::size_t states() const { return ssms_[0].states(); }

  ssm::ScanOptions scan_options;

 private:
  std::array<ssm::SelectiveSsm<T>, kDirections> ssms_;
};

/// Row-major mask of output sites whose value changes when the input at (r, c) is
/// perturbed. Evaluated on a fixed random input; throws std::out_of_range for an
/// invalid site.
std::vector<bool> receptive_probe(const OssmBlock<double>& block, std::size_t height, std::size_t width,
                                  std::size_t r, std::size_t c, DirectionMask active = kAllDirectionsMask);

}  // namespace omniscan::oss
