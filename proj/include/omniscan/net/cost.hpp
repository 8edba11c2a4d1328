#pragma once

#include <cstdint>
#include <ostream>
#include <string>
#include <vector>

#include "omniscan/net/config.hpp"

namespace omniscan::net {

inline constexpr double kReferenceParams = 8.68e6;
inline constexpr double kReferenceFlops = 6.89e9;

struct Cost {
  std::uint64_t params = 0;
  std::uint64_t flops = 0;  // 2 x multiply-accumulates of conv and linear layers
};

/// Counts parameters from the built model and MACs from one forward at input_size.
Cost report_cost(const NetConfig& config);

/// A single layer measured by the same machinery, next to its closed form.
struct LayerCost {
  std::string name;
  Cost measured, closed_form;
};

/// 1x1 conv 4->8 with bias on 10x10; 3x3 conv 1->1 no bias pad 1 on 10x10;
/// linear 16->10 on 3 rows.
std::vector<LayerCost> hand_counted_layers();

void write_cost_report(std::ostream& os, const NetConfig& config, const Cost& cost,
                       const std::vector<LayerCost>& layers);

}  // namespace omniscan::net
