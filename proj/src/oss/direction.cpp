#include "omniscan/oss/direction.hpp"

#include <algorithm>
#include <map>
#include <mutex>
#include <stdexcept>

namespace omniscan::oss {

std::string direction_name(Direction d) {
  switch (d) {
    case Direction::RowForward: return "row";
    case Direction::RowBack: return "row_back";
    case Direction::ColumnForward: return "column";
    case Direction::ColumnBack: return "column_back";
    case Direction::Diagonal: return "diagonal";
    case Direction::DiagonalBack: return "diagonal_back";
    case Direction::ReverseDiagonal: return "reverse_diagonal";
    case Direction::ReverseDiagonalBack: return "reverse_diagonal_back";
  }
  return "?";
}

Direction reversed(Direction d) {
  const auto i = static_cast<std::size_t>(d);
  return kAllDirections[i ^ 1u];
}

DirectionMap build_direction_map(Direction direction, std::size_t H, std::size_t W) {
  if (H == 0 || W == 0)
    throw std::invalid_argument("direction map needs a non-empty grid, got " + std::to_string(H) + "x" +
                                std::to_string(W));
  DirectionMap m{direction, H, W, {}, {}};
  m.order.reserve(H * W);
  switch (direction) {
    case Direction::RowForward:
    case Direction::RowBack:
      for (std::size_t i = 0; i < H * W; ++i) m.order.push_back(i);
      break;
    case Direction::ColumnForward:
    case Direction::ColumnBack:
      for (std::size_t c = 0; c < W; ++c)
        for (std::size_t r = 0; r < H; ++r) m.order.push_back(r * W + c);
      break;
    case Direction::Diagonal:
    case Direction::DiagonalBack:
      for (std::size_t s = 0; s + 1 < H + W; ++s)
        for (std::size_t r = s >= W ? s - W + 1 : 0; r < H && r <= s; ++r) m.order.push_back(r * W + (s - r));
      break;
    case Direction::ReverseDiagonal:
    case Direction::ReverseDiagonalBack:
      // c - r = t - (H - 1) for t = 0 .. H + W - 2
      for (std::size_t t = 0; t + 1 < H + W; ++t)
        for (std::size_t r = t < H - 1 ? H - 1 - t : 0; r < H; ++r) {
          const std::size_t c = r + t - (H - 1);
          if (c >= W) break;
          m.order.push_back(r * W + c);
        }
      break;
  }
  if (static_cast<std::size_t>(direction) % 2 == 1) std::reverse(m.order.begin(), m.order.end());
  m.inverse.assign(H * W, 0);
  for (std::size_t i = 0; i < m.order.size(); ++i) m.inverse[m.order[i]] = i;
  return m;
}

std::shared_ptr<const DirectionSet> direction_maps(std::size_t height, std::size_t width) {
  static std::mutex mu;
  static std::map<std::pair<std::size_t, std::size_t>, std::shared_ptr<const DirectionSet>> cache;
  std::lock_guard lock(mu);
  auto& slot = cache[{height, width}];
  if (!slot) {
    auto set = std::make_shared<DirectionSet>();
    for (std::size_t i = 0; i < kDirections; ++i) (*set)[i] = build_direction_map(kAllDirections[i], height, width);
    slot = std::move(set);
  }
  return slot;
}

}  // namespace omniscan::oss
