#pragma once

#include <array>
#include <cstddef>
#include <memory>
#include <string>
#include <vector>

namespace omniscan::oss {

// Anti-diagonals (r + c) for Diagonal, main diagonals (c - r) for ReverseDiagonal,
// ascending r within a diagonal. Each *Back direction is the exact reversal.
enum class Direction {
  RowForward,      // H->
  RowBack,         // H<-
  ColumnForward,   // V down
  ColumnBack,      // V up
  Diagonal,        // anti-diagonal order
  DiagonalBack,
  ReverseDiagonal,  // main-diagonal order
  ReverseDiagonalBack,
};

inline constexpr std::size_t kDirections = 8;
inline constexpr std::array<Direction, kDirections> kAllDirections{
    Direction::RowForward,      Direction::RowBack,         Direction::ColumnForward,
    Direction::ColumnBack,      Direction::Diagonal,        Direction::DiagonalBack,
    Direction::ReverseDiagonal, Direction::ReverseDiagonalBack};

std::string direction_name(Direction d);
Direction reversed(Direction d);

struct DirectionMap {
  Direction direction;
  std::size_t height = 0, width = 0;
  std::vector<std::size_t> order;    // order[i]: row-major site visited at step i
  std::vector<std::size_t> inverse;  // inverse[site]: step at which site is visited
};

/// Throws std::invalid_argument for an empty grid.
DirectionMap build_direction_map(Direction direction, std::size_t height, std::size_t width);

using DirectionSet = std::array<DirectionMap, kDirections>;

/// All eight maps for a grid, built once per size and shared. Thread-safe.
std::shared_ptr<const DirectionSet> direction_maps(std::size_t height, std::size_t width);

}  // namespace omniscan::oss
