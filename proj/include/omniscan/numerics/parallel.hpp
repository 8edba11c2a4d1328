#pragma once

#include <algorithm>
#include <cstddef>
#include <thread>
#include <vector>

namespace omniscan {

inline std::size_t default_lanes() { return std::max<std::size_t>(1, std::thread::hardware_concurrency()); }

/// Splits [0, count) into `lanes` contiguous blocks and runs fn(begin, end) on each.
/// Block boundaries depend only on (count, lanes); lane 0 runs on the caller.
template <typename Fn>
void parallel_for(std::size_t lanes, std::size_t count, Fn&& fn) {
  lanes = std::max<std::size_t>(1, std::min(lanes, count));
  if (lanes == 1) {
    if (count) fn(std::size_t{0}, count);
    return;
  }
  const std::size_t base = count / lanes, extra = count % lanes;
  std::vector<std::jthread> workers;
  workers.reserve(lanes - 1);
  std::size_t begin = 0;
  std::size_t first_end = 0;
  for (std::size_t l = 0; l < lanes; ++l) {
    const std::size_t end = begin + base + (l < extra ? 1 : 0);
    if (l == 0)
      first_end = end;
    else
      workers.emplace_back([&fn, begin, end] { fn(begin, end); });
    begin = end;
  }
  fn(std::size_t{0}, first_end);
}

}  // namespace omniscan
