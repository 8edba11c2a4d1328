#pragma once

#include <cstdint>
#include <ostream>
#include <string>
#include <vector>

namespace omniscan::ssm {

enum class Kernel { Sequential, Parallel };

std::string kernel_name(Kernel k);
/// Throws std::invalid_argument for anything but "sequential" or "parallel".
Kernel parse_kernel(const std::string& name);

struct BenchConfig {
  std::size_t length = 4096;
  std::size_t channels = 8;
  std::size_t states = 16;
  Kernel kernel = Kernel::Sequential;
  std::size_t repeats = 5;
  std::size_t lanes = 4;
  std::size_t chunk = 0;  // 0 picks length / (4 * lanes), at least 64
  std::uint64_t seed = 0;
};

struct BenchRow {
  std::string kernel;
  std::size_t length, channels, states;
  double median_ns;
  double throughput;  // scanned elements (channels * length) per second
};

/// Times one configuration in 32-bit; one row per call.
BenchRow bench_scan(const BenchConfig& cfg);

std::size_t effective_chunk(const BenchConfig& cfg);

void write_bench_csv(std::ostream& os, const std::vector<BenchRow>& rows, bool header = true);

}  // namespace omniscan::ssm
