#include "omniscan/ssm/bench.hpp"

#include <algorithm>
#include <chrono>
#include <random>
#include <stdexcept>

#include "omniscan/ssm/scan.hpp"

namespace omniscan::ssm {

std::string kernel_name(Kernel k) { return k == Kernel::Sequential ? "sequential" : "parallel"; }

Kernel parse_kernel(const std::string& name) {
  if (name == "sequential") return Kernel::Sequential;
  if (name == "parallel") return Kernel::Parallel;
  throw std::invalid_argument("unknown kernel '" + name + "' (expected sequential or parallel)");
}

std::size_t effective_chunk(const BenchConfig& cfg) {
  if (cfg.chunk) return cfg.chunk;
  return std::max<std::size_t>(64, cfg.length / (4 * std::max<std::size_t>(1, cfg.lanes)));
}

BenchRow bench_scan(const BenchConfig& cfg) {
  if (cfg.length == 0 || cfg.channels == 0 || cfg.states == 0 || cfg.repeats == 0)
    throw std::invalid_argument("bench_scan: sizes and repeats must be positive");
  std::mt19937_64 rng(cfg.seed);
  std::normal_distribution<float> normal(0.f, 1.f);
  std::uniform_real_distribution<float> step(1e-3f, 1e-1f), decay(0.5f, 8.f);
  const std::size_t L = cfg.length, D = cfg.channels, N = cfg.states;
  ScanInputs<float> in{Tensor<float>({1, D, L}), Tensor<float>({1, D, L}), Tensor<float>({D, N}),
                       Tensor<float>({1, N, L}), Tensor<float>({1, N, L}), Tensor<float>({D}, 1.f)};
  for (auto& v : in.x.data()) v = normal(rng);
  for (auto& v : in.delta.data()) v = step(rng);
  for (auto& v : in.a.data()) v = -decay(rng);
  for (auto& v : in.b.data()) v = normal(rng);
  for (auto& v : in.c.data()) v = normal(rng);

  const std::size_t chunk = effective_chunk(cfg);
  std::vector<double> times;
  float sink = 0.f;
  for (std::size_t r = 0; r < cfg.repeats; ++r) {
    const auto t0 = std::chrono::steady_clock::now();
    auto y = cfg.kernel == Kernel::Sequential ? scan_sequential(in) : scan_parallel(in, chunk, cfg.lanes);
    const auto t1 = std::chrono::steady_clock::now();
    sink += y[0];
    times.push_back(std::chrono::duration<double, std::nano>(t1 - t0).count());
  }
  std::sort(times.begin(), times.end());
  const std::size_t m = times.size();
  const double median = m % 2 ? times[m / 2] : 0.5 * (times[m / 2 - 1] + times[m / 2]);
  [[maybe_unused]] volatile float keep = sink;
  return {kernel_name(cfg.kernel), L, D, N, median, static_cast<double>(D * L) / (median * 1e-9)};
}

void write_bench_csv(std::ostream& os, const std::vector<BenchRow>& rows, bool header) {
  if (header) os << "kernel,L,D,N,median_ns,throughput\n";
  for (const auto& r : rows)
    os << r.kernel << ',' << r.length << ',' << r.channels << ',' << r.states << ',' << static_cast<long long>(r.median_ns)
       << ',' << r.throughput << '\n';
}

}  // namespace omniscan::ssm
