#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

#include "omniscan/numerics/gradcheck.hpp"
#include "omniscan/numerics/ops.hpp"
#include "omniscan/ssm/bench.hpp"
#include "omniscan/ssm/scan.hpp"
#include "omniscan/ssm/selective.hpp"

using namespace omniscan;
using namespace omniscan::ssm;

namespace {

template <typename T>
ScanInputs<T> random_inputs(std::size_t B, std::size_t D, std::size_t L, std::size_t N, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> step(1e-3, 0.5), decay(0.1, 4.0);
  ScanInputs<T> in{Tensor<T>({B, D, L}), Tensor<T>({B, D, L}), Tensor<T>({D, N}),
                   Tensor<T>({B, N, L}), Tensor<T>({B, N, L}), Tensor<T>({D})};
  for (auto& v : in.x.data()) v = static_cast<T>(normal(rng));
  for (auto& v : in.delta.data()) v = static_cast<T>(step(rng));
  for (auto& v : in.a.data()) v = static_cast<T>(-decay(rng));
  for (auto& v : in.b.data()) v = static_cast<T>(normal(rng));
  for (auto& v : in.c.data()) v = static_cast<T>(normal(rng));
  for (auto& v : in.d_skip.data()) v = static_cast<T>(normal(rng));
  return in;
}

ScanInputs<double> single_state(std::vector<double> x, double a, double delta, double b, double c, double d) {
  const std::size_t L = x.size();
  return {Tensor<double>({1, 1, L}, std::move(x)), Tensor<double>({1, 1, L}, delta), Tensor<double>({1, 1}, a),
          Tensor<double>({1, 1, L}, b), Tensor<double>({1, 1, L}, c), Tensor<double>({1}, d)};
}

// Convolution form: y_k = sum_n c_kn sum_{j<=k} exp(a_n sum_{i=j+1..k} delta_i) phi_j b_jn x_j + D x_k.
Tensor<double> convolution_oracle(const ScanInputs<double>& in) {
  const std::size_t B = in.batch(), D = in.channels(), L = in.length(), N = in.states();
  Tensor<double> y({B, D, L});
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t d = 0; d < D; ++d)
      for (std::size_t k = 0; k < L; ++k) {
        double acc = in.d_skip[d] * in.x.at({b, d, k});
        for (std::size_t n = 0; n < N; ++n) {
          const double a = in.a.at({d, n});
          double tail = 0.0;  // sum of deltas after j
          for (std::size_t j = k + 1; j-- > 0;) {
            const double dj = in.delta.at({b, d, j});
            const double phi = std::abs(a * dj) < 1e-12 ? dj : (std::exp(a * dj) - 1.0) / a;
            acc += in.c.at({b, n, k}) * std::exp(a * tail) * phi * in.b.at({b, n, j}) * in.x.at({b, d, j});
            tail += dj;
          }
        }
        y.at({b, d, k}) = acc;
      }
  return y;
}

template <typename T>
double normwise_deviation(const Tensor<T>& got, const Tensor<T>& ref) {
  double diff = 0.0, scale = 0.0;
  for (std::size_t i = 0; i < ref.size(); ++i) {
    diff = std::max(diff, std::abs(static_cast<double>(got[i]) - static_cast<double>(ref[i])));
    scale = std::max(scale, std::abs(static_cast<double>(ref[i])));
  }
  return diff / std::max(scale, 1e-30);
}

}  // namespace

TEST(Discretize, HalfLifeClosedForm) {
  auto r = discretize(-1.0, 1.0, std::log(2.0));
  EXPECT_NEAR(r.a_bar, 0.5, 1e-12);
  EXPECT_NEAR(r.b_bar, 0.5, 1e-12);
}

TEST(Discretize, IntegratorLimitUsesSeries) {
  for (double a : {0.0, -1e-9, -5e-6}) {
    auto r = discretize(a, 1.0, 0.1);
    EXPECT_NEAR(r.a_bar, 1.0, 1e-6);
    EXPECT_NEAR(r.b_bar, 0.1, 1e-6 * 0.1 + 1e-12);
  }
  auto exact = discretize(0.0, 1.0, 0.1);
  EXPECT_NEAR(exact.b_bar, 0.1, 1e-12);
  EXPECT_EQ(exact.a_bar, 1.0);
}

TEST(Discretize, SeriesAgreesWithClosedFormAcrossCutoff) {
  const double delta = 0.5;
  for (double z : {0.9e-6, 1.1e-6}) {
    const double a = -z / delta;
    const double closed = std::expm1(a * delta) / a;
    EXPECT_NEAR(discretize(a, 1.0, delta).b_bar, closed, 1e-15);
  }
}

TEST(Discretize, ZeroStepLimit) {
  auto r = discretize(-3.0, 2.0, 1e-12);
  EXPECT_NEAR(r.a_bar, 1.0, 1e-11);
  EXPECT_NEAR(r.b_bar, 0.0, 1e-11);
}

TEST(Discretize, RejectsNonPositiveStep) {
  EXPECT_THROW(discretize(-1.0, 1.0, 0.0), NumericError);
  EXPECT_THROW(discretize(-1.0, 1.0, -0.1), NumericError);
  EXPECT_THROW(discretize(-1.0, 1.0, std::nan("")), NumericError);
}

TEST(Discretize, DecayFactorInUnitInterval) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> pa(-20.0, -1e-3), pd(1e-4, 2.0);
  for (int i = 0; i < 1000; ++i) {
    auto r = discretize(pa(rng), 1.0, pd(rng));
    EXPECT_GT(r.a_bar, 0.0);
    EXPECT_LT(r.a_bar, 1.0);
    EXPECT_GT(r.b_bar, 0.0);
  }
}

TEST(ScanSequential, HandUnrolledHalvingExample) {
  auto y = scan_sequential(single_state({1, 1, 1}, -1.0, std::log(2.0), 1, 1, 0));
  EXPECT_NEAR(y[0], 0.5, 1e-12);
  EXPECT_NEAR(y[1], 0.75, 1e-12);
  EXPECT_NEAR(y[2], 0.875, 1e-12);
}

TEST(ScanSequential, IntegratorGivesPrefixSums) {
  auto y = scan_sequential(single_state({1, 2, 3}, 0.0, 1.0, 1, 1, 0));
  EXPECT_DOUBLE_EQ(y[0], 1.0);
  EXPECT_DOUBLE_EQ(y[1], 3.0);
  EXPECT_DOUBLE_EQ(y[2], 6.0);
}

TEST(ScanSequential, SkipOnlyIsIdentity) {
  std::mt19937_64 rng(5);
  auto in = random_inputs<float>(2, 3, 50, 4, rng);
  in.c.fill(0.f);
  in.d_skip.fill(1.f);
  EXPECT_EQ(scan_sequential(in), in.x);
}

TEST(ScanSequential, MatchesConvolutionOracle) {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 10; ++trial) {
    auto in = random_inputs<double>(2, 3, 1 + trial * 7, 4, rng);
    EXPECT_LT(normwise_deviation(scan_sequential(in), convolution_oracle(in)), 1e-12);
  }
}

TEST(ScanSequential, RejectsBadInputs) {
  EXPECT_THROW(Tensor<double>({1, 1, 0}), ShapeError);
  auto in = single_state({1, 2}, -1, 0.1, 1, 1, 0);
  in.delta[1] = 0.0;
  EXPECT_THROW(scan_sequential(in), NumericError);
  auto bad = single_state({1, 2}, -1, 0.1, 1, 1, 0);
  bad.c = Tensor<double>({1, 1, 3});
  try {
    scan_sequential(bad);
    FAIL();
  } catch (const ShapeError& e) {
    EXPECT_NE(std::string(e.what()).find("C axis 2"), std::string::npos);
  }
}

TEST(ScanSequential, Deterministic) {
  std::mt19937_64 rng(2);
  auto in = random_inputs<float>(2, 4, 300, 8, rng);
  EXPECT_EQ(scan_sequential(in), scan_sequential(in));
}

TEST(ScanParallel, FullChunkIsBitwiseSequential) {
  std::mt19937_64 rng(7);
  auto in = random_inputs<float>(3, 5, 128, 6, rng);
  const auto ref = scan_sequential(in);
  EXPECT_EQ(scan_parallel(in, 128, 4), ref);
  EXPECT_EQ(scan_parallel(in, 1000, 4), ref);
}

TEST(ScanParallel, UnitChunkOnOddLength) {
  std::mt19937_64 rng(257);
  auto in = random_inputs<float>(1, 4, 257, 8, rng);
  EXPECT_LT(normwise_deviation(scan_parallel(in, 1, 4), scan_sequential(in)), 1e-5);
}

TEST(ScanParallel, RandomEquivalence32And64) {
  std::mt19937_64 rng(13);
  std::uniform_int_distribution<std::size_t> pb(1, 4), pd(1, 8), pn(1, 16), pl(1, 1500), pc(1, 200);
  for (int trial = 0; trial < 25; ++trial) {
    const std::size_t B = pb(rng), D = pd(rng), N = pn(rng), L = pl(rng), chunk = pc(rng);
    std::mt19937_64 draw(trial);
    auto f = random_inputs<float>(B, D, L, N, draw);
    EXPECT_LT(normwise_deviation(scan_parallel(f, chunk, 3), scan_sequential(f)), 1e-5);
    std::mt19937_64 draw64(trial);
    auto d = random_inputs<double>(B, D, L, N, draw64);
    EXPECT_LT(normwise_deviation(scan_parallel(d, chunk, 3), scan_sequential(d)), 1e-10);
  }
}

TEST(ScanParallel, IndependentOfLaneCount) {
  std::mt19937_64 rng(17);
  auto in = random_inputs<float>(2, 3, 999, 5, rng);
  const auto one = scan_parallel(in, 37, 1);
  for (std::size_t lanes : {2, 3, 4, 7}) EXPECT_EQ(scan_parallel(in, 37, lanes), one);
}

TEST(ScanParallel, RejectsZeroChunk) {
  std::mt19937_64 rng(1);
  auto in = random_inputs<float>(1, 1, 4, 1, rng);
  EXPECT_THROW(scan_parallel(in, 0, 1), std::invalid_argument);
}

TEST(ScanElements, CombineIsAssociative) {
  std::mt19937_64 rng(19);
  std::uniform_real_distribution<double> m(0.0, 1.0), o(-1.0, 1.0);
  for (int i = 0; i < 1000; ++i) {
    ScanElement<double> e1{m(rng), o(rng)}, e2{m(rng), o(rng)}, e3{m(rng), o(rng)};
    auto left = combine(combine(e3, e2), e1);
    auto right = combine(e3, combine(e2, e1));
    EXPECT_NEAR(left.mult, right.mult, 1e-6);
    EXPECT_NEAR(left.offset, right.offset, 1e-6);
  }
}

TEST(ScanProperties, StableOnLongSequence) {
  const std::size_t L = 65536;
  std::mt19937_64 rng(23);
  std::uniform_real_distribution<float> ux(-1.f, 1.f);
  // N = 1 and C = 1, D = 0 so the output is the hidden state itself.
  const std::vector<float> decays{-0.01f, -0.5f, -3.f};
  const std::size_t D = decays.size();
  ScanInputs<float> in{Tensor<float>({1, D, L}), Tensor<float>({1, D, L}, 0.2f), Tensor<float>({D, 1}, decays),
                       Tensor<float>({1, 1, L}, 1.f), Tensor<float>({1, 1, L}, 1.f), Tensor<float>({D})};
  for (auto& v : in.x.data()) v = ux(rng);
  const auto y = scan_sequential(in);
  ASSERT_TRUE(y.all_finite());
  for (std::size_t d = 0; d < D; ++d) {
    const auto r = discretize(decays[d], 1.f, 0.2f);
    const double bound = std::abs(r.b_bar) * 1.0 / (1.0 - r.a_bar);
    double peak = 0.0;
    for (std::size_t k = 0; k < L; ++k) peak = std::max(peak, std::abs(static_cast<double>(y[d * L + k])));
    EXPECT_LE(peak, bound * (1 + 1e-4)) << "channel " << d;
  }
}

TEST(ScanProperties, OrderSensitiveUnlessSkipOnly) {
  std::mt19937_64 rng(29);
  auto in = random_inputs<double>(1, 2, 20, 3, rng);
  in.delta.fill(0.3);
  in.b.fill(1.0);
  in.c.fill(1.0);
  std::vector<std::size_t> perm(20);
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  auto permuted = in;
  for (std::size_t d = 0; d < 2; ++d)
    for (std::size_t k = 0; k < 20; ++k) permuted.x.at({0, d, k}) = in.x.at({0, d, perm[k]});

  auto y = scan_sequential(in), yp = scan_sequential(permuted);
  double diff = 0.0;
  for (std::size_t d = 0; d < 2; ++d)
    for (std::size_t k = 0; k < 20; ++k) diff = std::max(diff, std::abs(yp.at({0, d, k}) - y.at({0, d, perm[k]})));
  EXPECT_GT(diff, 1e-3);

  in.c.fill(0.0);
  permuted.c.fill(0.0);
  y = scan_sequential(in);
  yp = scan_sequential(permuted);
  for (std::size_t d = 0; d < 2; ++d)
    for (std::size_t k = 0; k < 20; ++k) EXPECT_EQ(yp.at({0, d, k}), y.at({0, d, perm[k]}));
}

TEST(ScanProperties, ZohErrorIsFirstOrderInStep) {
  // h' = a h + b u with u = 1, h(0) = 0: h(t) = b (exp(a t) - 1) / a, sampled at t_k = k * step.
  const double a = -1.5, b = 2.0, horizon = 2.0;
  auto error_at = [&](double step) {
    const auto L = static_cast<std::size_t>(std::llround(horizon / step)) + 1;
    auto y = scan_sequential(single_state(std::vector<double>(L, 1.0), a, step, b, 1.0, 0.0));
    double worst = 0.0;
    for (std::size_t k = 0; k < L; ++k) {
      const double t = static_cast<double>(k) * step;
      worst = std::max(worst, std::abs(y[k] - b * std::expm1(a * t) / a));
    }
    return worst;
  };
  const double e1 = error_at(1e-2), e2 = error_at(1e-3), e3 = error_at(1e-4);
  EXPECT_NEAR(e1 / e2, 10.0, 1.0);
  EXPECT_NEAR(e2 / e3, 10.0, 1.0);
  EXPECT_NEAR(e2 / 1e-3, std::abs(b), 0.05 * std::abs(b));
}

TEST(ScanBackward, SkipPathGradient) {
  std::mt19937_64 rng(31);
  auto in = random_inputs<double>(2, 3, 9, 2, rng);
  in.c.fill(0.0);
  ScanSaved<double> saved;
  scan_sequential(in, &saved);
  Tensor<double> up({2, 3, 9});
  for (auto& v : up.data()) v = std::normal_distribution<double>()(rng);
  auto g = scan_backward(in, up, saved);
  for (std::size_t b = 0; b < 2; ++b)
    for (std::size_t d = 0; d < 3; ++d)
      for (std::size_t k = 0; k < 9; ++k) EXPECT_DOUBLE_EQ(g.x.at({b, d, k}), in.d_skip[d] * up.at({b, d, k}));
}

TEST(ScanBackward, SingleStepProductRule) {
  const double a = -0.7, delta = 0.4, b = 1.3, c = -0.9, d = 0.25, x = 1.7;
  auto in = single_state({x}, a, delta, b, c, d);
  ScanSaved<double> saved;
  scan_sequential(in, &saved);
  auto g = scan_backward(in, Tensor<double>({1, 1, 1}, 1.0), saved);
  const double e = std::exp(a * delta), phi = (e - 1) / a;
  EXPECT_NEAR(g.x[0], c * phi * b + d, 1e-14);
  EXPECT_NEAR(g.c[0], phi * b * x, 1e-14);
  EXPECT_NEAR(g.b[0], c * phi * x, 1e-14);
  EXPECT_NEAR(g.d_skip[0], x, 1e-14);
  EXPECT_NEAR(g.delta[0], c * b * x * e, 1e-14);
  EXPECT_NEAR(g.a[0], c * b * x * (a * delta * e - (e - 1)) / (a * a), 1e-14);
}

TEST(ScanBackward, FiniteDifferenceAgreement) {
  GradCheckRegistry reg;
  register_ssm_cases(reg);
  for (std::uint64_t seed : {1, 2, 3}) {
    auto r = reg.run("selective_scan", {2, 3, 12, 3}, seed);
    EXPECT_LT(r.max_rel_err, 1e-4) << "seed " << seed;
    auto rc = reg.run("selective_scan_recompute", {1, 2, 16, 4}, seed);
    EXPECT_LT(rc.max_rel_err, 1e-4) << "seed " << seed;
  }
}

TEST(ScanBackward, RecomputationMatchesFullStorage) {
  std::mt19937_64 rng(37);
  auto in = random_inputs<double>(2, 3, 301, 4, rng);
  Tensor<double> up({2, 3, 301});
  for (auto& v : up.data()) v = std::normal_distribution<double>()(rng);
  ScanSaved<double> full, chunked;
  chunked.requested_interval = 64;
  scan_sequential(in, &full);
  scan_parallel(in, 50, 3, &chunked);
  EXPECT_EQ(full.interval, 1u);
  EXPECT_EQ(chunked.interval, 64u);
  EXPECT_LT(chunked.h.size(), full.h.size());
  auto g1 = scan_backward(in, up, full), g2 = scan_backward(in, up, chunked);
  EXPECT_LT(normwise_deviation(g2.x, g1.x), 1e-12);
  EXPECT_LT(normwise_deviation(g2.a, g1.a), 1e-12);
  EXPECT_LT(normwise_deviation(g2.delta, g1.delta), 1e-12);
  EXPECT_LT(normwise_deviation(g2.b, g1.b), 1e-12);
}

TEST(ScanBackward, LongSequencesUseCheckpoints) {
  EXPECT_EQ(storage_interval(4096), 1u);
  EXPECT_EQ(storage_interval(4097), kRecomputeInterval);
}

TEST(ScanBackward, MissingSavedStateIsAnError) {
  std::mt19937_64 rng(41);
  auto in = random_inputs<double>(1, 2, 5, 2, rng);
  ScanSaved<double> empty;
  EXPECT_THROW(scan_backward(in, Tensor<double>({1, 2, 5}), empty), std::logic_error);
  ScanSaved<double> other;
  scan_sequential(random_inputs<double>(1, 2, 6, 2, rng), &other);
  EXPECT_THROW(scan_backward(in, Tensor<double>({1, 2, 5}), other), std::logic_error);
}

TEST(SelectiveSsmLayer, InitialisationInvariants) {
  std::mt19937_64 rng(43);
  SelectiveSsm<float> layer(6, 5, rng);
  const auto a = layer.continuous_a();
  for (float v : a.data()) EXPECT_LT(v, 0.f);
  EXPECT_NEAR(a.at({0, 2}), -3.f, 1e-6f);
  for (float v : layer.b_delta.value().data()) {
    const double sp = std::log1p(std::exp(static_cast<double>(v)));
    EXPECT_GE(sp, 1e-3 - 1e-7);
    EXPECT_LE(sp, 1e-1 + 1e-7);
  }
  for (float v : layer.d_skip.value().data()) EXPECT_EQ(v, 1.f);
  ParamList<float> params;
  layer.collect("ssm", params);
  EXPECT_EQ(params.size(), 6u);
  EXPECT_EQ(count_params(params), 6u * 5 + 36 + 6 + 5 * 6 * 2 + 6);
}

TEST(SelectiveSsmLayer, StepIsAlwaysPositive) {
  std::mt19937_64 rng(47);
  SelectiveSsm<double> layer(3, 2, rng);
  auto x = constant(random_normal({2, 3, 40}, rng, 50.0));
  auto delta = ops::softplus(ops::pointwise(x, layer.w_delta, layer.b_delta));
  for (double v : delta.value().data()) EXPECT_GT(v, 0.0);
  EXPECT_EQ(layer.forward(x).shape(), (Shape{2, 3, 40}));
}

TEST(SelectiveSsmLayer, GradientCheck) {
  GradCheckRegistry reg;
  register_ssm_cases(reg);
  auto r = reg.run("selective_ssm", {1, 3, 10, 2}, 5);
  EXPECT_LT(r.max_rel_err, 1e-4);
}

TEST(SelectiveSsmLayer, ParallelOptionMatchesSequential) {
  std::mt19937_64 rng(53);
  SelectiveSsm<float> layer(4, 3, rng);
  auto x = constant(init_uniform<float>({2, 4, 100}, rng, -1, 1));
  auto a = layer.forward(x), b = layer.forward(x, {16, 2});
  EXPECT_LT(normwise_deviation(b.value(), a.value()), 1e-5);
}

TEST(BenchScan, SingleRepeatGivesOneRow) {
  BenchConfig cfg;
  cfg.length = 256;
  cfg.channels = 2;
  cfg.states = 4;
  cfg.repeats = 1;
  std::vector<BenchRow> rows{bench_scan(cfg)};
  std::ostringstream os;
  write_bench_csv(os, rows);
  const std::string csv = os.str();
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "kernel,L,D,N,median_ns,throughput");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 2);
  EXPECT_GT(rows[0].throughput, 0.0);
  EXPECT_THROW(parse_kernel("fast"), std::invalid_argument);
  cfg.length = 0;
  EXPECT_THROW(bench_scan(cfg), std::invalid_argument);
}
