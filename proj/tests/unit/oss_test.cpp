#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "omniscan/numerics/gradcheck.hpp"
#include "omniscan/numerics/ops.hpp"
#include "omniscan/oss/ossm.hpp"

using namespace omniscan;
using namespace omniscan::oss;

namespace {

std::vector<std::size_t> order_of(Direction d, std::size_t H, std::size_t W) {
  return build_direction_map(d, H, W).order;
}

DirectionMask only(std::initializer_list<Direction> dirs) {
  DirectionMask m;
  for (auto d : dirs) m.set(static_cast<std::size_t>(d));
  return m;
}

}  // namespace

TEST(DirectionMap, RowMajorIdentity) {
  EXPECT_EQ(order_of(Direction::RowForward, 2, 2), (std::vector<std::size_t>{0, 1, 2, 3}));
}

TEST(DirectionMap, AntiDiagonalEnumeration) {
  EXPECT_EQ(order_of(Direction::Diagonal, 2, 3), (std::vector<std::size_t>{0, 1, 3, 2, 4, 5}));
}

TEST(DirectionMap, MainDiagonalEnumeration) {
  EXPECT_EQ(order_of(Direction::ReverseDiagonal, 2, 3), (std::vector<std::size_t>{3, 0, 4, 1, 5, 2}));
}

TEST(DirectionMap, ColumnMajor) {
  EXPECT_EQ(order_of(Direction::ColumnForward, 2, 3), (std::vector<std::size_t>{0, 3, 1, 4, 2, 5}));
  EXPECT_EQ(order_of(Direction::ColumnBack, 2, 3), (std::vector<std::size_t>{5, 2, 4, 1, 3, 0}));
}

TEST(DirectionMap, DiagonalGroupsFollowDefinition) {
  // Independent oracle: sort sites by (r + c, r) and (c - r, r).
  for (std::size_t H : {1, 3, 4, 7})
    for (std::size_t W : {1, 2, 5, 6}) {
      std::vector<std::size_t> sites(H * W);
      std::iota(sites.begin(), sites.end(), 0);
      auto anti = sites, main = sites;
      std::stable_sort(anti.begin(), anti.end(), [W](std::size_t a, std::size_t b) {
        return std::pair(a / W + a % W, a / W) < std::pair(b / W + b % W, b / W);
      });
      std::stable_sort(main.begin(), main.end(), [W](std::size_t a, std::size_t b) {
        auto key = [W](std::size_t s) {
          return std::pair(static_cast<long>(s % W) - static_cast<long>(s / W), s / W);
        };
        return key(a) < key(b);
      });
      EXPECT_EQ(order_of(Direction::Diagonal, H, W), anti);
      EXPECT_EQ(order_of(Direction::ReverseDiagonal, H, W), main);
    }
}

TEST(DirectionMap, RejectsEmptyGrid) {
  EXPECT_THROW(build_direction_map(Direction::RowForward, 0, 3), std::invalid_argument);
  EXPECT_THROW(build_direction_map(Direction::Diagonal, 3, 0), std::invalid_argument);
}

TEST(DirectionMap, BijectiveAndReversalLawOnAllGrids) {
  for (std::size_t H = 1; H <= 40; ++H)
    for (std::size_t W = 1; W <= 40; ++W)
      for (auto d : kAllDirections) {
        const auto m = build_direction_map(d, H, W);
        auto sorted = m.order;
        std::sort(sorted.begin(), sorted.end());
        for (std::size_t i = 0; i < H * W; ++i) {
          ASSERT_EQ(sorted[i], i);
          ASSERT_EQ(m.inverse[m.order[i]], i);
        }
        const auto rev = build_direction_map(reversed(d), H, W);
        for (std::size_t i = 0; i < H * W; ++i) ASSERT_EQ(rev.order[i], m.order[H * W - 1 - i]);
      }
}

TEST(DirectionMap, FlattenRoundTripIsBitExact) {
  std::mt19937_64 rng(3);
  for (std::size_t H = 1; H <= 40; H += 3)
    for (std::size_t W = 1; W <= 40; W += 1) {
      auto x = constant(init_uniform<float>({1, 2, H, W}, rng, -1, 1));
      for (const auto& m : *direction_maps(H, W)) ASSERT_EQ(unflatten(flatten(x, m), m).value(), x.value());
    }
}

TEST(DirectionMap, FlattenFollowsOrder) {
  const auto& m = (*direction_maps(2, 3))[static_cast<std::size_t>(Direction::ReverseDiagonal)];
  Tensor<double> t({1, 1, 2, 3}, std::vector<double>{0, 1, 2, 3, 4, 5});
  auto seq = flatten(constant(t), m).value();
  EXPECT_EQ(std::vector<double>(seq.data().begin(), seq.data().end()), (std::vector<double>{3, 0, 4, 1, 5, 2}));
  EXPECT_THROW(flatten(constant(Tensor<double>({1, 1, 3, 2})), m), ShapeError);
}

TEST(DirectionMap, CacheIsShared) {
  EXPECT_EQ(direction_maps(10, 10).get(), direction_maps(10, 10).get());
  EXPECT_NE(direction_maps(10, 10).get(), direction_maps(20, 20).get());
}

TEST(Ossm, SkipOnlyGivesEightfoldSum) {
  std::mt19937_64 rng(5);
  OssmBlock<double> block(3, 4, rng);
  for (auto d : kAllDirections) {
    block.direction(d).w_c.mutable_value().fill(0.0);
    block.direction(d).d_skip.mutable_value().fill(1.0);
  }
  auto x = constant(random_normal({2, 3, 4, 5}, rng));
  auto y = block.forward(x).value();
  for (std::size_t i = 0; i < y.size(); ++i) EXPECT_NEAR(y[i], 8.0 * x.value()[i], 1e-12);
}

TEST(Ossm, SingleSiteMatchesHandEvaluation) {
  std::mt19937_64 rng(7);
  const std::size_t C = 3, N = 2;
  OssmBlock<double> block(C, N, rng);
  auto xt = random_normal({1, C, 1, 1}, rng);
  auto y = block.forward(constant(xt)).value();
  for (std::size_t ch = 0; ch < C; ++ch) {
    double expected = 0.0;
    for (auto d : kAllDirections) {
      const auto& s = block.direction(d);
      double pre = s.b_delta.value()[ch];
      for (std::size_t j = 0; j < C; ++j) pre += s.w_delta.value().at({ch, j}) * xt[j];
      const double delta = std::log1p(std::exp(pre));
      double term = s.d_skip.value()[ch];
      for (std::size_t n = 0; n < N; ++n) {
        double bn = 0.0, cn = 0.0;
        for (std::size_t j = 0; j < C; ++j) {
          bn += s.w_b.value().at({n, j}) * xt[j];
          cn += s.w_c.value().at({n, j}) * xt[j];
        }
        const double a = -std::exp(s.a_log.value().at({ch, n}));
        term += cn * (std::exp(a * delta) - 1.0) / a * bn;
      }
      expected += term * xt[ch];
    }
    EXPECT_NEAR(y[ch], expected, 1e-12);
  }
}

TEST(Ossm, TransposeEquivarianceWithSwappedParameters) {
  std::mt19937_64 rng(11);
  OssmBlock<double> block(2, 3, rng);
  OssmBlock<double> swapped = block;
  swapped.direction(Direction::RowForward) = block.direction(Direction::ColumnForward);
  swapped.direction(Direction::ColumnForward) = block.direction(Direction::RowForward);
  swapped.direction(Direction::RowBack) = block.direction(Direction::ColumnBack);
  swapped.direction(Direction::ColumnBack) = block.direction(Direction::RowBack);
  const auto axes = only({Direction::RowForward, Direction::RowBack, Direction::ColumnForward, Direction::ColumnBack});
  auto x = constant(random_normal({1, 2, 3, 4}, rng));
  auto xt = ops::permute(x, {0, 1, 3, 2});
  auto lhs = swapped.forward(xt, axes).value();
  auto rhs = ops::permute(block.forward(x, axes), {0, 1, 3, 2}).value();
  ASSERT_EQ(lhs.shape(), rhs.shape());
  for (std::size_t i = 0; i < lhs.size(); ++i) EXPECT_NEAR(lhs[i], rhs[i], 1e-12);
}

TEST(Ossm, MergeIsAdditive) {
  std::mt19937_64 rng(13);
  OssmBlock<double> block(2, 3, rng);
  auto x = constant(random_normal({1, 2, 3, 3}, rng));
  auto full = block.forward(x).value();
  Tensor<double> sum(full.shape());
  for (std::size_t i = 0; i < kDirections; ++i) {
    auto part = block.forward(x, DirectionMask().set(i)).value();
    for (std::size_t j = 0; j < sum.size(); ++j) sum[j] += part[j];
  }
  for (std::size_t j = 0; j < sum.size(); ++j) EXPECT_NEAR(full[j], sum[j], 1e-12);

  auto& diag = block.direction(Direction::Diagonal);
  diag.w_c.mutable_value().fill(0.0);
  diag.d_skip.mutable_value().fill(0.0);
  auto without = block.forward(x).value();
  auto masked = block.forward(x, kAllDirectionsMask & ~only({Direction::Diagonal})).value();
  EXPECT_EQ(without, masked);
}

TEST(Ossm, RejectsChannelMismatch) {
  std::mt19937_64 rng(17);
  OssmBlock<float> block(4, 2, rng);
  EXPECT_THROW(block.forward(constant(Tensor<float>({1, 3, 2, 2}))), ShapeError);
}

TEST(ReceptiveProbe, SingleRowDirectionIsCausal) {
  std::mt19937_64 rng(19);
  OssmBlock<double> block(2, 3, rng);
  const auto row = only({Direction::RowForward});
  auto first = receptive_probe(block, 4, 5, 0, 0, row);
  EXPECT_TRUE(std::all_of(first.begin(), first.end(), [](bool b) { return b; }));
  auto last = receptive_probe(block, 4, 5, 3, 4, row);
  for (std::size_t s = 0; s < 20; ++s) EXPECT_EQ(last[s], s == 19);
  auto mid = receptive_probe(block, 4, 5, 2, 1, row);
  for (std::size_t s = 0; s < 20; ++s) EXPECT_EQ(mid[s], s >= 11);
}

TEST(ReceptiveProbe, AllDirectionsCoverFiveByFive) {
  std::mt19937_64 rng(23);
  OssmBlock<double> block(2, 3, rng);
  for (std::size_t r = 0; r < 5; ++r)
    for (std::size_t c = 0; c < 5; ++c) {
      auto mask = receptive_probe(block, 5, 5, r, c);
      EXPECT_EQ(std::count(mask.begin(), mask.end(), true), 25) << r << "," << c;
      std::vector<bool> uni(25, false);
      for (std::size_t i = 0; i < kDirections; ++i) {
        auto m = receptive_probe(block, 5, 5, r, c, DirectionMask().set(i));
        for (std::size_t s = 0; s < 25; ++s) uni[s] = uni[s] || m[s];
      }
      EXPECT_EQ(std::count(uni.begin(), uni.end(), true), 25);
    }
}

TEST(ReceptiveProbe, RejectsSiteOutsideGrid) {
  std::mt19937_64 rng(29);
  OssmBlock<double> block(1, 1, rng);
  EXPECT_THROW(receptive_probe(block, 3, 3, 3, 0), std::out_of_range);
}

TEST(Ossm, GradientsReachEveryDirection) {
  std::mt19937_64 rng(31);
  OssmBlock<double> block(2, 2, rng);
  auto x = parameter(random_normal({1, 2, 3, 3}, rng));
  backward(ops::sum(ops::mul(block.forward(x), constant(random_normal({1, 2, 3, 3}, rng)))));
  ParamList<double> params;
  block.collect("ossm", params);
  EXPECT_EQ(params.size(), 48u);
  for (const auto& p : params) {
    const auto g = p.var->grad();
    double norm = 0.0;
    for (double v : g.data()) norm += std::abs(v);
    EXPECT_GT(norm, 0.0) << p.name;
  }
}
