#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

#include "omniscan/metrics/evaluation.hpp"
#include "support/ap_oracle.hpp"

using namespace omniscan::metrics;
using omniscan::testing::brute_force_ap;

namespace {

// Counts unit cells on a fine lattice; exact for boxes on a 1/k grid.
double raster_iou(const Box& a, const Box& b, int k) {
  long inter = 0, uni = 0;
  for (int i = -10 * k; i < 10 * k; ++i)
    for (int j = -10 * k; j < 10 * k; ++j) {
      const double x = (i + 0.5) / k, y = (j + 0.5) / k;
      const bool in_a = x > a.x0 && x < a.x1 && y > a.y0 && y < a.y1;
      const bool in_b = x > b.x0 && x < b.x1 && y > b.y0 && y < b.y1;
      inter += in_a && in_b;
      uni += in_a || in_b;
    }
  return static_cast<double>(inter) / static_cast<double>(uni);
}

// Tries every remaining (prediction, truth) candidate in score order, no shortcuts.
std::vector<long> greedy_oracle(const std::vector<Detection>& preds, const std::vector<GroundTruth>& gts) {
  std::vector<long> out(preds.size(), -1);
  std::vector<bool> used(gts.size(), false), done(preds.size(), false);
  for (std::size_t step = 0; step < preds.size(); ++step) {
    std::size_t p = preds.size();
    for (std::size_t i = 0; i < preds.size(); ++i)
      if (!done[i] && (p == preds.size() || preds[i].score > preds[p].score)) p = i;
    done[p] = true;
    double best = 0.0;
    long arg = -1;
    for (std::size_t g = 0; g < gts.size(); ++g) {
      if (used[g] || gts[g].class_id != preds[p].class_id) continue;
      const double v = iou(preds[p].box, gts[g].box);
      if (arg < 0 || v > best) best = v, arg = static_cast<long>(g);
    }
    if (arg >= 0 && best >= 0.5) {
      out[p] = arg;
      used[static_cast<std::size_t>(arg)] = true;
    }
  }
  return out;
}

std::vector<bool> pattern(unsigned bits, std::size_t k) {
  std::vector<bool> v(k);
  for (std::size_t i = 0; i < k; ++i) v[i] = (bits >> i) & 1u;
  return v;
}

}  // namespace

TEST(Iou, TrivialCases) {
  const Box a{1, 2, 4, 6};
  EXPECT_EQ(iou(a, a), 1.0);
  EXPECT_EQ(iou(a, Box{5, 2, 6, 6}), 0.0);
  EXPECT_EQ(iou(a, Box{4, 2, 6, 6}), 0.0);
}

TEST(Iou, HalfOverlapMatchesRasterOracle) {
  const Box a{0, 0, 2, 2}, b{1, 0, 3, 2};
  EXPECT_DOUBLE_EQ(raster_iou(a, b, 8), 1.0 / 3.0);
  EXPECT_DOUBLE_EQ(iou(a, b), 1.0 / 3.0);
}

TEST(Iou, RandomGridBoxesMatchRasterOracle) {
  std::mt19937_64 rng(1);
  std::uniform_int_distribution<int> coord(-16, 16);
  for (int t = 0; t < 30; ++t) {
    auto make = [&] {
      int x0 = coord(rng), x1 = coord(rng), y0 = coord(rng), y1 = coord(rng);
      if (x0 == x1) ++x1;
      if (y0 == y1) ++y1;
      return Box{std::min(x0, x1) / 2.0, std::min(y0, y1) / 2.0, std::max(x0, x1) / 2.0, std::max(y0, y1) / 2.0};
    };
    const Box a = make(), b = make();
    EXPECT_NEAR(iou(a, b), raster_iou(a, b, 2), 1e-12);
  }
}

TEST(Iou, RejectsDegenerate) {
  EXPECT_THROW(iou(Box{0, 0, 0, 1}, Box{0, 0, 1, 1}), std::invalid_argument);
  EXPECT_THROW(iou(Box{0, 0, 1, 1}, Box{0, 2, 1, 1}), std::invalid_argument);
}

TEST(Match, PerfectPrediction) {
  auto r = match({{0, 0.9, {0, 0, 10, 10}}}, {{0, {0, 0, 10, 10}}});
  EXPECT_TRUE(r.true_positive[0]);
  EXPECT_EQ(r.matched_gt[0], 0);
  EXPECT_TRUE(r.detected[0]);
}

TEST(Match, DuplicateIsFalsePositive) {
  auto r = match({{0, 0.8, {0, 0, 10, 10}}, {0, 0.9, {1, 0, 10, 10}}}, {{0, {0, 0, 10, 10}}});
  EXPECT_FALSE(r.true_positive[0]);
  EXPECT_TRUE(r.true_positive[1]);
}

TEST(Match, ClassMustAgreeAndThresholdApplies) {
  auto r = match({{1, 0.9, {0, 0, 10, 10}}, {0, 0.5, {0, 0, 10, 30}}}, {{0, {0, 0, 10, 10}}});
  EXPECT_FALSE(r.true_positive[0]);
  EXPECT_FALSE(r.true_positive[1]);
  EXPECT_FALSE(r.detected[0]);
}

TEST(Match, IouTieGoesToLowerIndex) {
  auto r = match({{0, 0.9, {0, 0, 2, 2}}}, {{0, {1, 0, 2, 2}}, {0, {0, 0, 1, 2}}}, 0.4);
  EXPECT_EQ(r.matched_gt[0], 0);
}

TEST(Match, ScoreTieGoesToLowerPredictionIndex) {
  auto r = match({{0, 0.7, {0, 0, 10, 10}}, {0, 0.7, {0, 0, 10, 10}}}, {{0, {0, 0, 10, 10}}});
  EXPECT_TRUE(r.true_positive[0]);
  EXPECT_FALSE(r.true_positive[1]);
}

TEST(Match, RandomInstancesAgreeWithGreedyOracle) {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> pos(0, 40), size(5, 20), score(0, 1);
  std::uniform_int_distribution<std::size_t> cls(0, 1);
  for (int t = 0; t < 50; ++t) {
    std::vector<GroundTruth> gts;
    for (int g = 0; g < 4; ++g) {
      const double x = pos(rng), y = pos(rng);
      gts.push_back({cls(rng), {x, y, x + size(rng), y + size(rng)}});
    }
    std::vector<Detection> preds;
    for (int p = 0; p < 10; ++p) {
      const auto& g = gts[static_cast<std::size_t>(p) % 4];
      const double jx = score(rng) * 6 - 3, jy = score(rng) * 6 - 3;
      preds.push_back({p % 3 == 0 ? cls(rng) : g.class_id, score(rng),
                       {g.box.x0 + jx, g.box.y0 + jy, g.box.x1 + jx, g.box.y1 + jy}});
    }
    auto r = match(preds, gts);
    EXPECT_EQ(r.matched_gt, greedy_oracle(preds, gts));
    for (std::size_t p = 0; p < preds.size(); ++p) EXPECT_EQ(r.true_positive[p], r.matched_gt[p] >= 0);
  }
}

TEST(Prf, Examples) {
  const auto sym = precision_recall_f1(5, 5, 5);
  EXPECT_DOUBLE_EQ(sym.precision, 0.5);
  EXPECT_DOUBLE_EQ(sym.recall, 0.5);
  EXPECT_DOUBLE_EQ(sym.f1, 0.5);
  const auto empty = precision_recall_f1(0, 0, 0);
  EXPECT_EQ(empty.precision, 0.0);
  EXPECT_EQ(empty.recall, 0.0);
  EXPECT_EQ(empty.f1, 0.0);
  EXPECT_THROW(precision_recall_f1(-1, 0, 0), std::invalid_argument);
}

TEST(Prf, AngerRowF1) { EXPECT_EQ(round_half_away(f1_score(0.7534, 0.7143), 2), 0.73); }

TEST(AveragePrecision, Examples) {
  EXPECT_DOUBLE_EQ(average_precision(std::vector<bool>{true, true, true}, 3), 1.0);
  EXPECT_NEAR(average_precision(std::vector<bool>{true, false, true}, 2), 0.5 + 0.5 * 2.0 / 3.0, 1e-15);
  EXPECT_EQ(average_precision(std::vector<bool>{}, 4), 0.0);
  std::string warning;
  EXPECT_EQ(average_precision(std::vector<bool>{false, false}, 0, &warning), 0.0);
  EXPECT_FALSE(warning.empty());
}

TEST(AveragePrecision, AllPatternsMatchBruteForceIntegrator) {
  for (std::size_t k = 1; k <= 10; ++k)
    for (unsigned bits = 0; bits < (1u << k); ++bits) {
      const auto ranked = pattern(bits, k);
      const auto tp = std::count(ranked.begin(), ranked.end(), true);
      for (std::int64_t gt : {std::max<std::int64_t>(tp, 1), tp + 3}) {
        const double expected = brute_force_ap(ranked, gt).value();
        ASSERT_NEAR(average_precision(ranked, static_cast<std::size_t>(gt)), expected, 1e-15) << k << ":" << bits;
      }
    }
}

TEST(AveragePrecision, InvariantToMonotoneRescaling) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(0, 1);
  for (int t = 0; t < 20; ++t) {
    std::vector<ScoredOutcome> a;
    for (int i = 0; i < 15; ++i) a.push_back({u(rng), u(rng) < 0.6});
    auto b = a;
    for (auto& o : b) o.score = std::exp(3 * o.score) - 7;
    EXPECT_EQ(average_precision(a, 12), average_precision(b, 12));
  }
}

TEST(AveragePrecision, TrailingFalsePositiveNeverHelps) {
  for (std::size_t k = 1; k <= 8; ++k)
    for (unsigned bits = 0; bits < (1u << k); ++bits) {
      auto ranked = pattern(bits, k);
      const double before = average_precision(ranked, k);
      ranked.push_back(false);
      EXPECT_LE(average_precision(ranked, k), before);
      EXPECT_GE(before, 0.0);
      EXPECT_LE(before, 1.0);
    }
}

TEST(Averages, TwoClassMap) {
  auto r = map_and_averages({{"a", 0, 0, 0, 0, 0, 0, 1.0}, {"b", 0, 0, 0, 0, 0, 0, 0.5}});
  EXPECT_DOUBLE_EQ(r.map, 0.75);
  EXPECT_THROW(map_and_averages({}), std::invalid_argument);
}

TEST(Averages, ReproducesPublishedAverageRow) {
  const double f1[] = {0.73, 0.61, 0.61, 0.91, 0.75, 0.77, 0.84};
  const double rec[] = {71.43, 53.33, 48.57, 92.53, 84.41, 75.00, 85.38};
  const double prec[] = {75.34, 70.00, 80.95, 90.45, 67.89, 80.00, 83.43};
  std::vector<ClassReport> rows;
  for (int i = 0; i < 7; ++i) {
    ClassReport c;
    c.f1 = f1[i];
    c.recall = rec[i] / 100;
    c.precision = prec[i] / 100;
    rows.push_back(c);
  }
  auto r = map_and_averages(rows);
  EXPECT_EQ(round_half_away(r.avg_f1, 2), 0.75);
  EXPECT_EQ(round_half_away(r.avg_recall * 100, 2), 72.95);
  EXPECT_EQ(round_half_away(r.avg_precision * 100, 2), 78.29);
}

TEST(Rounding, HalfAwayFromZero) {
  EXPECT_EQ(round_half_away(0.125, 2), 0.13);
  EXPECT_EQ(round_half_away(-0.125, 2), -0.13);
  EXPECT_EQ(round_half_away(2.5, 0), 3.0);
  EXPECT_EQ(round_half_away(0.745, 2), 0.75);
  EXPECT_EQ(round_half_away(0.7449, 2), 0.74);
}

TEST(Evaluate, CountsAndReports) {
  std::vector<ImageResult> images(2);
  images[0].truths = {{0, {0, 0, 10, 10}}, {1, {20, 20, 30, 30}}};
  images[0].predictions = {{0, 0.9, {0, 0, 10, 10}}, {1, 0.3, {20, 20, 30, 30}}, {1, 0.8, {50, 50, 60, 60}}};
  images[1].truths = {{0, {5, 5, 15, 15}}};
  images[1].predictions = {{0, 0.6, {5, 5, 15, 15}}};
  auto r = evaluate(images, {"a", "b", "c"});
  EXPECT_EQ(r.classes[0].tp, 2);
  EXPECT_EQ(r.classes[0].fn, 0);
  EXPECT_DOUBLE_EQ(r.classes[0].ap, 1.0);
  EXPECT_EQ(r.classes[1].tp, 0);
  EXPECT_EQ(r.classes[1].fp, 1);
  EXPECT_EQ(r.classes[1].fn, 1);
  EXPECT_DOUBLE_EQ(r.classes[1].ap, 0.5);  // [FP, TP] over 1 GT
  EXPECT_EQ(r.classes[2].ap, 0.0);
  EXPECT_TRUE(r.warnings.empty());
  for (const auto& c : r.classes)
    for (double v : {c.precision, c.recall, c.f1, c.ap}) {
      EXPECT_GE(v, 0.0);
      EXPECT_LE(v, 1.0);
    }

  std::ostringstream table, csv;
  write_table(table, r);
  write_csv(csv, r);
  EXPECT_NE(table.str().find("Average"), std::string::npos);
  EXPECT_NE(table.str().find("half away from zero"), std::string::npos);
  const std::string text = csv.str();
  EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 5);
  EXPECT_EQ(text.rfind("Average,", 0), std::string::npos);
  EXPECT_NE(text.find("\nAverage,"), std::string::npos);
}
