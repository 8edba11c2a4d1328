#pragma once

#include <cstdint>
#include <numeric>
#include <vector>

namespace omniscan::testing {

struct Fraction {
  std::int64_t num = 0, den = 1;

  Fraction() = default;
  Fraction(std::int64_t n, std::int64_t d) : num(n), den(d) {
    const auto g = std::gcd(num, den);
    if (g > 1) num /= g, den /= g;
  }
  friend Fraction operator+(Fraction a, Fraction b) { return {a.num * b.den + b.num * a.den, a.den * b.den}; }
  friend Fraction operator-(Fraction a, Fraction b) { return {a.num * b.den - b.num * a.den, a.den * b.den}; }
  friend Fraction operator*(Fraction a, Fraction b) { return {a.num * b.num, a.den * b.den}; }
  friend bool operator<(Fraction a, Fraction b) { return a.num * b.den < b.num * a.den; }
  double value() const { return static_cast<double>(num) / static_cast<double>(den); }
};

/// Area under the right-max interpolated PR curve, walked point by point in exact
/// rational arithmetic: sum over ranks of (recall step) * (best precision at any
/// recall at least as large).
inline Fraction brute_force_ap(const std::vector<bool>& ranked_tp, std::int64_t gt_count) {
  const std::size_t n = ranked_tp.size();
  std::vector<Fraction> recall(n), precision(n);
  std::int64_t tp = 0;
  for (std::size_t i = 0; i < n; ++i) {
    tp += ranked_tp[i];
    recall[i] = Fraction(tp, gt_count);
    precision[i] = Fraction(tp, static_cast<std::int64_t>(i + 1));
  }
  Fraction area, prev_recall;
  for (std::size_t i = 0; i < n; ++i) {
    Fraction best;
    for (std::size_t j = 0; j < n; ++j)
      if (!(recall[j] < recall[i]) && best < precision[j]) best = precision[j];
    area = area + (recall[i] - prev_recall) * best;
    prev_recall = recall[i];
  }
  return area;
}

}  // namespace omniscan::testing
