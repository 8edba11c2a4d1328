#include "omniscan/metrics/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace omniscan::metrics {

namespace {

std::vector<std::size_t> by_descending_score(const std::vector<Detection>& preds) {
  std::vector<std::size_t> idx(preds.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return preds[a].score > preds[b].score; });
  return idx;
}

double ratio(long num, long den) { return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den); }

}  // namespace

MatchResult match(const std::vector<Detection>& preds, const std::vector<GroundTruth>& truths, double iou_threshold) {
  MatchResult r;
  r.iou_threshold = iou_threshold;
  r.true_positive.assign(preds.size(), false);
  r.matched_gt.assign(preds.size(), -1);
  r.detected.assign(truths.size(), false);
  for (std::size_t p : by_descending_score(preds)) {
    long best = -1;
    double best_iou = -1.0;
    for (std::size_t g = 0; g < truths.size(); ++g) {
      if (r.detected[g] || truths[g].class_id != preds[p].class_id) continue;
      const double v = iou(preds[p].box, truths[g].box);
      if (v > best_iou) {
        best_iou = v;
        best = static_cast<long>(g);
      }
    }
    if (best >= 0 && best_iou >= iou_threshold) {
      r.true_positive[p] = true;
      r.matched_gt[p] = best;
      r.detected[static_cast<std::size_t>(best)] = true;
    }
  }
  return r;
}

Prf precision_recall_f1(long tp, long fp, long fn) {
  if (tp < 0 || fp < 0 || fn < 0) throw std::invalid_argument("precision_recall_f1: counts must be non-negative");
  Prf r;
  r.precision = ratio(tp, tp + fp);
  r.recall = ratio(tp, tp + fn);
  r.f1 = f1_score(r.precision, r.recall);
  return r;
}

double f1_score(double precision, double recall) {
  const double s = precision + recall;
  return s == 0.0 ? 0.0 : 2.0 * precision * recall / s;
}

double average_precision(const std::vector<bool>& ranked_tp, std::size_t gt_count, std::string* warning) {
  if (gt_count == 0) {
    if (!ranked_tp.empty() && warning) *warning = "predictions present for a class without ground truth; AP set to 0";
    return 0.0;
  }
  const std::size_t n = ranked_tp.size();
  std::vector<double> precision(n);
  std::size_t tp = 0;
  for (std::size_t i = 0; i < n; ++i) {
    tp += ranked_tp[i] ? 1 : 0;
    precision[i] = static_cast<double>(tp) / static_cast<double>(i + 1);
  }
  // Right-max envelope.
  for (std::size_t i = n; i-- > 1;) precision[i - 1] = std::max(precision[i - 1], precision[i]);
  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    if (ranked_tp[i]) sum += precision[i];
  return sum / static_cast<double>(gt_count);
}

double average_precision(std::vector<ScoredOutcome> outcomes, std::size_t gt_count, std::string* warning) {
  std::stable_sort(outcomes.begin(), outcomes.end(),
                   [](const ScoredOutcome& a, const ScoredOutcome& b) { return a.score > b.score; });
  std::vector<bool> ranked(outcomes.size());
  for (std::size_t i = 0; i < outcomes.size(); ++i) ranked[i] = outcomes[i].tp;
  return average_precision(ranked, gt_count, warning);
}

EvalReport map_and_averages(std::vector<ClassReport> classes) {
  if (classes.empty()) throw std::invalid_argument("map_and_averages: at least one class is required");
  EvalReport r;
  const double n = static_cast<double>(classes.size());
  for (const auto& c : classes) {
    r.avg_precision += c.precision / n;
    r.avg_recall += c.recall / n;
    r.avg_f1 += c.f1 / n;
    r.map += c.ap / n;
  }
  r.classes = std::move(classes);
  return r;
}

EvalReport evaluate(const std::vector<ImageResult>& images, const std::vector<std::string>& names,
                    const EvalOptions& opt) {
  const std::size_t K = names.size();
  std::vector<std::vector<ScoredOutcome>> outcomes(K);
  std::vector<std::size_t> gt_count(K, 0);
  std::vector<long> tp(K, 0), fp(K, 0);
  for (const auto& img : images) {
    for (const auto& g : img.truths) {
      if (g.class_id >= K) throw std::invalid_argument("evaluate: ground-truth class id out of range");
      ++gt_count[g.class_id];
    }
    const auto m = match(img.predictions, img.truths, opt.iou_threshold);
    for (std::size_t p = 0; p < img.predictions.size(); ++p) {
      const auto& d = img.predictions[p];
      if (d.class_id >= K) throw std::invalid_argument("evaluate: predicted class id out of range");
      outcomes[d.class_id].push_back({d.score, m.true_positive[p]});
      if (d.score >= opt.conf_threshold) ++(m.true_positive[p] ? tp : fp)[d.class_id];
    }
  }
  std::vector<ClassReport> classes(K);
  std::vector<std::string> warnings;
  for (std::size_t k = 0; k < K; ++k) {
    auto& c = classes[k];
    c.name = names[k];
    c.tp = tp[k];
    c.fp = fp[k];
    c.fn = static_cast<long>(gt_count[k]) - tp[k];
    const auto prf = precision_recall_f1(c.tp, c.fp, c.fn);
    c.precision = prf.precision;
    c.recall = prf.recall;
    c.f1 = prf.f1;
    std::string warning;
    c.ap = average_precision(outcomes[k], gt_count[k], &warning);
    if (!warning.empty()) warnings.push_back(names[k] + ": " + warning);
  }
  auto report = map_and_averages(std::move(classes));
  report.warnings = std::move(warnings);
  return report;
}

double round_half_away(double value, int decimals) {
  const double scale = std::pow(10.0, decimals);
  // Nudge by a few ulps so values like 0.745 stored as 0.74499999... round as printed.
  const double scaled = value * scale;
  const double nudged = scaled + std::copysign(std::abs(scaled) * 4 * std::numeric_limits<double>::epsilon(), scaled);
  return std::copysign(std::floor(std::abs(nudged) + 0.5), value) / scale;
}

void write_table(std::ostream& os, const EvalReport& r) {
  auto row = [&os](const std::string& name, double f1, double recall, double precision, double ap) {
    os << std::left << std::setw(12) << name << std::right << std::fixed << std::setprecision(2) << std::setw(8)
       << round_half_away(f1, 2) << std::setw(12) << round_half_away(recall * 100, 2) << std::setw(15)
       << round_half_away(precision * 100, 2) << std::setw(10) << round_half_away(ap * 100, 2) << '\n';
  };
  os << std::left << std::setw(12) << "Class" << std::right << std::setw(8) << "F1" << std::setw(12) << "Recall(%)"
     << std::setw(15) << "Precision(%)" << std::setw(10) << "AP(%)" << '\n';
  for (const auto& c : r.classes) row(c.name, c.f1, c.recall, c.precision, c.ap);
  row("Average", r.avg_f1, r.avg_recall, r.avg_precision, r.map);
  os << "mAP(%) " << std::fixed << std::setprecision(2) << round_half_away(r.map * 100, 2) << '\n';
  os << "values rounded half away from zero\n";
  for (const auto& w : r.warnings) os << "warning: " << w << '\n';
}

void write_csv(std::ostream& os, const EvalReport& r) {
  os << "class,f1,recall,precision,ap\n";
  os << std::setprecision(10);
  for (const auto& c : r.classes)
    os << c.name << ',' << c.f1 << ',' << c.recall << ',' << c.precision << ',' << c.ap << '\n';
  os << "Average," << r.avg_f1 << ',' << r.avg_recall << ',' << r.avg_precision << ',' << r.map << '\n';
}

}  // namespace omniscan::metrics
