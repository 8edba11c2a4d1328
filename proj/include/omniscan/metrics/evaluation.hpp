#pragma once

#include <cstdint>
#include <ostream>
#include <string>
#include <vector>

#include "omniscan/metrics/box.hpp"

namespace omniscan::metrics {

inline constexpr double kDefaultIouThreshold = 0.5;

struct MatchResult {
  std::vector<bool> true_positive;   // per prediction, input order
  std::vector<long> matched_gt;      // per prediction, -1 when unmatched
  std::vector<bool> detected;        // per ground truth
  double iou_threshold = kDefaultIouThreshold;
};

/// Greedy matching in descending score (ties by input index). A prediction is a
/// true positive when its best-IoU unmatched same-class ground truth reaches the
/// threshold; IoU ties go to the lower ground-truth index.
MatchResult match(const std::vector<Detection>& predictions, const std::vector<GroundTruth>& truths,
                  double iou_threshold = kDefaultIouThreshold);

struct Prf {
  double precision = 0, recall = 0, f1 = 0;
};

/// Zero denominators give 0. Throws std::invalid_argument for negative counts.
Prf precision_recall_f1(long tp, long fp, long fn);

/// F1 from precision and recall fractions.
double f1_score(double precision, double recall);

/// All-point AP over outcomes ranked by descending score: the precision envelope
/// (max precision at any later rank) summed at each true positive, over gt_count.
/// gt_count == 0 with predictions gives 0 and sets *warning.
double average_precision(const std::vector<bool>& ranked_tp, std::size_t gt_count, std::string* warning = nullptr);

struct ScoredOutcome {
  double score;
  bool tp;
};

/// Sorts by descending score (stable) and integrates.
double average_precision(std::vector<ScoredOutcome> outcomes, std::size_t gt_count, std::string* warning = nullptr);

struct ClassReport {
  std::string name;
  long tp = 0, fp = 0, fn = 0;
  double precision = 0, recall = 0, f1 = 0, ap = 0;
};

struct EvalReport {
  std::vector<ClassReport> classes;
  double avg_precision = 0, avg_recall = 0, avg_f1 = 0, map = 0;
  std::vector<std::string> warnings;
};

/// Unweighted means over the classes. Throws std::invalid_argument for an empty list.
EvalReport map_and_averages(std::vector<ClassReport> classes);

struct ImageResult {
  std::vector<Detection> predictions;
  std::vector<GroundTruth> truths;
};

struct EvalOptions {
  double iou_threshold = kDefaultIouThreshold;
  /// Predictions at or above this score count for precision, recall and F1;
  /// AP always uses every prediction.
  double conf_threshold = 0.5;
};

EvalReport evaluate(const std::vector<ImageResult>& images, const std::vector<std::string>& class_names,
                    const EvalOptions& opt = {});

/// Round half away from zero to `decimals` places.
double round_half_away(double value, int decimals);

/// Text table: Class, F1, Recall (%), Precision (%), AP (%), then the Average row and mAP.
void write_table(std::ostream& os, const EvalReport& report);
/// CSV: class,f1,recall,precision,ap (fractions), one row per class plus Average.
void write_csv(std::ostream& os, const EvalReport& report);

}  // namespace omniscan::metrics
