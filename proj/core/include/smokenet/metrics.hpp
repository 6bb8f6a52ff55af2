#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "smokenet/box.hpp"

namespace smokenet {

struct Detection {
  std::string image_id;
  int class_id = 0;
  double confidence = 0.0;  // [0, 1]
  Box box;

  friend bool operator==(const Detection&, const Detection&) = default;
};

struct GroundTruth {
  std::string image_id;
  int class_id = 0;
  Box box;

  friend bool operator==(const GroundTruth&, const GroundTruth&) = default;
};

struct ConfusionCounts {
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t fn = 0;
  std::size_t tn = 0;

  ConfusionCounts& operator+=(const ConfusionCounts& o) {
    tp += o.tp;
    fp += o.fp;
    fn += o.fn;
    tn += o.tn;
    return *this;
  }
  friend bool operator==(const ConfusionCounts&, const ConfusionCounts&) = default;
};

// Intersection over union; 0 for disjoint boxes or a zero-area box.
double iou(const Box& a, const Box& b);

struct MatchResult {
  ConfusionCounts counts;
  // One flag per input detection, in input order.
  std::vector<bool> is_tp;
  // Input indices sorted by descending confidence, ties by input order.
  std::vector<std::size_t> rank_order;
};

/// Greedy matching: detections in descending confidence take their best-IoU
/// unmatched ground truth of the same class and image; IoU >= threshold is a
/// true positive. Unmatched ground truths are false negatives.
MatchResult match_detections(std::span<const Detection> detections,
                             std::span<const GroundTruth> ground_truths,
                             double iou_threshold = 0.5);

struct PrecisionRecallF1 {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

PrecisionRecallF1 precision_recall_f1(const ConfusionCounts& c);

double accuracy(std::span<const int> predicted, std::span<const int> truth);

// Confusion counts of a classifier, treating `positive_class` as positive.
ConfusionCounts classification_counts(std::span<const int> predicted,
                                      std::span<const int> truth,
                                      int positive_class);

/// All-point interpolated AP over TP/FP flags already in descending
/// confidence order.
double average_precision(const std::vector<bool>& ranked_is_tp, std::size_t num_gt);

struct ClassAp {
  int class_id = 0;
  std::size_t num_gt = 0;
  std::size_t num_detections = 0;
  double ap = 0.0;
};

struct MapResult {
  double map50 = 0.0;
  std::vector<ClassAp> per_class;  // classes with >= 1 ground truth
};

// Mean AP at IoU 0.5 over classes with ground truth; throws ValidationError
// when no listed class has any.
MapResult map50(std::span<const Detection> detections,
                std::span<const GroundTruth> ground_truths,
                std::span<const int> classes);

/// One row of the comparison table. Accuracy only exists for whole-image
/// classification and mAP@50 only for boxed detections, so both may be
/// absent.
struct MetricsReport {
  std::string model;
  std::optional<double> accuracy;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::optional<double> map50;
  std::map<int, double> per_class_ap;

  friend bool operator==(const MetricsReport&, const MetricsReport&) = default;
};

MetricsReport detection_report(std::string model,
                               std::span<const Detection> detections,
                               std::span<const GroundTruth> ground_truths,
                               std::span<const int> classes);
MetricsReport classification_report(std::string model,
                                    std::span<const int> predicted,
                                    std::span<const int> truth,
                                    int positive_class = 0);

// "Model Acc Prec Rec F1 mAP@50" header then one space-separated row per
// report with percentages to two decimals; absent values print as "-".
std::string render_table1(std::span<const MetricsReport> reports);

std::string report_to_json(const MetricsReport& r);
MetricsReport report_from_json(std::string_view text);

// "image_id class_id confidence cx cy w h", one per line.
std::vector<Detection> parse_detections(std::string_view text,
                                        const std::string& origin = "<detections>");
std::string format_detections(std::span<const Detection> detections);
std::vector<Detection> load_detections(const std::filesystem::path& path);

// "image_id class_id cx cy w h" per line from a file, or a directory of
// YOLO sidecars (image_id = file stem).
std::vector<GroundTruth> parse_ground_truth(std::string_view text,
                                            const std::string& origin = "<ground-truth>");
std::string format_ground_truth(std::span<const GroundTruth> gts);
std::vector<GroundTruth> load_ground_truth(const std::filesystem::path& path);

}  // namespace smokenet
