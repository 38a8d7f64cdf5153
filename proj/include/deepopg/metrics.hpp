#pragma once

#include <array>
#include <optional>
#include <span>
#include <vector>

#include "deepopg/core.hpp"

namespace deepopg {

/// A labelled instance mask with a confidence; ground truth ignores `score`.
struct EvalObject {
  int cls = kBackgroundClass;
  double score = 1.0;
  BinaryMask mask;
};

enum class MatchStatus { kTruePositive, kFalsePositive };

struct MatchResult {
  double iou_threshold = 0.5;
  std::vector<MatchStatus> pred_status;
  /// Ground-truth index matched by each prediction (TPs only).
  std::vector<std::optional<std::size_t>> pred_match;
  /// Prediction index matched to each ground truth; nullopt means FN.
  std::vector<std::optional<std::size_t>> gt_match;

  std::size_t true_positives() const;
  std::size_t false_positives() const;
  std::size_t false_negatives() const;
};

/// True when `iou` counts as a hit: any overlap at threshold 0, otherwise
/// iou >= threshold.
bool iou_passes(double iou, double threshold);

/// Greedy matching in order of decreasing confidence (earlier index first on
/// ties). Each prediction takes the unmatched ground truth of highest IoU
/// (same class when class_aware) if that IoU passes the threshold.
MatchResult match_detections(std::span<const EvalObject> pred, std::span<const EvalObject> gt,
                             double iou_threshold, bool class_aware = true);

/// All-point interpolated AP over the confidence-ranked detections pooled
/// across images. Throws std::invalid_argument when there is no ground truth.
double average_precision(std::span<const std::vector<EvalObject>> pred_lists,
                         std::span<const std::vector<EvalObject>> gt_lists, double iou_threshold,
                         bool class_aware = true);

/// Area under the monotone precision envelope of a ranked TP/FP list.
double envelope_ap(std::span<const bool> ranked_hits, std::size_t total_positives);

struct DetectionCounts {
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t fn = 0;

  static DetectionCounts of(const MatchResult& match);
  DetectionCounts& operator+=(const DetectionCounts& o) {
    tp += o.tp;
    fp += o.fp;
    fn += o.fn;
    return *this;
  }
};

struct DaFa {
  double da = 0.0;
  double fa = 0.0;
};

/// DA = (TP + FN) / (TP + FN + FP), FA = TP / (TP + FN + FP).
DaFa da_fa(const DetectionCounts& counts);
DaFa da_fa(const MatchResult& match);

/// Σ|P ∩ G| over matched pairs divided by the pairs' union areas plus the
/// areas of every unmatched prediction and ground truth.
double per_image_iou(std::span<const BinaryMask> pred_masks, std::span<const BinaryMask> gt_masks,
                     std::span<const std::optional<std::size_t>> assignment_to_gt);

/// IoU of the label-c pixel sets for each functional class; nullopt when the
/// class appears in neither map.
std::array<std::optional<double>, kNumSegClasses> segmentation_iou(const SegmentationMap& pred,
                                                                   const SegmentationMap& gt);

/// Mean and standard error of the mean.
struct MeanSe {
  double mean = 0.0;
  double se = 0.0;
};
MeanSe mean_se(std::span<const double> values);

}  // namespace deepopg
