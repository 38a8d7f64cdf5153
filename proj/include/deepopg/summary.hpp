#pragma once

#include <array>
#include <optional>
#include <span>
#include <vector>

#include "deepopg/coherence.hpp"
#include "deepopg/core.hpp"
#include "deepopg/study.hpp"

namespace deepopg {

using SegFractions = std::array<double, kNumSegClasses>;

/// Share of the mask's pixels carrying each functional class. Throws
/// ConstraintError for an empty mask and DimensionError on a size mismatch.
SegFractions finding_fractions(const SegmentationMap& seg, const BinaryMask& mask);

/// Implant detection placed on a tooth slot by summarize_study.
struct ImplantPlacement {
  std::size_t detection = 0;
  int tooth = 0;
  double value = 0.0;
};

/// Predictive value per tooth position and finding type.
struct FindingSummary {
  std::array<std::array<double, kNumFindings>, kNumTeeth> values{};
  /// Detection assigned to each tooth by the decoder.
  std::array<std::optional<std::size_t>, kNumTeeth> source{};
  std::vector<ImplantPlacement> implants;

  double at(int tooth, Finding f) const { return values[tooth][static_cast<int>(f)]; }
};

/// Builds the per-tooth summary from the segmentation map and a decode.
///
/// Assigned teeth take impacted / crown & bridge / restoration / root-filled
/// values from the fraction of their mask in the matching functional class.
/// The missing value is 1 minus the assigned probability, or 1 when the
/// tooth is unassigned.
///
/// Implant detections carry no tooth number, so each one is placed on an arch
/// slot: the upper or lower arch is picked by the nearer mean centre height of
/// decoded teeth, the fractional slot is interpolated from the box centres of
/// decoded teeth in that arch, and the nearest slot without a decoded tooth
/// (within 1.5 slots) is preferred. The slot's implant value is the implant
/// pixel fraction of the detection's mask.
FindingSummary summarize_study(const SegmentationMap& seg, const StudyDecode& decode,
                               std::span<const Detection> detections);

/// Operating thresholds per finding type; a value at or above the threshold is
/// reported as a positive finding.
struct ThresholdProfile {
  std::array<double, kNumFindings> thresholds{};

  /// Area thresholds at max F1 from the reference study; the implant entry,
  /// which that table leaves blank, is 0.5.
  static ThresholdProfile table1();
};

FindingMatrix binarize(const FindingSummary& summary, const ThresholdProfile& profile);

struct RocPoint {
  double threshold = 0.0;
  double tpr = 0.0;
  double tnr = 0.0;
  double f1 = 0.0;
};

struct RocCurve {
  /// Thresholds strictly decreasing; the first point uses +inf (nothing positive).
  std::vector<RocPoint> points;
  double auc = 0.0;
  std::size_t best_f1 = 0;

  const RocPoint& max_f1_point() const { return points[best_f1]; }
};

/// ROC sweep over every distinct score, predicting positive when score >=
/// threshold. AUC uses the trapezoidal rule in (1 - TNR, TPR). Throws
/// std::invalid_argument unless both classes are present.
RocCurve roc_curve(std::span<const double> scores, std::span<const bool> labels);

/// Mann-Whitney form of the AUC, counting tied pairs as one half.
double auc_rank_sum(std::span<const double> scores, std::span<const bool> labels);

/// ROC curve per finding type pooled over studies and tooth positions;
/// nullopt for types where the labels are all one class.
std::array<std::optional<RocCurve>, kNumFindings> evaluate_findings(
    std::span<const FindingSummary> predicted, std::span<const FindingMatrix> truth);

/// Mean AUC over the finding types that have a curve.
double macro_auc(const std::array<std::optional<RocCurve>, kNumFindings>& curves);

}  // namespace deepopg
