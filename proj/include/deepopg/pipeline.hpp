#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "deepopg/coherence.hpp"
#include "deepopg/metrics.hpp"
#include "deepopg/study.hpp"
#include "deepopg/summary.hpp"
#include "deepopg/weaksup.hpp"

namespace deepopg {

// Detection predictions ------------------------------------------------------

/// Decoded teeth scored by their assigned probability plus pass-through
/// implant detections scored by their implant probability.
std::vector<EvalObject> dcr_predictions(std::span<const Detection> detections, const StudyDecode& decode);

/// Baseline without coherence: every non-background detection labelled with
/// its argmax class, then per-class greedy non-maximum suppression.
std::vector<EvalObject> argmax_nms_predictions(std::span<const Detection> detections, double nms_iou = 0.5);

/// Ground-truth objects of a study; throws ConstraintError when absent.
std::vector<EvalObject> truth_objects(const Study& study);

enum class DecodeMethod { kCoherence, kArgmaxNms };

std::vector<EvalObject> predict_objects(const Study& study, DecodeMethod method, const DecoderConfig& config);

// Detection evaluation -------------------------------------------------------

struct DetectionReport {
  std::vector<double> iou_thresholds;
  std::vector<double> ap;
  /// Bootstrap standard error over studies.
  std::vector<double> ap_se;
  /// DA and FA pooled over studies at the first threshold, with per-study SEs.
  MeanSe da;
  MeanSe fa;
  DaFa pooled;
  /// Per-image IoU at the first threshold.
  MeanSe image_iou;
};

/// `bootstrap_rounds` = 0 skips the AP standard errors.
DetectionReport evaluate_detection(std::span<const std::vector<EvalObject>> predictions,
                                   std::span<const std::vector<EvalObject>> truth,
                                   std::span<const double> iou_thresholds, int bootstrap_rounds = 200,
                                   std::uint64_t seed = 0);

// Findings -------------------------------------------------------------------

/// Summary of a study's own detections against its own segmentation map.
FindingSummary summarize(const Study& study, const DecoderConfig& config);

// Weak supervision dataset ---------------------------------------------------

/// Horizontal radial-basis centres per arch.
inline constexpr int kPositionCentres = 16;
/// Log probabilities map to features as max(0, 1 + log p / kLogScale), so a
/// probability of 1e-6 or less reads as 0 and a certain class reads as 1.
inline constexpr double kLogScale = 13.815510557964274;
/// 32 scaled log tooth probabilities followed by 2 x 16 position features.
inline constexpr int kPolicyFeatures = kNumTeeth + 2 * kPositionCentres;

/// Policy inputs for the rows of tooth_problem(detections).
Matrix policy_features(std::span<const Detection> detections, const ToothProblem& problem, int width,
                       int height);

/// Training instance from a study with a dentition label. Truth classes come
/// from the ground-truth block; without one `truth` is left empty.
TrainingInstance training_instance(const Study& study);

/// Policy that starts out reproducing the detector's tooth probabilities.
ToyPolicy initial_policy();

}  // namespace deepopg
