#include <algorithm>
#include <memory>
#include <numeric>
#include <stdexcept>

#include "deepopg/metrics.hpp"

namespace deepopg {

std::size_t MatchResult::true_positives() const {
  return static_cast<std::size_t>(std::count(pred_status.begin(), pred_status.end(), MatchStatus::kTruePositive));
}

std::size_t MatchResult::false_positives() const { return pred_status.size() - true_positives(); }

std::size_t MatchResult::false_negatives() const {
  return static_cast<std::size_t>(std::count(gt_match.begin(), gt_match.end(), std::nullopt));
}

bool iou_passes(double iou, double threshold) { return threshold <= 0.0 ? iou > 0.0 : iou >= threshold; }

MatchResult match_detections(std::span<const EvalObject> pred, std::span<const EvalObject> gt,
                             double iou_threshold, bool class_aware) {
  MatchResult r;
  r.iou_threshold = iou_threshold;
  r.pred_status.assign(pred.size(), MatchStatus::kFalsePositive);
  r.pred_match.assign(pred.size(), std::nullopt);
  r.gt_match.assign(gt.size(), std::nullopt);

  std::vector<std::size_t> order(pred.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return pred[a].score > pred[b].score; });
  for (std::size_t i : order) {
    double best_iou = -1.0;
    std::optional<std::size_t> best;
    for (std::size_t g = 0; g < gt.size(); ++g) {
      if (r.gt_match[g] || (class_aware && gt[g].cls != pred[i].cls)) continue;
      const double iou = mask_iou(pred[i].mask, gt[g].mask);
      if (iou > best_iou) {
        best_iou = iou;
        best = g;
      }
    }
    if (best && iou_passes(best_iou, iou_threshold)) {
      r.pred_status[i] = MatchStatus::kTruePositive;
      r.pred_match[i] = best;
      r.gt_match[*best] = i;
    }
  }
  return r;
}

double envelope_ap(std::span<const bool> ranked_hits, std::size_t total_positives) {
  if (total_positives == 0) throw std::invalid_argument("AP needs at least one ground-truth object");
  const std::size_t n = ranked_hits.size();
  std::vector<double> precision(n);
  std::size_t tp = 0;
  for (std::size_t i = 0; i < n; ++i) {
    tp += ranked_hits[i];
    precision[i] = static_cast<double>(tp) / static_cast<double>(i + 1);
  }
  for (std::size_t i = n; i-- > 1;) precision[i - 1] = std::max(precision[i - 1], precision[i]);
  double ap = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (ranked_hits[i]) ap += precision[i];
  }
  return ap / static_cast<double>(total_positives);
}

double average_precision(std::span<const std::vector<EvalObject>> pred_lists,
                         std::span<const std::vector<EvalObject>> gt_lists, double iou_threshold,
                         bool class_aware) {
  if (pred_lists.size() != gt_lists.size()) throw DimensionError("prediction and ground-truth image counts differ");
  struct Ranked {
    double score;
    bool hit;
  };
  std::vector<Ranked> ranked;
  std::size_t total_gt = 0;
  for (std::size_t img = 0; img < pred_lists.size(); ++img) {
    const MatchResult m = match_detections(pred_lists[img], gt_lists[img], iou_threshold, class_aware);
    total_gt += gt_lists[img].size();
    for (std::size_t i = 0; i < pred_lists[img].size(); ++i) {
      ranked.push_back({pred_lists[img][i].score, m.pred_status[i] == MatchStatus::kTruePositive});
    }
  }
  if (total_gt == 0) throw std::invalid_argument("AP needs at least one ground-truth object");
  std::stable_sort(ranked.begin(), ranked.end(), [](const Ranked& a, const Ranked& b) { return a.score > b.score; });
  auto hits = std::make_unique<bool[]>(ranked.size());
  for (std::size_t i = 0; i < ranked.size(); ++i) hits[i] = ranked[i].hit;
  return envelope_ap(std::span<const bool>(hits.get(), ranked.size()), total_gt);
}

DetectionCounts DetectionCounts::of(const MatchResult& match) {
  return {match.true_positives(), match.false_positives(), match.false_negatives()};
}

DaFa da_fa(const DetectionCounts& c) {
  const std::size_t total = c.tp + c.fn + c.fp;
  if (total == 0) throw std::invalid_argument("DA/FA undefined when all counts are zero");
  const double denom = static_cast<double>(total);
  return {static_cast<double>(c.tp + c.fn) / denom, static_cast<double>(c.tp) / denom};
}

DaFa da_fa(const MatchResult& match) { return da_fa(DetectionCounts::of(match)); }

double per_image_iou(std::span<const BinaryMask> pred_masks, std::span<const BinaryMask> gt_masks,
                     std::span<const std::optional<std::size_t>> assignment_to_gt) {
  if (assignment_to_gt.size() != pred_masks.size()) throw DimensionError("assignment does not cover the predictions");
  std::vector<char> gt_used(gt_masks.size(), 0);
  std::size_t inter = 0, uni = 0;
  for (std::size_t i = 0; i < pred_masks.size(); ++i) {
    const auto& g = assignment_to_gt[i];
    if (!g) {
      uni += pred_masks[i].area();
      continue;
    }
    if (*g >= gt_masks.size()) throw DimensionError("assignment refers to a missing ground truth");
    if (gt_used[*g]) throw std::invalid_argument("ground truth matched twice");
    gt_used[*g] = 1;
    const std::size_t in = intersection_area(pred_masks[i], gt_masks[*g]);
    inter += in;
    uni += pred_masks[i].area() + gt_masks[*g].area() - in;
  }
  for (std::size_t g = 0; g < gt_masks.size(); ++g) {
    if (!gt_used[g]) uni += gt_masks[g].area();
  }
  if (uni == 0) throw std::invalid_argument("per-image IoU undefined for an empty union");
  return static_cast<double>(inter) / static_cast<double>(uni);
}

}  // namespace deepopg
