#include "deepopg/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <numeric>

#include "deepopg/random.hpp"

namespace deepopg {

std::vector<EvalObject> dcr_predictions(std::span<const Detection> detections, const StudyDecode& decode) {
  std::vector<EvalObject> out;
  const auto choices = decode.result.assignment.choices();
  for (std::size_t r = 0; r < choices.size(); ++r) {
    const int t = choices[r];
    if (t == Assignment::kNone) continue;
    const Detection& det = detections[decode.problem.objects[r]];
    const int cls = det_class_of_tooth(t);
    out.push_back({cls, decode.problem.probs(r, static_cast<std::size_t>(t)), det.mask(cls)});
  }
  for (std::size_t i : decode.implants) {
    const Detection& det = detections[i];
    out.push_back({kImplantClass, det.probs[kImplantClass], det.mask(kImplantClass)});
  }
  return out;
}

std::vector<EvalObject> argmax_nms_predictions(std::span<const Detection> detections, double nms_iou) {
  std::vector<EvalObject> candidates;
  for (const Detection& det : detections) {
    const int cls = det.argmax();
    if (cls == kBackgroundClass) continue;
    candidates.push_back({cls, det.probs[cls], det.mask(cls)});
  }
  std::vector<std::size_t> order(candidates.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return candidates[a].score > candidates[b].score; });
  std::vector<EvalObject> kept;
  for (std::size_t i : order) {
    const EvalObject& c = candidates[i];
    const bool suppressed = std::any_of(kept.begin(), kept.end(), [&](const EvalObject& k) {
      return k.cls == c.cls && mask_iou(k.mask, c.mask) > nms_iou;
    });
    if (!suppressed) kept.push_back(c);
  }
  return kept;
}

std::vector<EvalObject> truth_objects(const Study& study) {
  if (!study.truth) throw ConstraintError("study " + study.id + " has no ground truth");
  std::vector<EvalObject> out;
  out.reserve(study.truth->objects.size());
  for (const auto& obj : study.truth->objects) out.push_back({obj.cls, 1.0, obj.mask});
  return out;
}

std::vector<EvalObject> predict_objects(const Study& study, DecodeMethod method, const DecoderConfig& config) {
  if (method == DecodeMethod::kArgmaxNms) return argmax_nms_predictions(study.detections);
  const StudyDecode decode = decode_detections(study.detections, config);
  return dcr_predictions(study.detections, decode);
}

namespace {

struct RankedHit {
  double score;
  bool hit;
};

struct StudyMatches {
  std::vector<RankedHit> hits;
  std::size_t gt = 0;
};

double pooled_ap(std::span<const StudyMatches* const> studies) {
  std::vector<RankedHit> all;
  std::size_t gt = 0;
  for (const StudyMatches* s : studies) {
    all.insert(all.end(), s->hits.begin(), s->hits.end());
    gt += s->gt;
  }
  std::stable_sort(all.begin(), all.end(), [](const RankedHit& a, const RankedHit& b) { return a.score > b.score; });
  auto flags = std::make_unique<bool[]>(all.size());
  for (std::size_t i = 0; i < all.size(); ++i) flags[i] = all[i].hit;
  return envelope_ap(std::span<const bool>(flags.get(), all.size()), gt);
}

}  // namespace

DetectionReport evaluate_detection(std::span<const std::vector<EvalObject>> predictions,
                                   std::span<const std::vector<EvalObject>> truth,
                                   std::span<const double> iou_thresholds, int bootstrap_rounds,
                                   std::uint64_t seed) {
  if (predictions.size() != truth.size()) throw DimensionError("prediction and ground-truth study counts differ");
  if (iou_thresholds.empty()) throw std::invalid_argument("at least one IoU threshold is required");
  if (predictions.empty()) throw std::invalid_argument("no studies to evaluate");

  DetectionReport report;
  report.iou_thresholds.assign(iou_thresholds.begin(), iou_thresholds.end());
  const std::size_t n = predictions.size();

  for (std::size_t ti = 0; ti < iou_thresholds.size(); ++ti) {
    const double thr = iou_thresholds[ti];
    std::vector<StudyMatches> per_study(n);
    std::vector<double> da, fa, image_iou;
    DetectionCounts pooled;
    for (std::size_t s = 0; s < n; ++s) {
      const MatchResult m = match_detections(predictions[s], truth[s], thr, true);
      per_study[s].gt = truth[s].size();
      for (std::size_t i = 0; i < predictions[s].size(); ++i) {
        per_study[s].hits.push_back({predictions[s][i].score, m.pred_status[i] == MatchStatus::kTruePositive});
      }
      if (ti != 0) continue;
      const DetectionCounts counts = DetectionCounts::of(m);
      pooled += counts;
      if (counts.tp + counts.fp + counts.fn > 0) {
        const DaFa v = da_fa(counts);
        da.push_back(v.da);
        fa.push_back(v.fa);
      }
      std::vector<BinaryMask> pm, gm;
      for (const auto& o : predictions[s]) pm.push_back(o.mask);
      for (const auto& o : truth[s]) gm.push_back(o.mask);
      const bool any_area = std::any_of(pm.begin(), pm.end(), [](const BinaryMask& b) { return !b.empty(); }) ||
                            std::any_of(gm.begin(), gm.end(), [](const BinaryMask& b) { return !b.empty(); });
      if (any_area) image_iou.push_back(per_image_iou(pm, gm, m.pred_match));
    }

    std::vector<const StudyMatches*> ptrs;
    for (const auto& s : per_study) ptrs.push_back(&s);
    report.ap.push_back(pooled_ap(ptrs));

    double se = 0.0;
    if (bootstrap_rounds > 0) {
      Rng rng(seed ^ (0xA5A5A5A5ull * (ti + 1)));
      std::vector<double> draws;
      std::vector<const StudyMatches*> sample(n);
      for (int b = 0; b < bootstrap_rounds; ++b) {
        std::size_t gt = 0;
        for (std::size_t i = 0; i < n; ++i) {
          sample[i] = &per_study[rng.below(n)];
          gt += sample[i]->gt;
        }
        if (gt > 0) draws.push_back(pooled_ap(sample));
      }
      if (draws.size() >= 2) {
        const double mean = std::accumulate(draws.begin(), draws.end(), 0.0) / static_cast<double>(draws.size());
        double ss = 0.0;
        for (double d : draws) ss += (d - mean) * (d - mean);
        se = std::sqrt(ss / static_cast<double>(draws.size() - 1));
      }
    }
    report.ap_se.push_back(se);

    if (ti == 0) {
      report.da = mean_se(da);
      report.fa = mean_se(fa);
      report.image_iou = mean_se(image_iou);
      if (pooled.tp + pooled.fp + pooled.fn > 0) report.pooled = da_fa(pooled);
    }
  }
  return report;
}

FindingSummary summarize(const Study& study, const DecoderConfig& config) {
  if (!study.segmentation) throw ConstraintError("study " + study.id + " has no segmentation map");
  const StudyDecode decode = decode_detections(study.detections, config);
  return summarize_study(*study.segmentation, decode, study.detections);
}

Matrix policy_features(std::span<const Detection> detections, const ToothProblem& problem, int width,
                       int height) {
  Matrix x(problem.objects.size(), kPolicyFeatures);
  const double spacing = 1.0 / kPositionCentres;
  for (std::size_t r = 0; r < problem.objects.size(); ++r) {
    for (int t = 0; t < kNumTeeth; ++t) {
      const double p = problem.probs(r, static_cast<std::size_t>(t));
      x(r, t) = p > 0.0 ? std::max(0.0, 1.0 + std::log(p) / kLogScale) : 0.0;
    }
    const Box& box = detections[problem.objects[r]].box;
    const double u = box.center_x() / width;
    const int block = box.center_y() < 0.5 * height ? 0 : 1;
    for (int k = 0; k < kPositionCentres; ++k) {
      const double d = (u - (k + 0.5) * spacing) / spacing;
      x(r, kNumTeeth + block * kPositionCentres + k) = std::exp(-0.5 * d * d);
    }
  }
  return x;
}

TrainingInstance training_instance(const Study& study) {
  if (!study.dentition) throw ConstraintError("study " + study.id + " has no dentition label");
  const ToothProblem problem = tooth_problem(study.detections);
  TrainingInstance inst;
  inst.features = policy_features(study.detections, problem, study.width, study.height);
  inst.overlap = problem.overlap;
  inst.label = *study.dentition;
  if (study.truth && study.truth->detection_source.size() == study.detections.size()) {
    for (std::size_t i : problem.objects) {
      const int src = study.truth->detection_source[i];
      int cls = -1;
      if (src >= 0 && static_cast<std::size_t>(src) < study.truth->objects.size()) {
        const int c = study.truth->objects[static_cast<std::size_t>(src)].cls;
        if (is_tooth_class(c)) cls = tooth_of_det_class(c);
      }
      inst.truth.push_back(cls);
    }
  }
  return inst;
}

ToyPolicy initial_policy() {
  ToyPolicy policy = ToyPolicy::identity_prefix(kNumTeeth, kPolicyFeatures);
  for (double& v : policy.params().data()) v *= kLogScale;
  return policy;
}

}  // namespace deepopg
