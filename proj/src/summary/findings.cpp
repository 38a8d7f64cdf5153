#include <algorithm>
#include <cmath>
#include <string>

#include "deepopg/summary.hpp"

namespace deepopg {

SegFractions finding_fractions(const SegmentationMap& seg, const BinaryMask& mask) {
  if (seg.width() != mask.width() || seg.height() != mask.height()) {
    throw DimensionError("segmentation map and mask differ in size");
  }
  if (mask.empty()) throw ConstraintError("finding fractions are undefined for an empty mask");
  std::array<std::size_t, kNumSegClasses> counts{};
  const Box& e = mask.extent();
  for (int y = e.y0; y < e.y1; ++y) {
    for (int x = e.x0; x < e.x1; ++x) {
      if (mask.at(x, y)) ++counts[seg.at(x, y)];
    }
  }
  SegFractions f{};
  const double total = static_cast<double>(mask.area());
  for (int c = 0; c < kNumSegClasses; ++c) f[c] = static_cast<double>(counts[c]) / total;
  return f;
}

namespace {

struct ArchPoint {
  double x;
  int slot;
};

/// Fractional arch slot at horizontal position x, linearly interpolated from
/// decoded teeth and extrapolated along the outermost segment.
double interpolate_slot(std::vector<ArchPoint> pts, double x, int image_width) {
  if (pts.empty()) return x / image_width * 16.0 - 0.5;
  std::sort(pts.begin(), pts.end(), [](const ArchPoint& a, const ArchPoint& b) { return a.x < b.x; });
  if (pts.size() == 1) return pts[0].slot + (x - pts[0].x) / (image_width / 16.0);
  std::size_t hi = 1;
  while (hi + 1 < pts.size() && pts[hi].x < x) ++hi;
  const ArchPoint& a = pts[hi - 1];
  const ArchPoint& b = pts[hi];
  if (b.x == a.x) return a.slot;
  return a.slot + (x - a.x) * (b.slot - a.slot) / (b.x - a.x);
}

}  // namespace

FindingSummary summarize_study(const SegmentationMap& seg, const StudyDecode& decode,
                               std::span<const Detection> detections) {
  FindingSummary summary;
  std::array<bool, kNumTeeth> occupied{};
  std::vector<ArchPoint> upper, lower;
  double upper_y = 0.0, lower_y = 0.0;

  for (int t = 0; t < kNumTeeth; ++t) {
    auto& row = summary.values[t];
    const auto det_index = decode.detection_for_tooth(t);
    if (!det_index) {
      row[static_cast<int>(Finding::kMissing)] = 1.0;
      continue;
    }
    if (*det_index >= detections.size()) throw DimensionError("decode refers to a missing detection");
    const Detection& det = detections[*det_index];
    const SegFractions f = finding_fractions(seg, det.mask(det_class_of_tooth(t)));
    row[static_cast<int>(Finding::kMissing)] = 1.0 - decode.probability_for_tooth(t);
    row[static_cast<int>(Finding::kImpacted)] = f[static_cast<int>(SegClass::kImpaction)];
    row[static_cast<int>(Finding::kCrownBridge)] = f[static_cast<int>(SegClass::kCrownBridge)];
    row[static_cast<int>(Finding::kRestoration)] = f[static_cast<int>(SegClass::kRestoration)];
    row[static_cast<int>(Finding::kRootFilled)] = f[static_cast<int>(SegClass::kRootFilling)];
    summary.source[t] = *det_index;
    occupied[t] = true;
    const ArchPoint p{det.box.center_x(), arch_slot(t)};
    if (is_upper_tooth(t)) {
      upper.push_back(p);
      upper_y += det.box.center_y();
    } else {
      lower.push_back(p);
      lower_y += det.box.center_y();
    }
  }
  if (!upper.empty()) upper_y /= static_cast<double>(upper.size());
  if (!lower.empty()) lower_y /= static_cast<double>(lower.size());

  for (std::size_t i : decode.implants) {
    if (i >= detections.size()) throw DimensionError("decode refers to a missing detection");
    const Detection& det = detections[i];
    const double cx = det.box.center_x();
    const double cy = det.box.center_y();
    bool is_upper;
    if (!upper.empty() && !lower.empty()) {
      is_upper = std::abs(cy - upper_y) <= std::abs(cy - lower_y);
    } else {
      is_upper = cy < 0.5 * seg.height();
    }
    const double s = interpolate_slot(is_upper ? upper : lower, cx, seg.width());
    int best = std::clamp(static_cast<int>(std::lround(s)), 0, 15);
    double best_dist = 1e9;
    for (int slot = 0; slot < 16; ++slot) {
      const double d = std::abs(slot - s);
      if (d > 1.5 || occupied[tooth_at_slot(is_upper, slot)]) continue;
      if (d < best_dist) {
        best_dist = d;
        best = slot;
      }
    }
    const int tooth = tooth_at_slot(is_upper, best);
    const double value = det.mask(kImplantClass).empty()
                             ? 0.0
                             : finding_fractions(seg, det.mask(kImplantClass))[static_cast<int>(SegClass::kImplant)];
    summary.implants.push_back({i, tooth, value});
    auto& cell = summary.values[tooth][static_cast<int>(Finding::kImplant)];
    cell = std::max(cell, value);
  }
  return summary;
}

ThresholdProfile ThresholdProfile::table1() {
  ThresholdProfile p;
  p.thresholds = {0.242, 0.345, 0.259, 0.0270, 0.0033, 0.5};
  return p;
}

FindingMatrix binarize(const FindingSummary& summary, const ThresholdProfile& profile) {
  FindingMatrix out{};
  for (int t = 0; t < kNumTeeth; ++t) {
    for (int f = 0; f < kNumFindings; ++f) out[t][f] = summary.values[t][f] >= profile.thresholds[f];
  }
  return out;
}

}  // namespace deepopg
