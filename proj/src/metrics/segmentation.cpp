#include <cmath>

#include "deepopg/metrics.hpp"

namespace deepopg {

std::array<std::optional<double>, kNumSegClasses> segmentation_iou(const SegmentationMap& pred,
                                                                   const SegmentationMap& gt) {
  if (pred.width() != gt.width() || pred.height() != gt.height()) {
    throw DimensionError("segmentation maps differ in size");
  }
  std::array<std::size_t, kNumSegClasses> inter{}, uni{};
  const auto p = pred.labels();
  const auto g = gt.labels();
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] == g[i]) {
      ++inter[p[i]];
      ++uni[p[i]];
    } else {
      ++uni[p[i]];
      ++uni[g[i]];
    }
  }
  std::array<std::optional<double>, kNumSegClasses> out;
  for (int c = 0; c < kNumSegClasses; ++c) {
    if (uni[c]) out[c] = static_cast<double>(inter[c]) / static_cast<double>(uni[c]);
  }
  return out;
}

MeanSe mean_se(std::span<const double> values) {
  MeanSe r;
  if (values.empty()) return r;
  for (double v : values) r.mean += v;
  r.mean /= static_cast<double>(values.size());
  if (values.size() < 2) return r;
  double ss = 0.0;
  for (double v : values) ss += (v - r.mean) * (v - r.mean);
  const double var = ss / static_cast<double>(values.size() - 1);
  r.se = std::sqrt(var / static_cast<double>(values.size()));
  return r;
}

}  // namespace deepopg
