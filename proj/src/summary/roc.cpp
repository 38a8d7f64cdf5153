#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <numeric>
#include <stdexcept>

#include "deepopg/summary.hpp"

namespace deepopg {

namespace {

void check_inputs(std::span<const double> scores, std::span<const bool> labels) {
  if (scores.size() != labels.size()) throw DimensionError("scores and labels differ in length");
  std::size_t pos = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (std::isnan(scores[i])) throw std::invalid_argument("NaN score");
    pos += labels[i];
  }
  if (pos == 0 || pos == labels.size()) {
    throw std::invalid_argument("ROC analysis needs both positive and negative labels");
  }
}

}  // namespace

RocCurve roc_curve(std::span<const double> scores, std::span<const bool> labels) {
  check_inputs(scores, labels);
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

  const double n_pos = static_cast<double>(std::count(labels.begin(), labels.end(), true));
  const double n_neg = static_cast<double>(labels.size()) - n_pos;
  RocCurve curve;
  auto push = [&](double threshold, double tp, double fp) {
    const double fn = n_pos - tp;
    const double denom = 2.0 * tp + fn + fp;
    curve.points.push_back({threshold, tp / n_pos, (n_neg - fp) / n_neg, denom > 0 ? 2.0 * tp / denom : 0.0});
  };
  push(std::numeric_limits<double>::infinity(), 0.0, 0.0);
  double tp = 0.0, fp = 0.0;
  for (std::size_t i = 0; i < order.size();) {
    const double s = scores[order[i]];
    while (i < order.size() && scores[order[i]] == s) {
      (labels[order[i]] ? tp : fp) += 1.0;
      ++i;
    }
    push(s, tp, fp);
  }

  double area = 0.0;
  for (std::size_t i = 1; i < curve.points.size(); ++i) {
    const RocPoint& a = curve.points[i - 1];
    const RocPoint& b = curve.points[i];
    area += (a.tnr - b.tnr) * (a.tpr + b.tpr) * 0.5;
  }
  curve.auc = area;
  for (std::size_t i = 1; i < curve.points.size(); ++i) {
    if (curve.points[i].f1 > curve.points[curve.best_f1].f1) curve.best_f1 = i;
  }
  return curve;
}

double auc_rank_sum(std::span<const double> scores, std::span<const bool> labels) {
  check_inputs(scores, labels);
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  double rank_sum = 0.0;
  double n_pos = 0.0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) ++j;
    const double mid_rank = 0.5 * static_cast<double>(i + 1 + j);
    for (std::size_t k = i; k < j; ++k) {
      if (labels[order[k]]) {
        rank_sum += mid_rank;
        n_pos += 1.0;
      }
    }
    i = j;
  }
  const double n_neg = static_cast<double>(scores.size()) - n_pos;
  return (rank_sum - n_pos * (n_pos + 1.0) / 2.0) / (n_pos * n_neg);
}

std::array<std::optional<RocCurve>, kNumFindings> evaluate_findings(std::span<const FindingSummary> predicted,
                                                                    std::span<const FindingMatrix> truth) {
  if (predicted.size() != truth.size()) throw DimensionError("summaries and ground truth differ in count");
  std::array<std::optional<RocCurve>, kNumFindings> out;
  for (int f = 0; f < kNumFindings; ++f) {
    const std::size_t count = predicted.size() * kNumTeeth;
    std::vector<double> scores;
    scores.reserve(count);
    auto labels = std::make_unique<bool[]>(count);
    std::size_t pos = 0;
    for (std::size_t s = 0; s < predicted.size(); ++s) {
      for (int t = 0; t < kNumTeeth; ++t) {
        labels[scores.size()] = truth[s][t][f];
        pos += truth[s][t][f];
        scores.push_back(predicted[s].values[t][f]);
      }
    }
    if (pos == 0 || pos == count) continue;
    out[f] = roc_curve(scores, std::span<const bool>(labels.get(), count));
  }
  return out;
}

double macro_auc(const std::array<std::optional<RocCurve>, kNumFindings>& curves) {
  double sum = 0.0;
  int n = 0;
  for (const auto& c : curves) {
    if (!c) continue;
    sum += c->auc;
    ++n;
  }
  return n ? sum / n : 0.0;
}

}  // namespace deepopg
