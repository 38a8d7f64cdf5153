#include <climits>
#include <string>

#include "deepopg/coherence.hpp"

namespace deepopg {

void DecoderConfig::validate() const {
  if (!(quadratic_weight >= 0.0)) throw ConstraintError("quadratic_weight must be non-negative");
  if (candidate_classes_per_object < 1) throw ConstraintError("candidate_classes_per_object must be >= 1");
  if (time_budget && time_budget->count() < 0) throw ConstraintError("time_budget must be non-negative");
}

void validate_probability_rows(const Matrix& probs) {
  for (std::size_t n = 0; n < probs.rows(); ++n) {
    double sum = 0.0;
    for (double p : probs.row(n)) {
      if (!(p >= 0.0 && p <= 1.0)) {
        throw ConstraintError("row " + std::to_string(n) + " has a probability outside [0,1]");
      }
      sum += p;
    }
    if (sum > 1.0 + 1e-6) {
      throw ConstraintError("row " + std::to_string(n) + " sums to " + std::to_string(sum));
    }
  }
}

double dcr_reward_for_choices(const Matrix& probs, std::span<const int> choices,
                              const OverlapTensor& overlap, const DecoderConfig& config) {
  if (probs.rows() != choices.size() || overlap.objects() != choices.size()) {
    throw DimensionError("reward operands disagree on the number of objects");
  }
  if (overlap.classes() != probs.cols()) {
    throw DimensionError("reward operands disagree on the number of classes");
  }
  const std::size_t n_obj = choices.size();
  for (int c : choices) {
    if (c != Assignment::kNone && (c < 0 || static_cast<std::size_t>(c) >= probs.cols())) {
      throw DimensionError("class choice out of range");
    }
  }
  double linear = 0.0;
  for (std::size_t n = 0; n < n_obj; ++n) {
    if (choices[n] != Assignment::kNone) linear += probs(n, static_cast<std::size_t>(choices[n]));
  }
  double pairs = 0.0;
  for (std::size_t n = 0; n < n_obj; ++n) {
    if (choices[n] == Assignment::kNone) continue;
    for (std::size_t m = n + 1; m < n_obj; ++m) {
      if (choices[m] == Assignment::kNone) continue;
      pairs += overlap(n, static_cast<std::size_t>(choices[n]), m, static_cast<std::size_t>(choices[m]));
    }
  }
  return linear - config.pair_factor() * pairs;
}

double dcr_reward(const Matrix& probs, const Assignment& assignment, const OverlapTensor& overlap,
                  const DecoderConfig& config) {
  if (assignment.classes() != probs.cols()) {
    throw DimensionError("assignment has " + std::to_string(assignment.classes()) +
                         " classes, probability matrix has " + std::to_string(probs.cols()));
  }
  return dcr_reward_for_choices(probs, assignment.choices(), overlap, config);
}

bool tie_break_prefers(std::span<const int> a, std::span<const int> b) {
  const std::size_t n = std::min(a.size(), b.size());
  for (std::size_t i = 0; i < n; ++i) {
    const int ka = a[i] == Assignment::kNone ? INT_MAX : a[i];
    const int kb = b[i] == Assignment::kNone ? INT_MAX : b[i];
    if (ka != kb) return ka < kb;
  }
  return false;
}

}  // namespace deepopg
