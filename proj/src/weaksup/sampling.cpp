#include <cmath>
#include <string>

#include "deepopg/weaksup.hpp"

namespace deepopg {

SampledAssignment sample_assignment(const Matrix& probs, Rng& rng) {
  SampledAssignment s;
  s.choices.resize(probs.rows());
  for (std::size_t n = 0; n < probs.rows(); ++n) {
    const auto row = probs.row(n);
    double sum = 0.0;
    for (double p : row) {
      if (!(p >= 0.0)) throw ConstraintError("row " + std::to_string(n) + " has a negative or NaN probability");
      sum += p;
    }
    if (std::abs(sum - 1.0) > 1e-6) {
      throw ConstraintError("row " + std::to_string(n) + " sums to " + std::to_string(sum));
    }
    const double u = rng.uniform() * sum;
    int pick = -1;
    double cum = 0.0;
    for (std::size_t c = 0; c < row.size(); ++c) {
      if (row[c] <= 0.0) continue;
      cum += row[c];
      pick = static_cast<int>(c);
      if (cum > u) break;
    }
    s.choices[n] = pick;
    s.log_prob += std::log(row[static_cast<std::size_t>(pick)]);
  }
  return s;
}

Matrix signed_probabilities(const Matrix& probs, const SampledAssignment& sample,
                            const DentitionLabel& label) {
  if (sample.choices.size() != probs.rows()) throw DimensionError("sample does not match P");
  if (probs.cols() > static_cast<std::size_t>(kNumTeeth)) {
    throw DimensionError("P has more classes than the dentition label");
  }
  Matrix out = probs;
  const std::size_t n_obj = probs.rows();
  for (std::size_t n = 0; n < n_obj; ++n) {
    const int c = sample.choices[n];
    if (c < 0 || static_cast<std::size_t>(c) >= probs.cols()) throw DimensionError("sampled class out of range");
    std::size_t winner = n;
    for (std::size_t m = 0; m < n_obj; ++m) {
      if (sample.choices[m] != c) continue;
      if (probs(m, c) > probs(winner, c) || (probs(m, c) == probs(winner, c) && m < winner)) winner = m;
    }
    const bool keep = label.present[static_cast<std::size_t>(c)] && winner == n;
    out(n, c) = keep ? probs(n, c) : -probs(n, c);
  }
  return out;
}

double sampled_reward(const Matrix& signed_probs, const SampledAssignment& sample,
                      const OverlapTensor& overlap, const DecoderConfig& config) {
  return dcr_reward_for_choices(signed_probs, sample.choices, overlap, config);
}

}  // namespace deepopg
