#include <string>

#include "deepopg/coherence.hpp"

namespace deepopg {

namespace {

struct Enumerator {
  const Matrix& probs;
  const OverlapTensor& overlap;
  const DecoderConfig& config;
  std::vector<int> choices;
  std::vector<char> used;
  std::vector<int> best;
  double best_reward = 0.0;
  bool have_best = false;
  std::size_t leaves = 0;

  void visit(std::size_t n) {
    if (n == choices.size()) {
      ++leaves;
      const double r = dcr_reward_for_choices(probs, choices, overlap, config);
      if (!have_best || r > best_reward || (r == best_reward && tie_break_prefers(choices, best))) {
        best = choices;
        best_reward = r;
        have_best = true;
      }
      return;
    }
    choices[n] = Assignment::kNone;
    visit(n + 1);
    for (std::size_t c = 0; c < probs.cols(); ++c) {
      if (used[c] || probs(n, c) <= 0.0) continue;
      used[c] = 1;
      choices[n] = static_cast<int>(c);
      visit(n + 1);
      used[c] = 0;
    }
    choices[n] = Assignment::kNone;
  }
};

}  // namespace

DecodeResult brute_force_decode(const Matrix& probs, const OverlapTensor& overlap,
                                const DecoderConfig& config) {
  config.validate();
  if (probs.rows() > 8 || probs.cols() > 8) {
    throw std::invalid_argument("brute_force_decode supports at most 8 objects and 8 classes, got " +
                                std::to_string(probs.rows()) + "x" + std::to_string(probs.cols()));
  }
  if (overlap.objects() != probs.rows() || overlap.classes() != probs.cols()) {
    throw DimensionError("overlap tensor does not match the probability matrix");
  }
  validate_probability_rows(probs);

  Enumerator e{probs, overlap, config, std::vector<int>(probs.rows(), Assignment::kNone),
               std::vector<char>(probs.cols(), 0), {}, 0.0, false, 0};
  e.visit(0);

  DecodeResult result;
  result.assignment = Assignment::from_choices(probs.cols(), e.best);
  result.reward = dcr_reward(probs, result.assignment, overlap, config);
  result.suppressed = result.assignment.suppressed();
  result.optimality = Optimality::kProven;
  result.nodes_explored = e.leaves;
  return result;
}

}  // namespace deepopg
