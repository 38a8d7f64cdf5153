#pragma once

#include <chrono>
#include <optional>
#include <vector>

#include "deepopg/core.hpp"

namespace deepopg {

/// How the quadratic term counts a pair of co-assigned objects. Under
/// kOrdered both (n, m) and (m, n) contribute, so each pair counts twice.
enum class PairConvention { kOrdered, kUnordered };

struct DecoderConfig {
  double quadratic_weight = 1.0;
  /// Each object only considers its k most probable classes.
  int candidate_classes_per_object = 5;
  PairConvention pair_convention = PairConvention::kOrdered;
  std::optional<std::chrono::milliseconds> time_budget;

  void validate() const;
  /// Multiplier applied to one unordered pair's q.
  double pair_factor() const {
    return quadratic_weight * (pair_convention == PairConvention::kOrdered ? 2.0 : 1.0);
  }
};

enum class Optimality { kProven, kBudgetExceeded };

struct DecodeResult {
  Assignment assignment;
  double reward = 0.0;
  std::vector<std::size_t> suppressed;
  Optimality optimality = Optimality::kProven;
  std::size_t nodes_explored = 0;
};

/// Dental coherence reward: sum of assigned probabilities minus the weighted
/// overlap of every pair of distinct co-assigned objects.
///
/// Terms are accumulated in a fixed order (objects ascending, then pairs
/// n < m ascending) so equal assignments always give bit-identical values.
/// Throws DimensionError if shapes disagree.
double dcr_reward(const Matrix& probs, const Assignment& assignment, const OverlapTensor& overlap,
                  const DecoderConfig& config);

/// Same objective over one class choice per object (Assignment::kNone for
/// none). No column constraint is enforced, which is what sampled
/// assignments need.
double dcr_reward_for_choices(const Matrix& probs, std::span<const int> choices,
                              const OverlapTensor& overlap, const DecoderConfig& config);

/// Checks probabilities lie in [0, 1] and each row sums to at most 1.
void validate_probability_rows(const Matrix& probs);

/// Exact branch-and-bound maximiser of dcr_reward under the row and column
/// constraints, restricted to each object's top-k candidate classes.
///
/// Objects are branched in order of decreasing best probability. A node's
/// bound adds, for every unbranched object, its best candidate probability
/// net of overlap penalties against already-placed objects; when that is not
/// enough to prune, a maximum-weight matching over the remaining objects and
/// free classes tightens it. Both bounds ignore penalties among unplaced
/// objects, which can only lower the reward.
///
/// Equal rewards are resolved by comparing per-object choices from object 0
/// upward, preferring an assigned object over a suppressed one and a lower
/// class index over a higher one. Classes with zero probability are never
/// assigned.
DecodeResult decode_assignment(const Matrix& probs, const OverlapTensor& overlap,
                               const DecoderConfig& config);

/// Exhaustive oracle over every feasible assignment (no candidate pruning).
/// Limited to 8 objects and 8 classes; larger instances throw.
DecodeResult brute_force_decode(const Matrix& probs, const OverlapTensor& overlap,
                                const DecoderConfig& config);

/// True if `a` wins a tie against `b` under the decoder's tie-breaking rule.
bool tie_break_prefers(std::span<const int> a, std::span<const int> b);

// Study-level decoding -------------------------------------------------------

/// Decoding problem over the detections whose argmax is a tooth class.
/// Column c of `probs` and class c of `overlap` refer to tooth index c.
struct ToothProblem {
  std::vector<std::size_t> objects;  // detection index of each row
  Matrix probs;
  OverlapTensor overlap;
};

ToothProblem tooth_problem(std::span<const Detection> detections);

struct StudyDecode {
  ToothProblem problem;
  DecodeResult result;
  /// Detections left untouched by the decoder.
  std::vector<std::size_t> implants;
  std::vector<std::size_t> background;

  /// Detection index assigned to each tooth, if any.
  std::optional<std::size_t> detection_for_tooth(int tooth) const;
  /// Probability the decoder used for that tooth's assigned detection.
  double probability_for_tooth(int tooth) const;
};

/// Splits detections into tooth / implant / background by argmax and decodes
/// the tooth subset. Implant and background detections pass through.
StudyDecode decode_detections(std::span<const Detection> detections, const DecoderConfig& config);

}  // namespace deepopg
