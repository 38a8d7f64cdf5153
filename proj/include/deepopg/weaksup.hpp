#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <vector>

#include "deepopg/coherence.hpp"
#include "deepopg/core.hpp"
#include "deepopg/random.hpp"

namespace deepopg {

/// One class drawn per object, independently from that object's row of P.
struct SampledAssignment {
  std::vector<int> choices;
  double log_prob = 0.0;
};

/// Draws row n from categorical(P[n]). Rows must sum to 1 within 1e-6.
SampledAssignment sample_assignment(const Matrix& probs, Rng& rng);

/// Signs P for a sampled assignment against the missing-tooth label: the
/// sampled entry of object n stays positive only if its tooth is present and
/// n has the largest probability (lowest index on ties) among all objects
/// that sampled the same tooth. Unsampled entries are copied unchanged.
/// Column c of P corresponds to tooth index c.
Matrix signed_probabilities(const Matrix& probs, const SampledAssignment& sample,
                            const DentitionLabel& label);

/// Coherence reward of the sampled assignment under signed probabilities.
double sampled_reward(const Matrix& signed_probs, const SampledAssignment& sample,
                      const OverlapTensor& overlap, const DecoderConfig& config);

/// Linear softmax policy: p_n = softmax(W x_n + b).
class ToyPolicy {
 public:
  ToyPolicy() = default;
  ToyPolicy(std::size_t classes, std::size_t features);
  /// `params` is classes x (features + 1); the last column is the bias.
  explicit ToyPolicy(Matrix params);

  /// Weight 1 from feature c to class c for c < classes, zero elsewhere.
  static ToyPolicy identity_prefix(std::size_t classes, std::size_t features);

  std::size_t classes() const { return params_.rows(); }
  std::size_t features() const { return params_.cols() - 1; }
  const Matrix& params() const { return params_; }
  Matrix& params() { return params_; }

  /// Class probabilities for each row of `features` (objects x features).
  Matrix probabilities(const Matrix& features) const;

  void save(const std::filesystem::path& path) const;
  static ToyPolicy load(const std::filesystem::path& path);

 private:
  Matrix params_;
};

struct RLConfig {
  int samples_per_instance = 64;
  double learning_rate = 0.5;
  int steps = 2000;
  int batch_size = 4;
  std::uint64_t rng_seed = 0;
  /// Subtract the mean reward over the instance's samples.
  bool use_baseline = true;
  DecoderConfig decoder;

  void validate() const;
};

/// One weakly labelled training instance. `truth` holds each object's true
/// class (or -1) and is only used to report accuracy.
struct TrainingInstance {
  Matrix features;
  OverlapTensor overlap;
  DentitionLabel label;
  std::vector<int> truth;
};

struct GradientEstimate {
  /// d/dθ of the REINFORCE loss, same shape as ToyPolicy::params().
  Matrix gradient;
  double mean_reward = 0.0;
};

/// Score-function estimate of the gradient of -E[r · Σ log p] from
/// `config.samples_per_instance` samples. The reward is treated as a
/// constant; the log term uses the unsigned sampling probabilities.
/// Throws ConstraintError if a sampled class has zero probability.
GradientEstimate reinforce_gradient(const ToyPolicy& policy, const Matrix& features,
                                    const OverlapTensor& overlap, const DentitionLabel& label,
                                    const RLConfig& config, Rng& rng);

/// Fraction of decoded labels that are right: correct teeth divided by
/// (distinct true teeth + wrongly labelled objects).
double assignment_accuracy(const Assignment& assignment, std::span<const int> truth);

/// Decode every instance with the policy's probabilities and pool the
/// accuracy counts.
double evaluate_policy(const ToyPolicy& policy, std::span<const TrainingInstance> data,
                       const DecoderConfig& config);

struct TrainingStep {
  int step = 0;
  double mean_reward = 0.0;
  double accuracy = 0.0;
};

struct TrainingResult {
  ToyPolicy policy;
  std::vector<TrainingStep> trajectory;
};

/// Raised when parameters or policy probabilities stop being finite.
class DivergenceError : public std::runtime_error {
 public:
  DivergenceError(int step);
  int step() const { return step_; }

 private:
  int step_;
};

/// Gradient descent on reinforce_gradient, averaging over a batch of
/// instances per step. Instances are visited in seeded shuffled epochs. Each
/// trajectory entry reports the batch's mean sampled reward and post-decode
/// accuracy measured before that step's update.
TrainingResult train_toy(ToyPolicy initial, std::span<const TrainingInstance> data,
                         const RLConfig& config);

}  // namespace deepopg
