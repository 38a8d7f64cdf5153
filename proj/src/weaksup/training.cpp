#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <string>

#include "deepopg/weaksup.hpp"

namespace deepopg {

void RLConfig::validate() const {
  if (samples_per_instance < 2) throw ConstraintError("samples_per_instance must be at least 2");
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) {
    throw ConstraintError("learning_rate must be a non-negative finite number");
  }
  if (steps < 0) throw ConstraintError("steps must be non-negative");
  if (batch_size < 1) throw ConstraintError("batch_size must be at least 1");
  decoder.validate();
}

DivergenceError::DivergenceError(int step)
    : std::runtime_error("policy parameters became non-finite at step " + std::to_string(step)), step_(step) {}

GradientEstimate reinforce_gradient(const ToyPolicy& policy, const Matrix& features,
                                    const OverlapTensor& overlap, const DentitionLabel& label,
                                    const RLConfig& config, Rng& rng) {
  if (config.samples_per_instance < 2) throw ConstraintError("samples_per_instance must be at least 2");
  const Matrix probs = policy.probabilities(features);
  const std::size_t n_obj = probs.rows();
  const std::size_t n_cls = probs.cols();
  const std::size_t k = static_cast<std::size_t>(config.samples_per_instance);

  std::vector<SampledAssignment> samples;
  std::vector<double> rewards;
  samples.reserve(k);
  rewards.reserve(k);
  for (std::size_t s = 0; s < k; ++s) {
    SampledAssignment sample = sample_assignment(probs, rng);
    for (std::size_t n = 0; n < n_obj; ++n) {
      if (probs(n, static_cast<std::size_t>(sample.choices[n])) <= 0.0) {
        throw ConstraintError("sampled a zero-probability class for object " + std::to_string(n));
      }
    }
    const Matrix signed_p = signed_probabilities(probs, sample, label);
    rewards.push_back(sampled_reward(signed_p, sample, overlap, config.decoder));
    samples.push_back(std::move(sample));
  }

  // Mean taken relative to the minimum so identical rewards cancel exactly.
  const double low = *std::min_element(rewards.begin(), rewards.end());
  double shifted = 0.0;
  for (double r : rewards) shifted += r - low;
  const double mean = low + shifted / static_cast<double>(k);
  const double baseline = config.use_baseline ? mean : 0.0;

  // coef(n, c) = Σ_s (r_s - b) (onehot(ê_ns) - p_n)_c
  Matrix coef(n_obj, n_cls);
  for (std::size_t s = 0; s < k; ++s) {
    const double adv = rewards[s] - baseline;
    if (adv == 0.0) continue;
    for (std::size_t n = 0; n < n_obj; ++n) {
      for (std::size_t c = 0; c < n_cls; ++c) coef(n, c) -= adv * probs(n, c);
      coef(n, static_cast<std::size_t>(samples[s].choices[n])) += adv;
    }
  }

  const std::size_t n_feat = policy.features();
  GradientEstimate out;
  out.gradient = Matrix(n_cls, n_feat + 1);
  const double scale = -1.0 / static_cast<double>(k);
  for (std::size_t n = 0; n < n_obj; ++n) {
    const auto x = features.row(n);
    for (std::size_t c = 0; c < n_cls; ++c) {
      const double a = coef(n, c);
      if (a == 0.0) continue;
      for (std::size_t f = 0; f < n_feat; ++f) out.gradient(c, f) += scale * a * x[f];
      out.gradient(c, n_feat) += scale * a;
    }
  }
  out.mean_reward = mean;
  return out;
}

namespace {

struct AccuracyCounts {
  std::size_t correct = 0;
  std::size_t denom = 0;
  void add(const Assignment& a, std::span<const int> truth) {
    if (truth.size() != a.objects()) throw DimensionError("truth labels do not match the assignment");
    std::set<int> teeth;
    std::set<int> hit;
    std::size_t wrong = 0;
    for (std::size_t n = 0; n < truth.size(); ++n) {
      if (truth[n] >= 0) teeth.insert(truth[n]);
      const int c = a.class_of(n);
      if (c == Assignment::kNone) continue;
      if (c == truth[n]) {
        hit.insert(c);
      } else {
        ++wrong;
      }
    }
    correct += hit.size();
    denom += teeth.size() + wrong;
  }
  double value() const { return denom ? static_cast<double>(correct) / static_cast<double>(denom) : 1.0; }
};

}  // namespace

double assignment_accuracy(const Assignment& assignment, std::span<const int> truth) {
  AccuracyCounts counts;
  counts.add(assignment, truth);
  return counts.value();
}

double evaluate_policy(const ToyPolicy& policy, std::span<const TrainingInstance> data,
                       const DecoderConfig& config) {
  AccuracyCounts counts;
  for (const auto& inst : data) {
    const DecodeResult d = decode_assignment(policy.probabilities(inst.features), inst.overlap, config);
    counts.add(d.assignment, inst.truth);
  }
  return counts.value();
}

TrainingResult train_toy(ToyPolicy initial, std::span<const TrainingInstance> data, const RLConfig& config) {
  config.validate();
  if (data.empty()) throw std::invalid_argument("training set is empty");

  Rng rng(config.rng_seed);
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  std::size_t cursor = order.size();

  TrainingResult result;
  result.policy = std::move(initial);
  Matrix& theta = result.policy.params();
  const std::size_t batch = static_cast<std::size_t>(config.batch_size);

  for (int step = 0; step < config.steps; ++step) {
    Matrix grad(theta.rows(), theta.cols());
    double reward_sum = 0.0;
    AccuracyCounts acc;
    for (std::size_t b = 0; b < batch; ++b) {
      if (cursor == order.size()) {
        for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
        cursor = 0;
      }
      const TrainingInstance& inst = data[order[cursor++]];
      const Matrix probs = result.policy.probabilities(inst.features);
      // Finite parameters can still overflow the logits.
      for (double p : probs.data()) {
        if (!std::isfinite(p)) throw DivergenceError(step);
      }
      Rng child = rng.split();
      const GradientEstimate g = reinforce_gradient(result.policy, inst.features, inst.overlap, inst.label, config, child);
      for (std::size_t i = 0; i < grad.data().size(); ++i) grad.data()[i] += g.gradient.data()[i];
      reward_sum += g.mean_reward;
      if (!inst.truth.empty()) {
        const DecodeResult d = decode_assignment(probs, inst.overlap, config.decoder);
        acc.add(d.assignment, inst.truth);
      }
    }
    if (config.learning_rate != 0.0) {
      const double step_size = config.learning_rate / static_cast<double>(batch);
      for (std::size_t i = 0; i < theta.data().size(); ++i) {
        theta.data()[i] -= step_size * grad.data()[i];
        if (!std::isfinite(theta.data()[i])) throw DivergenceError(step);
      }
    }
    result.trajectory.push_back({step, reward_sum / static_cast<double>(batch), acc.value()});
  }
  return result;
}

}  // namespace deepopg
