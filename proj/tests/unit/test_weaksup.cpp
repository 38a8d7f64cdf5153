#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>

#include "doctest.h"
#include "deepopg/weaksup.hpp"
#include "oracles.hpp"

using namespace deepopg;

namespace {

struct GradientCase {
  ToyPolicy policy;
  Matrix features;
  OverlapTensor overlap;
  DentitionLabel label;
};

GradientCase gradient_case(std::uint64_t seed, std::size_t objects, std::size_t classes, std::size_t feats) {
  Rng rng(seed);
  GradientCase g;
  Matrix params(classes, feats + 1);
  for (auto& v : params.data()) v = rng.uniform(-1.0, 1.0);
  g.policy = ToyPolicy(params);
  g.features = Matrix(objects, feats);
  for (auto& v : g.features.data()) v = rng.uniform(-1.0, 1.0);
  g.overlap = oracle::random_instance(rng, objects, classes).overlap;
  for (std::size_t c = 0; c < classes; ++c) g.label.present[c] = rng.bernoulli(0.6);
  return g;
}

Matrix exact(const GradientCase& g, const DecoderConfig& cfg) {
  return oracle::exact_gradient(g.policy.params(), g.features, [&](const std::vector<int>& a, const Matrix& p) {
    return oracle::reward(oracle::signed_probs(p, a, g.label.present), a, g.overlap, cfg.quadratic_weight,
                          cfg.pair_convention == PairConvention::kOrdered);
  });
}

double relative_l2(const Matrix& a, const Matrix& b) {
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < a.data().size(); ++i) {
    num += (a.data()[i] - b.data()[i]) * (a.data()[i] - b.data()[i]);
    den += b.data()[i] * b.data()[i];
  }
  return std::sqrt(num / den);
}

// Separable toy data: object n has a one-hot feature for its true tooth and
// nothing overlaps.
std::vector<TrainingInstance> separable(std::size_t count, std::size_t objects) {
  std::vector<TrainingInstance> data;
  Rng rng(5);
  for (std::size_t i = 0; i < count; ++i) {
    TrainingInstance inst;
    inst.features = Matrix(objects, kNumTeeth);
    inst.overlap = OverlapTensor::zeros(objects, kNumTeeth);
    std::vector<int> teeth(kNumTeeth);
    for (int t = 0; t < kNumTeeth; ++t) teeth[t] = t;
    for (std::size_t k = kNumTeeth; k > 1; --k) std::swap(teeth[k - 1], teeth[rng.below(k)]);
    for (std::size_t n = 0; n < objects; ++n) {
      inst.features(n, teeth[n]) = 1.0;
      inst.label.present[teeth[n]] = true;
      inst.truth.push_back(teeth[n]);
    }
    data.push_back(std::move(inst));
  }
  return data;
}

}  // namespace

TEST_CASE("sampling follows the row distribution") {
  Matrix p(1, 3);
  p(0, 0) = 0.2;
  p(0, 1) = 0.0;
  p(0, 2) = 0.8;
  Rng rng(1);
  int counts[3] = {0, 0, 0};
  const int draws = 20000;
  for (int i = 0; i < draws; ++i) ++counts[sample_assignment(p, rng).choices[0]];
  CHECK(counts[1] == 0);
  CHECK(counts[0] / double(draws) == doctest::Approx(0.2).epsilon(0.05));

  const SampledAssignment s = sample_assignment(p, rng);
  CHECK(s.log_prob == std::log(p(0, s.choices[0])));

  Matrix short_row(1, 2);
  short_row(0, 0) = 0.5;
  CHECK_THROWS_AS(sample_assignment(short_row, rng), ConstraintError);
}

TEST_CASE("signed probabilities match the reference rule") {
  Rng rng(17);
  for (int trial = 0; trial < 2000; ++trial) {
    const std::size_t n = 1 + rng.below(6), c = 1 + rng.below(6);
    Matrix p(n, c);
    for (auto& v : p.data()) v = rng.bernoulli(0.2) ? 0.25 : rng.uniform();
    SampledAssignment s;
    for (std::size_t i = 0; i < n; ++i) s.choices.push_back(static_cast<int>(rng.below(c)));
    DentitionLabel label;
    for (std::size_t k = 0; k < c; ++k) label.present[k] = rng.bernoulli(0.5);
    const Matrix got = signed_probabilities(p, s, label);
    const Matrix want = oracle::signed_probs(p, s.choices, label.present);
    CHECK(got == want);
  }
}

TEST_CASE("signed probabilities on a hand example") {
  Matrix p(3, 2);
  p(0, 0) = 0.7;
  p(1, 0) = 0.9;
  p(2, 1) = 0.6;
  DentitionLabel label;
  label.present[0] = true;
  SampledAssignment s{{0, 0, 1}, 0.0};
  const Matrix got = signed_probabilities(p, s, label);
  CHECK(got(0, 0) == -0.7);  // duplicate with the lower probability
  CHECK(got(1, 0) == 0.9);
  CHECK(got(2, 1) == -0.6);  // tooth 1 is absent
  CHECK(sampled_reward(got, s, OverlapTensor::zeros(3, 2), DecoderConfig{}) == doctest::Approx(-0.4));
}

TEST_CASE("reward follows the correctness of the sample") {
  Matrix p(2, 2);
  p(0, 0) = 0.8;
  p(0, 1) = 0.2;
  p(1, 0) = 0.3;
  p(1, 1) = 0.7;
  DentitionLabel both;
  both.present[0] = both.present[1] = true;
  const OverlapTensor q = OverlapTensor::zeros(2, 2);
  const SampledAssignment right{{0, 1}, 0.0}, clash{{0, 0}, 0.0};
  const double r_right = sampled_reward(signed_probabilities(p, right, both), right, q, DecoderConfig{});
  const double r_clash = sampled_reward(signed_probabilities(p, clash, both), clash, q, DecoderConfig{});
  CHECK(r_right > 0.0);
  CHECK(r_clash < r_right);
}

TEST_CASE("gradient estimate converges to the enumerated gradient") {
  const DecoderConfig cfg;
  for (auto [objects, classes] : {std::pair<std::size_t, std::size_t>{1, 2}, {3, 3}}) {
    const GradientCase g = gradient_case(40 + objects, objects, classes, 3);
    RLConfig rl;
    rl.samples_per_instance = 40000;
    Rng rng(3);
    const GradientEstimate est = reinforce_gradient(g.policy, g.features, g.overlap, g.label, rl, rng);
    CHECK(relative_l2(est.gradient, exact(g, cfg)) < 0.05);
  }
}

TEST_CASE("a constant reward gives a zero baselined gradient") {
  // Two equally likely classes, both present, no overlap: every sample earns 0.5.
  ToyPolicy policy(2, 1);
  Matrix x(1, 1);
  x(0, 0) = 0.3;
  DentitionLabel label;
  label.present[0] = label.present[1] = true;
  RLConfig rl;
  Rng rng(9);
  const GradientEstimate g = reinforce_gradient(policy, x, OverlapTensor::zeros(1, 2), label, rl, rng);
  CHECK(g.mean_reward == 0.5);
  for (double v : g.gradient.data()) CHECK(v == 0.0);
}

TEST_CASE("the baseline lowers the variance of the estimate") {
  const GradientCase g = gradient_case(77, 3, 3, 3);
  RLConfig with, without;
  with.samples_per_instance = without.samples_per_instance = 32;
  without.use_baseline = false;
  auto spread = [&](const RLConfig& rl) {
    std::vector<Matrix> runs;
    for (std::uint64_t s = 0; s < 300; ++s) {
      Rng rng(s);
      runs.push_back(reinforce_gradient(g.policy, g.features, g.overlap, g.label, rl, rng).gradient);
    }
    double total = 0.0;
    for (std::size_t i = 0; i < runs[0].data().size(); ++i) {
      double mean = 0.0;
      for (const auto& r : runs) mean += r.data()[i];
      mean /= runs.size();
      for (const auto& r : runs) total += (r.data()[i] - mean) * (r.data()[i] - mean);
    }
    return total / runs.size();
  };
  CHECK(spread(with) < spread(without));
}

TEST_CASE("classes that underflow to zero are never sampled") {
  Matrix params(2, 2);
  params(0, 1) = 800.0;  // softmax underflows class 1 to exactly zero
  ToyPolicy policy(params);
  Matrix x(1, 1);
  RLConfig rl;
  Rng rng(1);
  DentitionLabel label;
  const GradientEstimate g = reinforce_gradient(policy, x, OverlapTensor::zeros(1, 2), label, rl, rng);
  for (double v : g.gradient.data()) CHECK(std::isfinite(v));
}

TEST_CASE("assignment accuracy") {
  const Assignment a = Assignment::from_choices(3, std::vector<int>{0, Assignment::kNone, 2});
  const std::vector<int> truth{0, 1, -1};
  // one correct tooth out of two true teeth plus one wrong label
  CHECK(assignment_accuracy(a, truth) == doctest::Approx(1.0 / 3.0));
  const std::vector<int> dup{0, 0, 2};
  const Assignment b = Assignment::from_choices(3, std::vector<int>{0, Assignment::kNone, 2});
  CHECK(assignment_accuracy(b, dup) == 1.0);
  CHECK_THROWS_AS(assignment_accuracy(b, std::vector<int>{0}), DimensionError);
}

TEST_CASE("training") {
  const auto data = separable(6, 5);
  RLConfig rl;
  rl.steps = 15;
  rl.samples_per_instance = 16;
  rl.rng_seed = 4;

  SUBCASE("zero learning rate leaves parameters untouched") {
    rl.learning_rate = 0.0;
    const ToyPolicy init = ToyPolicy::identity_prefix(kNumTeeth, kNumTeeth);
    const TrainingResult r = train_toy(init, data, rl);
    CHECK(r.policy.params() == init.params());
    CHECK(r.trajectory.size() == 15);
  }
  SUBCASE("same seed, same run") {
    const TrainingResult a = train_toy(ToyPolicy::identity_prefix(kNumTeeth, kNumTeeth), data, rl);
    const TrainingResult b = train_toy(ToyPolicy::identity_prefix(kNumTeeth, kNumTeeth), data, rl);
    CHECK(a.policy.params() == b.policy.params());
    for (std::size_t i = 0; i < a.trajectory.size(); ++i) {
      CHECK(a.trajectory[i].mean_reward == b.trajectory[i].mean_reward);
      CHECK(a.trajectory[i].accuracy == b.trajectory[i].accuracy);
    }
  }
  SUBCASE("a perfect policy stays perfect") {
    ToyPolicy sharp = ToyPolicy::identity_prefix(kNumTeeth, kNumTeeth);
    for (double& v : sharp.params().data()) v *= 60.0;
    const TrainingResult r = train_toy(sharp, data, rl);
    for (const auto& s : r.trajectory) CHECK(s.accuracy == 1.0);
    CHECK(evaluate_policy(r.policy, data, rl.decoder) == 1.0);
  }
  SUBCASE("training raises the reward from a flat start") {
    rl.steps = 150;
    const TrainingResult r = train_toy(ToyPolicy(kNumTeeth, kNumTeeth), data, rl);
    double first = 0.0, last = 0.0;
    for (int i = 0; i < 10; ++i) {
      first += r.trajectory[i].mean_reward;
      last += r.trajectory[r.trajectory.size() - 1 - i].mean_reward;
    }
    CHECK(last > first);
  }
  SUBCASE("runaway parameters raise DivergenceError") {
    auto loud = data;
    for (auto& inst : loud) {
      for (double& v : inst.features.data()) v *= 100.0;
    }
    rl.learning_rate = std::numeric_limits<double>::max();
    rl.batch_size = 1;
    CHECK_THROWS_AS(train_toy(ToyPolicy(kNumTeeth, kNumTeeth), loud, rl), DivergenceError);
  }
  SUBCASE("config validation") {
    rl.samples_per_instance = 1;
    CHECK_THROWS_AS(train_toy(ToyPolicy(kNumTeeth, kNumTeeth), data, rl), ConstraintError);
    rl.samples_per_instance = 4;
    rl.learning_rate = -1.0;
    CHECK_THROWS_AS(train_toy(ToyPolicy(kNumTeeth, kNumTeeth), data, rl), ConstraintError);
  }
}

TEST_CASE("policy files round-trip exactly") {
  Rng rng(2);
  Matrix params(4, 6);
  for (auto& v : params.data()) v = rng.uniform(-1e3, 1e3) / 7.0;
  const auto dir = std::filesystem::temp_directory_path() / "deepopg_policy_test";
  std::filesystem::create_directories(dir);
  ToyPolicy(params).save(dir / "p.txt");
  CHECK(ToyPolicy::load(dir / "p.txt").params() == params);
  {
    std::ofstream(dir / "bad.txt") << "2 2\n1 2 3\n";
  }
  CHECK_THROWS(ToyPolicy::load(dir / "bad.txt"));
  std::filesystem::remove_all(dir);
}
