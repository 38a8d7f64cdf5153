#include <cmath>

#include "doctest.h"
#include "deepopg/pipeline.hpp"
#include "deepopg/synthgen.hpp"

using namespace deepopg;

namespace {

std::vector<Study> batch(const GenConfig& g, std::size_t count) {
  std::vector<Study> out;
  for (std::size_t i = 0; i < count; ++i) out.push_back(generate_indexed_study(g, i));
  return out;
}

DetectionReport report(const std::vector<Study>& studies, DecodeMethod method) {
  std::vector<std::vector<EvalObject>> preds, truth;
  for (const auto& s : studies) {
    preds.push_back(predict_objects(s, method, DecoderConfig{}));
    truth.push_back(truth_objects(s));
  }
  const std::vector<double> thresholds{0.0, 0.5, 0.7};
  return evaluate_detection(preds, truth, thresholds, 50, 1);
}

}  // namespace

TEST_CASE("clean studies score perfectly with both decoders") {
  GenConfig g;
  g.seed = 1;
  g.implant_prob = 0.5;
  const auto studies = batch(g, 15);
  for (auto method : {DecodeMethod::kCoherence, DecodeMethod::kArgmaxNms}) {
    const DetectionReport r = report(studies, method);
    for (double ap : r.ap) CHECK(ap == 1.0);
    CHECK(r.da.mean == 1.0);
    CHECK(r.fa.mean == 1.0);
    CHECK(r.pooled.fa == 1.0);
    CHECK(r.image_iou.mean == 1.0);
  }
}

TEST_CASE("non-maximum suppression removes exact duplicates") {
  GenConfig g;
  g.seed = 2;
  g.duplicate_rate = 1.0;
  const Study s = generate_indexed_study(g, 0);
  const auto kept = argmax_nms_predictions(s.detections);
  CHECK(kept.size() == s.truth->objects.size());
  CHECK(argmax_nms_predictions(s.detections, 1.0).size() == s.detections.size());
}

TEST_CASE("coherence decoding beats argmax on duplicated detections") {
  GenConfig g;
  g.seed = 3;
  g.duplicate_rate = 0.5;
  g.temperature = 0.3;
  const auto studies = batch(g, 30);
  CHECK(report(studies, DecodeMethod::kCoherence).ap[0] > report(studies, DecodeMethod::kArgmaxNms).ap[0]);
}

TEST_CASE("bootstrap errors are seeded") {
  GenConfig g;
  g.seed = 4;
  g.temperature = 0.5;
  g.duplicate_rate = 0.3;
  const auto studies = batch(g, 10);
  const DetectionReport a = report(studies, DecodeMethod::kCoherence);
  const DetectionReport b = report(studies, DecodeMethod::kCoherence);
  CHECK(a.ap_se == b.ap_se);
  CHECK(a.ap_se[0] > 0.0);
}

TEST_CASE("truth objects need ground truth") {
  Study s;
  CHECK_THROWS_AS(truth_objects(s), ConstraintError);
}

TEST_CASE("policy features and the initial policy") {
  GenConfig g;
  g.seed = 5;
  g.temperature = 0.4;
  g.duplicate_rate = 0.3;
  const Study s = generate_indexed_study(g, 0);
  const TrainingInstance inst = training_instance(s);
  const ToothProblem problem = tooth_problem(s.detections);
  REQUIRE(inst.features.rows() == problem.objects.size());
  REQUIRE(inst.features.cols() == static_cast<std::size_t>(kPolicyFeatures));
  for (double v : inst.features.data()) {
    CHECK(v >= 0.0);
    CHECK(v <= 1.0);
  }
  CHECK(inst.truth.size() == problem.objects.size());

  // The starting policy renormalizes the tooth probabilities over the 32 teeth
  // for every class above the 1e-6 floor.
  const Matrix p = initial_policy().probabilities(inst.features);
  for (std::size_t n = 0; n < p.rows(); ++n) {
    double mass = 0.0;
    for (int t = 0; t < kNumTeeth; ++t) mass += problem.probs(n, t);
    for (int t = 0; t < kNumTeeth; ++t) {
      const double want = problem.probs(n, t) / mass;
      if (want > 1e-4) CHECK(p(n, t) == doctest::Approx(want).epsilon(1e-3));
    }
  }
}

TEST_CASE("training instances require a dentition label") {
  GenConfig g;
  Study s = generate_indexed_study(g, 0);
  s.dentition.reset();
  CHECK_THROWS_AS(training_instance(s), ConstraintError);
  Study unlabeled = generate_indexed_study(g, 1);
  unlabeled.truth.reset();
  CHECK(training_instance(unlabeled).truth.empty());
}

TEST_CASE("summaries need a segmentation map") {
  Study s = generate_indexed_study(GenConfig{}, 0);
  s.segmentation.reset();
  CHECK_THROWS(summarize(s, DecoderConfig{}));
}
