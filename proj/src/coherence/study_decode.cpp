#include "deepopg/coherence.hpp"

namespace deepopg {

ToothProblem tooth_problem(std::span<const Detection> detections) {
  ToothProblem problem;
  for (std::size_t i = 0; i < detections.size(); ++i) {
    if (is_tooth_class(detections[i].argmax())) problem.objects.push_back(i);
  }
  problem.probs = Matrix(problem.objects.size(), kNumTeeth);
  for (std::size_t r = 0; r < problem.objects.size(); ++r) {
    const Detection& det = detections[problem.objects[r]];
    for (int t = 0; t < kNumTeeth; ++t) problem.probs(r, t) = det.probs[det_class_of_tooth(t)];
  }
  std::vector<Detection> subset;
  subset.reserve(problem.objects.size());
  for (std::size_t i : problem.objects) subset.push_back(detections[i]);
  const OverlapTensor full = build_overlap_tensor(subset);
  std::vector<std::size_t> all(subset.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  problem.overlap = full.select(all, det_class_of_tooth(0), kNumTeeth);
  return problem;
}

std::optional<std::size_t> StudyDecode::detection_for_tooth(int tooth) const {
  const auto choices = result.assignment.choices();
  for (std::size_t r = 0; r < choices.size(); ++r) {
    if (choices[r] == tooth) return problem.objects[r];
  }
  return std::nullopt;
}

double StudyDecode::probability_for_tooth(int tooth) const {
  const auto choices = result.assignment.choices();
  for (std::size_t r = 0; r < choices.size(); ++r) {
    if (choices[r] == tooth) return problem.probs(r, static_cast<std::size_t>(tooth));
  }
  return 0.0;
}

StudyDecode decode_detections(std::span<const Detection> detections, const DecoderConfig& config) {
  StudyDecode out;
  out.problem = tooth_problem(detections);
  for (std::size_t i = 0; i < detections.size(); ++i) {
    const int cls = detections[i].argmax();
    if (cls == kImplantClass) out.implants.push_back(i);
    if (cls == kBackgroundClass) out.background.push_back(i);
  }
  out.result = decode_assignment(out.problem.probs, out.problem.overlap, config);
  return out;
}

}  // namespace deepopg
