#pragma once

#include <array>
#include <cstdint>

#include "deepopg/random.hpp"
#include "deepopg/study.hpp"

namespace deepopg {

struct GenConfig {
  int width = 384;
  int height = 192;
  double missing_prob = 0.1;
  /// Chance that a missing tooth's slot holds an implant.
  double implant_prob = 0.3;
  double impacted_prob = 0.05;
  double crown_bridge_prob = 0.1;
  double restoration_prob = 0.2;
  double root_filled_prob = 0.1;

  /// Chance that an object is detected twice with near-identical masks.
  double duplicate_rate = 0.0;
  /// Spread of probability mass away from the true class; 0 gives one-hot.
  double temperature = 0.0;
  /// Maximum displacement of mask centre and semi-axes, in pixels.
  double jitter = 0.0;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Builds one synthetic study: 32 elliptical tooth slots on two parabolic
/// arches, missing teeth and implants drawn from the config, finding regions
/// painted into the segmentation map, and corrupted detections derived from
/// the ground-truth objects.
///
/// The random stream consumed per slot and per object does not depend on the
/// corruption knobs, so sweeping a knob with a fixed seed changes only that
/// knob's effect.
Study generate_study(const GenConfig& config, Rng& rng, const std::string& id = "study");

/// Seed of study `index` in a batch generated from `base_seed`.
std::uint64_t study_seed(std::uint64_t base_seed, std::uint64_t index);

/// Study `index` of the batch described by `config`, named study_NNNN.
Study generate_indexed_study(const GenConfig& config, std::size_t index);

}  // namespace deepopg
