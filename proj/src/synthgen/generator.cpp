#include "deepopg/synthgen.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <string>

namespace deepopg {

namespace {

// Logit noise scale for the label-confusion model and the extra noise a
// duplicate proposal gets on top of its original.
constexpr double kLogitNoise = 1.5;
constexpr double kDuplicateNoise = 1.0;
// Share of a duplicate's probability mass kept on object classes.
constexpr double kDuplicateObjectMass = 0.8;

// Fractions along the tooth axis (0 = occlusal edge, 1 = apex).
constexpr double kCrownEnd = 0.4;
constexpr double kRestorationEnd = 0.5;
constexpr double kRootFillStart = 0.6;
constexpr double kRootFillHalfWidth = 0.2;

struct Slot {
  double cx;
  double cy;
  double a;  // horizontal semi-axis
  double b;  // vertical semi-axis
  bool upper;
};

struct Layout {
  std::array<Slot, kNumTeeth> slots;
};

Layout make_layout(int w, int h) {
  Layout layout;
  const double margin = 0.04 * w;
  const double spacing = (w - 2.0 * margin) / 16.0;
  for (int t = 0; t < kNumTeeth; ++t) {
    const bool upper = is_upper_tooth(t);
    const int k = arch_slot(t);
    const double cx = margin + (k + 0.5) * spacing;
    const double u = (cx - 0.5 * w) / (0.5 * w);
    const double base = upper ? 0.30 : 0.70;
    layout.slots[t] = Slot{cx, h * (base - 0.05 * u * u), 0.52 * spacing, 0.17 * h, upper};
  }
  return layout;
}

BinaryMask ellipse_mask(int w, int h, double cx, double cy, double a, double b) {
  std::vector<std::uint8_t> bits(static_cast<std::size_t>(w) * h, 0);
  const int y0 = std::max(0, static_cast<int>(std::floor(cy - b)));
  const int y1 = std::min(h - 1, static_cast<int>(std::ceil(cy + b)));
  const int x0 = std::max(0, static_cast<int>(std::floor(cx - a)));
  const int x1 = std::min(w - 1, static_cast<int>(std::ceil(cx + a)));
  for (int y = y0; y <= y1; ++y) {
    const double dy = (y + 0.5 - cy) / b;
    for (int x = x0; x <= x1; ++x) {
      const double dx = (x + 0.5 - cx) / a;
      if (dx * dx + dy * dy <= 1.0) bits[static_cast<std::size_t>(y) * w + x] = 1;
    }
  }
  return BinaryMask(w, h, std::move(bits));
}

BinaryMask shifted(const BinaryMask& m, int dx, int dy) {
  std::vector<std::uint8_t> bits(m.bits().size(), 0);
  for (int y = 0; y < m.height(); ++y) {
    const int sy = y - dy;
    if (sy < 0 || sy >= m.height()) continue;
    for (int x = 0; x < m.width(); ++x) {
      const int sx = x - dx;
      if (sx >= 0 && sx < m.width() && m.at(sx, sy)) bits[static_cast<std::size_t>(y) * m.width() + x] = 1;
    }
  }
  return BinaryMask(m.width(), m.height(), std::move(bits));
}

/// Confusion distance from the true class to every detection class.
std::array<double, kNumDetClasses> class_distances(int true_cls) {
  std::array<double, kNumDetClasses> d{};
  d[kBackgroundClass] = 2.5;
  if (true_cls == kImplantClass) {
    for (int c = 1; c <= kNumTeeth; ++c) d[c] = 3.0;
    d[kImplantClass] = 0.0;
    return d;
  }
  const int t = tooth_of_det_class(true_cls);
  for (int c = 1; c <= kNumTeeth; ++c) {
    const int o = tooth_of_det_class(c);
    d[c] = std::abs(arch_slot(o) - arch_slot(t)) + (is_upper_tooth(o) != is_upper_tooth(t) ? 2.0 : 0.0);
  }
  d[kImplantClass] = 3.0;
  return d;
}

ClassProbs softmax(const std::array<double, kNumDetClasses>& z) {
  ClassProbs p{};
  const double top = *std::max_element(z.begin(), z.end());
  double sum = 0.0;
  for (int c = 0; c < kNumDetClasses; ++c) {
    p[c] = std::exp(z[c] - top);
    sum += p[c];
  }
  for (auto& v : p) v /= sum;
  return p;
}

ClassProbs one_hot(int cls) {
  ClassProbs p{};
  p[cls] = 1.0;
  return p;
}

struct ObjectDraws {
  double dx, dy, da, db;
  std::array<double, kNumDetClasses> noise;
  double dup_u;
  double dup_dir;
  std::array<double, kNumDetClasses> dup_noise;
};

ObjectDraws draw_object(Rng& rng) {
  ObjectDraws d{};
  d.dx = rng.uniform(-1.0, 1.0);
  d.dy = rng.uniform(-1.0, 1.0);
  d.da = rng.uniform(-1.0, 1.0);
  d.db = rng.uniform(-1.0, 1.0);
  for (auto& v : d.noise) v = rng.normal();
  d.dup_u = rng.uniform();
  d.dup_dir = rng.uniform();
  for (auto& v : d.dup_noise) v = rng.normal();
  return d;
}

}  // namespace

void GenConfig::validate() const {
  auto prob = [](double p, const char* name) {
    if (!(p >= 0.0 && p <= 1.0)) throw ConstraintError(std::string(name) + " must lie in [0,1]");
  };
  prob(missing_prob, "missing_prob");
  prob(implant_prob, "implant_prob");
  prob(impacted_prob, "impacted_prob");
  prob(crown_bridge_prob, "crown_bridge_prob");
  prob(restoration_prob, "restoration_prob");
  prob(root_filled_prob, "root_filled_prob");
  prob(duplicate_rate, "duplicate_rate");
  if (!(temperature >= 0.0) || !std::isfinite(temperature)) throw ConstraintError("temperature must be >= 0");
  if (!(jitter >= 0.0) || !std::isfinite(jitter)) throw ConstraintError("jitter must be >= 0");
  if (width < 128 || height < 64) {
    throw ConstraintError("image " + std::to_string(width) + "x" + std::to_string(height) +
                          " is too small to fit 32 tooth slots (need at least 128x64)");
  }
}

Study generate_study(const GenConfig& config, Rng& rng, const std::string& id) {
  config.validate();
  const int w = config.width;
  const int h = config.height;
  const Layout layout = make_layout(w, h);

  Study study;
  study.id = id;
  study.width = w;
  study.height = h;
  SegmentationMap seg(w, h);
  GroundTruth truth;
  DentitionLabel label;

  // Slot contents. Six draws per slot whatever the outcome.
  struct SlotState {
    bool present = false;
    bool implant = false;
    std::array<bool, kNumFindings> findings{};
  };
  std::array<SlotState, kNumTeeth> slots{};
  for (int t = 0; t < kNumTeeth; ++t) {
    const double u_missing = rng.uniform();
    const double u_implant = rng.uniform();
    const double u_imp = rng.uniform();
    const double u_crown = rng.uniform();
    const double u_resto = rng.uniform();
    const double u_root = rng.uniform();
    SlotState& s = slots[t];
    s.present = u_missing >= config.missing_prob;
    if (!s.present) {
      s.implant = u_implant < config.implant_prob;
      s.findings[static_cast<int>(Finding::kMissing)] = true;
      s.findings[static_cast<int>(Finding::kImplant)] = s.implant;
      continue;
    }
    s.findings[static_cast<int>(Finding::kImpacted)] = u_imp < config.impacted_prob;
    s.findings[static_cast<int>(Finding::kCrownBridge)] = u_crown < config.crown_bridge_prob;
    s.findings[static_cast<int>(Finding::kRestoration)] = u_resto < config.restoration_prob;
    s.findings[static_cast<int>(Finding::kRootFilled)] = u_root < config.root_filled_prob;
  }

  // Ground-truth objects and segmentation.
  for (int t = 0; t < kNumTeeth; ++t) {
    const SlotState& s = slots[t];
    const Slot& g = layout.slots[t];
    truth.findings[t] = s.findings;
    label.present[t] = s.present;
    if (!s.present && !s.implant) continue;

    GroundTruthObject obj;
    if (s.implant) {
      obj.cls = kImplantClass;
      obj.mask = ellipse_mask(w, h, g.cx, g.cy, 0.8 * g.a, 0.85 * g.b);
      ++label.implant_count;
    } else {
      obj.cls = det_class_of_tooth(t);
      obj.mask = ellipse_mask(w, h, g.cx, g.cy, g.a, g.b);
    }
    obj.box = box_of(obj.mask);

    const Box& e = obj.mask.extent();
    for (int y = e.y0; y < e.y1; ++y) {
      for (int x = e.x0; x < e.x1; ++x) {
        if (!obj.mask.at(x, y)) continue;
        if (s.implant) {
          seg.set(x, y, SegClass::kImplant);
          continue;
        }
        const double v = g.upper ? (g.cy + g.b - (y + 0.5)) / (2.0 * g.b) : ((y + 0.5) - (g.cy - g.b)) / (2.0 * g.b);
        const double u = (x + 0.5 - g.cx) / g.a;
        SegClass cls = s.findings[static_cast<int>(Finding::kImpacted)] ? SegClass::kImpaction : SegClass::kNormalTooth;
        if (s.findings[static_cast<int>(Finding::kCrownBridge)] && v < kCrownEnd) {
          cls = SegClass::kCrownBridge;
        } else if (s.findings[static_cast<int>(Finding::kRestoration)] && v >= kCrownEnd && v < kRestorationEnd) {
          cls = SegClass::kRestoration;
        } else if (s.findings[static_cast<int>(Finding::kRootFilled)] && v >= kRootFillStart &&
                   std::abs(u) < kRootFillHalfWidth) {
          cls = SegClass::kRootFilling;
        }
        seg.set(x, y, cls);
      }
    }
    truth.objects.push_back(std::move(obj));
  }

  // Corrupted detections, one draw block per ground-truth object.
  const double temp = config.temperature;
  const double jit = config.jitter;
  for (std::size_t i = 0; i < truth.objects.size(); ++i) {
    const GroundTruthObject& obj = truth.objects[i];
    const ObjectDraws d = draw_object(rng);

    BinaryMask mask = obj.mask;
    if (jit > 0.0) {
      const Box& b = obj.mask.extent();
      const double cx = b.center_x(), cy = b.center_y();
      const double a0 = 0.5 * b.width(), b0 = 0.5 * b.height();
      mask = ellipse_mask(w, h, cx + jit * d.dx, cy + jit * d.dy, std::max(2.0, a0 + 0.5 * jit * d.da),
                          std::max(2.0, b0 + 0.5 * jit * d.db));
      if (mask.empty()) mask = obj.mask;
    }

    const auto dist = class_distances(obj.cls);
    ClassProbs probs;
    std::array<double, kNumDetClasses> z{};
    if (temp == 0.0) {
      probs = one_hot(obj.cls);
    } else {
      for (int c = 0; c < kNumDetClasses; ++c) z[c] = -dist[c] / temp + kLogitNoise * d.noise[c];
      probs = softmax(z);
    }

    Detection det;
    det.probs = probs;
    det.box = box_of(mask);
    det.masks.push_back(mask);
    study.detections.push_back(det);
    truth.detection_source.push_back(static_cast<int>(i));

    if (d.dup_u < config.duplicate_rate) {
      const int dy = d.dup_dir < 0.5 ? -1 : 1;
      BinaryMask dup_mask = shifted(mask, 0, dy);
      if (dup_mask.empty() || mask_iou(dup_mask, mask) < 0.8) dup_mask = mask;
      ClassProbs dup_probs;
      if (temp == 0.0) {
        dup_probs = one_hot(obj.cls);
      } else {
        std::array<double, kNumDetClasses> zd = z;
        for (int c = 0; c < kNumDetClasses; ++c) zd[c] += kDuplicateNoise * d.dup_noise[c];
        dup_probs = softmax(zd);
      }
      for (int c = 0; c < kNumDetClasses; ++c) dup_probs[c] *= kDuplicateObjectMass;
      dup_probs[kBackgroundClass] += 1.0 - kDuplicateObjectMass;
      Detection dup;
      dup.probs = dup_probs;
      dup.box = box_of(dup_mask);
      dup.masks.push_back(std::move(dup_mask));
      study.detections.push_back(std::move(dup));
      truth.detection_source.push_back(static_cast<int>(i));
    }
  }

  study.segmentation = seg;
  truth.segmentation = std::move(seg);
  study.dentition = label;
  study.truth = std::move(truth);
  return study;
}

std::uint64_t study_seed(std::uint64_t base_seed, std::uint64_t index) {
  auto mix = [](std::uint64_t z) {
    z += 0x9E3779B97F4A7C15ull;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
  };
  return mix(base_seed ^ mix(index));
}

Study generate_indexed_study(const GenConfig& config, std::size_t index) {
  Rng rng(study_seed(config.seed, index));
  char name[32];
  std::snprintf(name, sizeof name, "study_%04zu", index);
  return generate_study(config, rng, name);
}

}  // namespace deepopg
