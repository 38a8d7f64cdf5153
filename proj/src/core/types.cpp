#include "deepopg/core.hpp"

#include <cmath>
#include <string>

namespace deepopg {

const char* finding_name(Finding f) {
  switch (f) {
    case Finding::kMissing: return "missing";
    case Finding::kImpacted: return "impacted";
    case Finding::kCrownBridge: return "crown_bridge";
    case Finding::kRestoration: return "restoration";
    case Finding::kRootFilled: return "root_filled";
    case Finding::kImplant: return "implant";
  }
  return "unknown";
}

int fdi_number(int tooth) {
  if (tooth < 0 || tooth >= kNumTeeth) {
    throw ConstraintError("tooth index " + std::to_string(tooth) + " out of range");
  }
  if (tooth < 8) return 18 - tooth;
  if (tooth < 16) return 21 + (tooth - 8);
  if (tooth < 24) return 38 - (tooth - 16);
  return 41 + (tooth - 24);
}

int tooth_from_fdi(int fdi) {
  const int quadrant = fdi / 10;
  const int pos = fdi % 10;
  if (pos < 1 || pos > 8) throw ConstraintError("invalid FDI number " + std::to_string(fdi));
  switch (quadrant) {
    case 1: return 8 - pos;
    case 2: return 8 + pos - 1;
    case 3: return 16 + 8 - pos;
    case 4: return 24 + pos - 1;
    default: throw ConstraintError("invalid FDI number " + std::to_string(fdi));
  }
}

bool is_upper_tooth(int tooth) { return tooth < 16; }

int arch_slot(int tooth) {
  if (tooth < 16) return tooth;
  if (tooth < 24) return 15 - (tooth - 16);
  return 7 - (tooth - 24);
}

int tooth_at_slot(bool upper, int slot) {
  if (upper) return slot;
  return slot >= 8 ? 16 + (15 - slot) : 24 + (7 - slot);
}

const BinaryMask& Detection::mask(int cls) const {
  if (masks.empty()) throw DimensionError("detection has no mask");
  if (masks.size() == 1) return masks.front();
  return masks.at(static_cast<std::size_t>(cls));
}

int Detection::argmax() const {
  int best = 0;
  for (int c = 1; c < kNumDetClasses; ++c) {
    if (probs[c] > probs[best]) best = c;
  }
  return best;
}

void Detection::validate(int image_width, int image_height) const {
  double sum = 0.0;
  for (double p : probs) {
    if (!(p >= 0.0 && p <= 1.0)) throw ConstraintError("probability outside [0,1]");
    sum += p;
  }
  if (std::abs(sum - 1.0) > 1e-6) {
    throw ConstraintError("probabilities sum to " + std::to_string(sum));
  }
  if (!(box.x0 < box.x1 && box.y0 < box.y1)) throw ConstraintError("degenerate box");
  if (box.x0 < 0 || box.y0 < 0 || box.x1 > image_width || box.y1 > image_height) {
    throw ConstraintError("box outside image bounds");
  }
  if (masks.size() != 1 && masks.size() != static_cast<std::size_t>(kNumDetClasses)) {
    throw DimensionError("detection needs 1 or " + std::to_string(kNumDetClasses) +
                         " masks, has " + std::to_string(masks.size()));
  }
  for (const auto& m : masks) {
    if (m.width() != image_width || m.height() != image_height) {
      throw DimensionError("detection mask does not match image size");
    }
  }
}

Assignment::Assignment(std::size_t objects, std::size_t classes)
    : classes_(classes), choice_(objects, kNone) {}

Assignment Assignment::from_choices(std::size_t classes, std::span<const int> choices) {
  Assignment a(choices.size(), classes);
  for (std::size_t n = 0; n < choices.size(); ++n) {
    if (choices[n] != kNone) a.assign(n, choices[n]);
  }
  return a;
}

Assignment Assignment::from_matrix(const std::vector<std::vector<int>>& entries) {
  const std::size_t classes = entries.empty() ? 0 : entries.front().size();
  Assignment a(entries.size(), classes);
  for (std::size_t n = 0; n < entries.size(); ++n) {
    if (entries[n].size() != classes) throw DimensionError("ragged assignment matrix");
    for (std::size_t c = 0; c < classes; ++c) {
      const int e = entries[n][c];
      if (e != 0 && e != 1) throw ConstraintError("assignment entries must be 0 or 1");
      if (!e) continue;
      if (a.choice_[n] != kNone) {
        throw ConstraintError("object " + std::to_string(n) + " assigned more than one class");
      }
      a.assign(n, static_cast<int>(c));
    }
  }
  return a;
}

void Assignment::assign(std::size_t object, int cls) {
  if (object >= choice_.size()) throw DimensionError("object index out of range");
  if (cls == kNone) {
    choice_[object] = kNone;
    return;
  }
  if (cls < 0 || static_cast<std::size_t>(cls) >= classes_) {
    throw DimensionError("class index " + std::to_string(cls) + " out of range");
  }
  for (std::size_t m = 0; m < choice_.size(); ++m) {
    if (m != object && choice_[m] == cls) {
      throw ConstraintError("class " + std::to_string(cls) + " assigned to objects " +
                            std::to_string(m) + " and " + std::to_string(object));
    }
  }
  choice_[object] = cls;
}

std::size_t Assignment::assigned_count() const {
  std::size_t k = 0;
  for (int c : choice_) k += c != kNone;
  return k;
}

std::vector<std::size_t> Assignment::suppressed() const {
  std::vector<std::size_t> out;
  for (std::size_t n = 0; n < choice_.size(); ++n) {
    if (choice_[n] == kNone) out.push_back(n);
  }
  return out;
}

}  // namespace deepopg
