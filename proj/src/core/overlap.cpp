#include "deepopg/core.hpp"

#include <string>
#include <unordered_map>

namespace deepopg {

OverlapTensor::OverlapTensor(std::size_t objects, std::size_t classes,
                             std::vector<std::uint32_t> slots, std::vector<double> table)
    : objects_(objects), classes_(classes), slots_(std::move(slots)), table_(std::move(table)) {
  if (slots_.size() != objects_ * classes_) {
    throw DimensionError("overlap slot map has " + std::to_string(slots_.size()) +
                         " entries, expected " + std::to_string(objects_ * classes_));
  }
  std::size_t k = 0;
  while (k * k < table_.size()) ++k;
  if (k * k != table_.size()) throw DimensionError("overlap table is not square");
  slot_count_ = k;
  for (auto s : slots_) {
    if (s >= k) throw DimensionError("overlap slot index out of range");
  }
  for (std::size_t i = 0; i < k; ++i) {
    if (table_[i * k + i] != 1.0) throw ConstraintError("overlap of a mask with itself must be 1");
    for (std::size_t j = 0; j < k; ++j) {
      const double v = table_[i * k + j];
      if (!(v >= 0.0 && v <= 1.0)) throw ConstraintError("overlap value outside [0,1]");
      if (v != table_[j * k + i]) throw ConstraintError("overlap table is not symmetric");
    }
  }
}

OverlapTensor OverlapTensor::from_object_pairs(std::size_t classes, const Matrix& pair_iou) {
  if (pair_iou.rows() != pair_iou.cols()) throw DimensionError("pair IoU matrix must be square");
  const std::size_t n = pair_iou.rows();
  std::vector<std::uint32_t> slots(n * classes);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t c = 0; c < classes; ++c) slots[i * classes + c] = static_cast<std::uint32_t>(i);
  }
  return OverlapTensor(n, classes, std::move(slots),
                       std::vector<double>(pair_iou.data().begin(), pair_iou.data().end()));
}

OverlapTensor OverlapTensor::zeros(std::size_t objects, std::size_t classes) {
  Matrix eye(objects, objects);
  for (std::size_t i = 0; i < objects; ++i) eye(i, i) = 1.0;
  return from_object_pairs(classes, eye);
}

bool OverlapTensor::per_object() const {
  for (std::size_t n = 0; n < objects_; ++n) {
    for (std::size_t c = 1; c < classes_; ++c) {
      if (slots_[n * classes_ + c] != slots_[n * classes_]) return false;
    }
  }
  return true;
}

OverlapTensor OverlapTensor::select(std::span<const std::size_t> objects, std::size_t class_begin,
                                    std::size_t class_count) const {
  if (class_begin + class_count > classes_) throw DimensionError("class range out of bounds");
  std::unordered_map<std::uint32_t, std::uint32_t> remap;
  std::vector<std::uint32_t> used;
  std::vector<std::uint32_t> slots;
  slots.reserve(objects.size() * class_count);
  for (std::size_t n : objects) {
    if (n >= objects_) throw DimensionError("object index out of range");
    for (std::size_t c = 0; c < class_count; ++c) {
      const std::uint32_t s = slots_[n * classes_ + class_begin + c];
      auto [it, inserted] = remap.emplace(s, static_cast<std::uint32_t>(used.size()));
      if (inserted) used.push_back(s);
      slots.push_back(it->second);
    }
  }
  const std::size_t k = used.size();
  std::vector<double> table(k * k);
  for (std::size_t i = 0; i < k; ++i) {
    for (std::size_t j = 0; j < k; ++j) table[i * k + j] = table_[used[i] * slot_count_ + used[j]];
  }
  return OverlapTensor(objects.size(), class_count, std::move(slots), std::move(table));
}

OverlapTensor build_overlap_tensor(std::span<const Detection> detections) {
  const std::size_t n = detections.size();
  constexpr std::size_t kc = kNumDetClasses;
  std::vector<std::uint32_t> slots(n * kc);
  std::vector<const BinaryMask*> slot_masks;
  for (std::size_t i = 0; i < n; ++i) {
    const Detection& det = detections[i];
    if (det.masks.empty()) throw DimensionError("detection " + std::to_string(i) + " has no mask");
    const std::size_t first = slot_masks.size();
    for (std::size_t c = 0; c < kc; ++c) {
      const BinaryMask& m = det.mask(static_cast<int>(c));
      if (!slot_masks.empty() && (m.width() != slot_masks.front()->width() ||
                                  m.height() != slot_masks.front()->height())) {
        throw DimensionError("detection " + std::to_string(i) + " mask size differs from others");
      }
      std::uint32_t slot = static_cast<std::uint32_t>(slot_masks.size());
      for (std::size_t s = first; s < slot_masks.size(); ++s) {
        if (slot_masks[s] == &m || *slot_masks[s] == m) {
          slot = static_cast<std::uint32_t>(s);
          break;
        }
      }
      if (slot == slot_masks.size()) slot_masks.push_back(&m);
      slots[i * kc + c] = slot;
    }
  }
  const std::size_t k = slot_masks.size();
  std::vector<double> table(k * k, 0.0);
  for (std::size_t a = 0; a < k; ++a) {
    table[a * k + a] = 1.0;
    for (std::size_t b = a + 1; b < k; ++b) {
      const double q = mask_iou(*slot_masks[a], *slot_masks[b]);
      table[a * k + b] = q;
      table[b * k + a] = q;
    }
  }
  return OverlapTensor(n, kc, std::move(slots), std::move(table));
}

}  // namespace deepopg
