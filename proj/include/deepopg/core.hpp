#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace deepopg {

// Errors ---------------------------------------------------------------------

/// Operand shapes disagree (mask sizes, matrix dimensions, label lengths).
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A value violates a documented invariant (probabilities, constraints).
class ConstraintError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Class enumerations ---------------------------------------------------------

inline constexpr int kNumSegClasses = 7;
inline constexpr int kNumDetClasses = 34;
inline constexpr int kNumTeeth = 32;
inline constexpr int kBackgroundClass = 0;
inline constexpr int kImplantClass = 33;

/// Functional segmentation classes, in file order.
enum class SegClass : std::uint8_t {
  kBackground = 0,
  kNormalTooth = 1,
  kImpaction = 2,
  kCrownBridge = 3,
  kRestoration = 4,
  kRootFilling = 5,
  kImplant = 6,
};

/// Per-tooth finding types reported in a summary.
enum class Finding : int {
  kMissing = 0,
  kImpacted = 1,
  kCrownBridge = 2,
  kRestoration = 3,
  kRootFilled = 4,
  kImplant = 5,
};
inline constexpr int kNumFindings = 6;

const char* finding_name(Finding f);

// Tooth indices run 0..31 and map to detection classes 1..32 in the order
// FDI 18..11, 21..28, 38..31, 41..48.
int fdi_number(int tooth);
/// Inverse of fdi_number; throws ConstraintError on an unknown FDI code.
int tooth_from_fdi(int fdi);
inline constexpr int det_class_of_tooth(int tooth) { return tooth + 1; }
inline constexpr int tooth_of_det_class(int cls) { return cls - 1; }
inline constexpr bool is_tooth_class(int cls) { return cls >= 1 && cls <= kNumTeeth; }

bool is_upper_tooth(int tooth);
/// Slot along the arch as seen on the radiograph, 0 = image left, 15 = image right.
int arch_slot(int tooth);
/// Tooth index occupying a slot of the upper or lower arch.
int tooth_at_slot(bool upper, int slot);

// Geometry -------------------------------------------------------------------

/// Half-open pixel rectangle [x0, x1) x [y0, y1).
struct Box {
  int x0 = 0;
  int y0 = 0;
  int x1 = 0;
  int y1 = 0;

  int width() const { return x1 - x0; }
  int height() const { return y1 - y0; }
  double center_x() const { return 0.5 * (x0 + x1); }
  double center_y() const { return 0.5 * (y0 + y1); }
  bool operator==(const Box&) const = default;
};

/// Row-major binary mask. Area and the tight bounding box of set pixels are
/// cached at construction so overlap queries can skip disjoint regions.
class BinaryMask {
 public:
  BinaryMask() = default;
  BinaryMask(int width, int height);
  BinaryMask(int width, int height, std::vector<std::uint8_t> bits);

  int width() const { return width_; }
  int height() const { return height_; }
  std::size_t area() const { return area_; }
  bool empty() const { return area_ == 0; }
  /// Tight box around set pixels; all-zero box when empty.
  const Box& extent() const { return extent_; }

  bool at(int x, int y) const { return bits_[static_cast<std::size_t>(y) * width_ + x] != 0; }
  std::span<const std::uint8_t> bits() const { return bits_; }

  /// Alternating run lengths over the row-major bitmap, starting with a run
  /// of zeros (possibly of length 0).
  std::vector<std::uint32_t> to_rle() const;
  static BinaryMask from_rle(int width, int height, std::span<const std::uint32_t> runs);

  bool operator==(const BinaryMask& other) const {
    return width_ == other.width_ && height_ == other.height_ && bits_ == other.bits_;
  }

 private:
  void refresh();

  int width_ = 0;
  int height_ = 0;
  std::vector<std::uint8_t> bits_;
  std::size_t area_ = 0;
  Box extent_;
};

std::size_t intersection_area(const BinaryMask& a, const BinaryMask& b);

/// |a ∩ b| / |a ∪ b|, or 0 when both masks are empty.
double mask_iou(const BinaryMask& a, const BinaryMask& b);

/// Per-pixel functional class labels.
class SegmentationMap {
 public:
  SegmentationMap() = default;
  SegmentationMap(int width, int height);
  SegmentationMap(int width, int height, std::vector<std::uint8_t> labels);

  int width() const { return width_; }
  int height() const { return height_; }
  std::uint8_t at(int x, int y) const { return labels_[static_cast<std::size_t>(y) * width_ + x]; }
  void set(int x, int y, SegClass c) {
    labels_[static_cast<std::size_t>(y) * width_ + x] = static_cast<std::uint8_t>(c);
  }
  std::span<const std::uint8_t> labels() const { return labels_; }

  bool operator==(const SegmentationMap&) const = default;

 private:
  int width_ = 0;
  int height_ = 0;
  std::vector<std::uint8_t> labels_;
};

// Detections -----------------------------------------------------------------

using ClassProbs = std::array<double, kNumDetClasses>;

struct Detection {
  ClassProbs probs{};
  Box box;
  /// Either one shared silhouette or one mask per detection class.
  std::vector<BinaryMask> masks;

  bool shared_mask() const { return masks.size() == 1; }
  const BinaryMask& mask(int cls = kBackgroundClass) const;
  /// Index of the largest probability, lowest index on ties.
  int argmax() const;

  /// Throws ConstraintError / DimensionError when the detection is malformed
  /// for an image of the given size.
  void validate(int image_width, int image_height) const;
};

/// Box spanning the set pixels of a mask, clamped to at least one pixel.
Box box_of(const BinaryMask& mask);

// Dense matrix ---------------------------------------------------------------

class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }
  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> data() const { return data_; }
  std::span<double> data() { return data_; }

  bool operator==(const Matrix&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

// Assignment -----------------------------------------------------------------

/// Binary matrix assigning classes to objects. Construction enforces at most
/// one class per object and at most one object per class.
class Assignment {
 public:
  static constexpr int kNone = -1;

  Assignment() = default;
  Assignment(std::size_t objects, std::size_t classes);
  /// From per-object class choices (kNone for suppressed objects).
  static Assignment from_choices(std::size_t classes, std::span<const int> choices);
  /// From a dense 0/1 matrix; throws ConstraintError if either constraint fails.
  static Assignment from_matrix(const std::vector<std::vector<int>>& entries);

  std::size_t objects() const { return choice_.size(); }
  std::size_t classes() const { return classes_; }
  int class_of(std::size_t object) const { return choice_[object]; }
  bool at(std::size_t object, std::size_t cls) const { return choice_[object] == static_cast<int>(cls); }
  std::span<const int> choices() const { return choice_; }
  std::size_t assigned_count() const;
  std::vector<std::size_t> suppressed() const;

  /// Assign `cls` to `object`; throws ConstraintError if the class is taken
  /// by another object.
  void assign(std::size_t object, int cls);

  bool operator==(const Assignment&) const = default;

 private:
  std::size_t classes_ = 0;
  std::vector<int> choice_;
};

// Overlap tensor -------------------------------------------------------------

/// Pairwise mask IoU q(n, c, m, d). Every (object, class) pair references a
/// mask slot; q is looked up in a symmetric slot-by-slot table. Shared-mask
/// detections use one slot per object, so q collapses to an object-pair value.
class OverlapTensor {
 public:
  OverlapTensor() = default;
  /// `slots` has objects*classes entries; `table` is k*k for k distinct slots.
  OverlapTensor(std::size_t objects, std::size_t classes, std::vector<std::uint32_t> slots,
                std::vector<double> table);

  /// One slot per object; `pair_iou` is objects x objects.
  static OverlapTensor from_object_pairs(std::size_t classes, const Matrix& pair_iou);
  static OverlapTensor zeros(std::size_t objects, std::size_t classes);

  std::size_t objects() const { return objects_; }
  std::size_t classes() const { return classes_; }
  std::size_t slot_count() const { return slot_count_; }

  double operator()(std::size_t n, std::size_t c, std::size_t m, std::size_t d) const {
    return table_[slots_[n * classes_ + c] * slot_count_ + slots_[m * classes_ + d]];
  }
  /// True when every object maps all classes to one slot.
  bool per_object() const;

  /// Restrict to a subset of objects and a contiguous class range.
  OverlapTensor select(std::span<const std::size_t> objects, std::size_t class_begin,
                       std::size_t class_count) const;

 private:
  std::size_t objects_ = 0;
  std::size_t classes_ = 0;
  std::size_t slot_count_ = 0;
  std::vector<std::uint32_t> slots_;
  std::vector<double> table_;
};

/// IoU tensor over all detection classes. Per-class masks are deduplicated
/// within each detection before pairwise IoUs are computed.
OverlapTensor build_overlap_tensor(std::span<const Detection> detections);

// Weak supervision label -----------------------------------------------------

struct DentitionLabel {
  std::array<bool, kNumTeeth> present{};
  int implant_count = 0;

  bool operator==(const DentitionLabel&) const = default;
};

}  // namespace deepopg
