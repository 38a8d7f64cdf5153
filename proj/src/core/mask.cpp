#include "deepopg/core.hpp"

#include <algorithm>
#include <string>

namespace deepopg {

namespace {

void check_dims(int width, int height) {
  if (width <= 0 || height <= 0) {
    throw DimensionError("mask dimensions must be positive, got " + std::to_string(width) + "x" +
                         std::to_string(height));
  }
}

void check_same(const BinaryMask& a, const BinaryMask& b) {
  if (a.width() != b.width() || a.height() != b.height()) {
    throw DimensionError("mask size mismatch: " + std::to_string(a.width()) + "x" +
                         std::to_string(a.height()) + " vs " + std::to_string(b.width()) + "x" +
                         std::to_string(b.height()));
  }
}

}  // namespace

BinaryMask::BinaryMask(int width, int height) : width_(width), height_(height) {
  check_dims(width, height);
  bits_.assign(static_cast<std::size_t>(width) * height, 0);
}

BinaryMask::BinaryMask(int width, int height, std::vector<std::uint8_t> bits)
    : width_(width), height_(height), bits_(std::move(bits)) {
  check_dims(width, height);
  if (bits_.size() != static_cast<std::size_t>(width) * height) {
    throw DimensionError("mask has " + std::to_string(bits_.size()) + " bits, expected " +
                         std::to_string(static_cast<std::size_t>(width) * height));
  }
  for (auto& b : bits_) b = b ? 1 : 0;
  refresh();
}

void BinaryMask::refresh() {
  area_ = 0;
  int x0 = width_, y0 = height_, x1 = -1, y1 = -1;
  for (int y = 0; y < height_; ++y) {
    const std::uint8_t* row = bits_.data() + static_cast<std::size_t>(y) * width_;
    for (int x = 0; x < width_; ++x) {
      if (!row[x]) continue;
      ++area_;
      x0 = std::min(x0, x);
      x1 = std::max(x1, x);
      y0 = std::min(y0, y);
      y1 = std::max(y1, y);
    }
  }
  extent_ = area_ ? Box{x0, y0, x1 + 1, y1 + 1} : Box{};
}

std::vector<std::uint32_t> BinaryMask::to_rle() const {
  std::vector<std::uint32_t> runs;
  std::uint8_t current = 0;
  std::uint32_t length = 0;
  for (std::uint8_t b : bits_) {
    if (b != current) {
      runs.push_back(length);
      current = b;
      length = 0;
    }
    ++length;
  }
  runs.push_back(length);
  return runs;
}

BinaryMask BinaryMask::from_rle(int width, int height, std::span<const std::uint32_t> runs) {
  check_dims(width, height);
  const std::size_t total = static_cast<std::size_t>(width) * height;
  std::vector<std::uint8_t> bits;
  bits.reserve(total);
  std::uint8_t value = 0;
  for (std::uint32_t run : runs) {
    if (bits.size() + run > total) {
      throw DimensionError("RLE runs exceed " + std::to_string(total) + " pixels");
    }
    bits.insert(bits.end(), run, value);
    value ^= 1;
  }
  if (bits.size() != total) {
    throw DimensionError("RLE runs cover " + std::to_string(bits.size()) + " of " +
                         std::to_string(total) + " pixels");
  }
  return BinaryMask(width, height, std::move(bits));
}

std::size_t intersection_area(const BinaryMask& a, const BinaryMask& b) {
  check_same(a, b);
  if (a.empty() || b.empty()) return 0;
  const Box& ea = a.extent();
  const Box& eb = b.extent();
  const int x0 = std::max(ea.x0, eb.x0), x1 = std::min(ea.x1, eb.x1);
  const int y0 = std::max(ea.y0, eb.y0), y1 = std::min(ea.y1, eb.y1);
  if (x0 >= x1 || y0 >= y1) return 0;
  const auto abits = a.bits();
  const auto bbits = b.bits();
  std::size_t count = 0;
  for (int y = y0; y < y1; ++y) {
    const std::size_t base = static_cast<std::size_t>(y) * a.width();
    for (int x = x0; x < x1; ++x) count += abits[base + x] & bbits[base + x];
  }
  return count;
}

double mask_iou(const BinaryMask& a, const BinaryMask& b) {
  const std::size_t inter = intersection_area(a, b);
  const std::size_t uni = a.area() + b.area() - inter;
  if (uni == 0) return 0.0;
  return static_cast<double>(inter) / static_cast<double>(uni);
}

Box box_of(const BinaryMask& mask) {
  if (mask.empty()) return Box{0, 0, 1, 1};
  return mask.extent();
}

SegmentationMap::SegmentationMap(int width, int height) : width_(width), height_(height) {
  check_dims(width, height);
  labels_.assign(static_cast<std::size_t>(width) * height, 0);
}

SegmentationMap::SegmentationMap(int width, int height, std::vector<std::uint8_t> labels)
    : width_(width), height_(height), labels_(std::move(labels)) {
  check_dims(width, height);
  if (labels_.size() != static_cast<std::size_t>(width) * height) {
    throw DimensionError("segmentation map has " + std::to_string(labels_.size()) +
                         " labels, expected " +
                         std::to_string(static_cast<std::size_t>(width) * height));
  }
  for (std::size_t i = 0; i < labels_.size(); ++i) {
    if (labels_[i] >= kNumSegClasses) {
      throw ConstraintError("segmentation label " + std::to_string(labels_[i]) + " at pixel " +
                            std::to_string(i) + " is not a functional class");
    }
  }
}

}  // namespace deepopg
