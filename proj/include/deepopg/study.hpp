#pragma once

#include <array>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "deepopg/core.hpp"

namespace deepopg {

using FindingMatrix = std::array<std::array<bool, kNumFindings>, kNumTeeth>;

struct GroundTruthObject {
  int cls = kBackgroundClass;  // detection class index, 1..33
  Box box;
  BinaryMask mask;
};

struct GroundTruth {
  std::vector<GroundTruthObject> objects;
  FindingMatrix findings{};
  /// For each detection, the ground-truth object it was derived from, or -1.
  std::vector<int> detection_source;
  std::optional<SegmentationMap> segmentation;
};

/// One radiograph's worth of network outputs plus optional labels.
struct Study {
  std::string id;
  int width = 0;
  int height = 0;
  std::vector<Detection> detections;
  std::optional<SegmentationMap> segmentation;
  std::optional<DentitionLabel> dentition;
  std::optional<GroundTruth> truth;
};

/// Raised for malformed study or segmentation files. `where()` names the file
/// and the JSON pointer of the offending field.
class StudyFormatError : public std::runtime_error {
 public:
  StudyFormatError(const std::string& file, const std::string& field, const std::string& what);
  const std::string& file() const { return file_; }
  const std::string& field() const { return field_; }

 private:
  std::string file_;
  std::string field_;
};

enum class MaskEncoding { kRle, kRaw };

struct StudyWriteOptions {
  MaskEncoding encoding = MaskEncoding::kRle;
};

// Segmentation bitmap: little-endian uint32 width, uint32 height, then one
// label byte per pixel in row-major order.
void write_segmentation_file(const std::filesystem::path& path, const SegmentationMap& map);
SegmentationMap read_segmentation_file(const std::filesystem::path& path);

/// Writes `<stem>.json` plus `<stem>.seg` / `<stem>.gt.seg` next to it when
/// the study carries segmentation maps.
void save_study(const Study& study, const std::filesystem::path& json_path,
                const StudyWriteOptions& options = {});
Study load_study(const std::filesystem::path& json_path);

/// In-memory form used by save_study. Segmentation maps are referenced by
/// relative file name and must be written separately.
std::string study_to_json(const Study& study, const StudyWriteOptions& options = {});
/// Parses a study document. Relative segmentation paths resolve against
/// `base_dir`; `file_label` is used in error messages.
Study study_from_json(const std::string& text, const std::filesystem::path& base_dir,
                      const std::string& file_label);

}  // namespace deepopg
