#include "deepopg/study.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "json.hpp"

namespace deepopg {

namespace fs = std::filesystem;
using nlohmann::json;

StudyFormatError::StudyFormatError(const std::string& file, const std::string& field,
                                   const std::string& what)
    : std::runtime_error(file + ": " + (field.empty() ? std::string("<root>") : field) + ": " + what),
      file_(file),
      field_(field) {}

// Segmentation files ---------------------------------------------------------

namespace {

void put_u32(std::ostream& out, std::uint32_t v) {
  const char bytes[4] = {static_cast<char>(v & 0xFF), static_cast<char>((v >> 8) & 0xFF),
                         static_cast<char>((v >> 16) & 0xFF), static_cast<char>((v >> 24) & 0xFF)};
  out.write(bytes, 4);
}

bool get_u32(std::istream& in, std::uint32_t& v) {
  unsigned char b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4)) return false;
  v = b[0] | (b[1] << 8) | (b[2] << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
  return true;
}

}  // namespace

void write_segmentation_file(const fs::path& path, const SegmentationMap& map) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  put_u32(out, static_cast<std::uint32_t>(map.width()));
  put_u32(out, static_cast<std::uint32_t>(map.height()));
  const auto labels = map.labels();
  out.write(reinterpret_cast<const char*>(labels.data()), static_cast<std::streamsize>(labels.size()));
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

SegmentationMap read_segmentation_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  const std::string label = path.string();
  if (!in) throw StudyFormatError(label, "", "cannot open segmentation file");
  std::uint32_t w = 0, h = 0;
  if (!get_u32(in, w) || !get_u32(in, h)) throw StudyFormatError(label, "header", "truncated header");
  if (w == 0 || h == 0 || w > 1u << 15 || h > 1u << 15) {
    throw StudyFormatError(label, "header", "implausible dimensions");
  }
  std::vector<std::uint8_t> labels(static_cast<std::size_t>(w) * h);
  if (!in.read(reinterpret_cast<char*>(labels.data()), static_cast<std::streamsize>(labels.size()))) {
    throw StudyFormatError(label, "pixels", "fewer pixels than the header declares");
  }
  if (in.peek() != std::char_traits<char>::eof()) {
    throw StudyFormatError(label, "pixels", "trailing bytes after pixel data");
  }
  try {
    return SegmentationMap(static_cast<int>(w), static_cast<int>(h), std::move(labels));
  } catch (const std::invalid_argument& e) {
    throw StudyFormatError(label, "pixels", e.what());
  }
}

// Study documents ------------------------------------------------------------

namespace {

json box_json(const Box& b) { return json::array({b.x0, b.y0, b.x1, b.y1}); }

json mask_json(const BinaryMask& m, MaskEncoding enc) {
  if (enc == MaskEncoding::kRaw) {
    std::string bits(m.bits().size(), '0');
    for (std::size_t i = 0; i < bits.size(); ++i) bits[i] = m.bits()[i] ? '1' : '0';
    return json{{"bits", bits}};
  }
  return json{{"rle", m.to_rle()}};
}

json to_json(const Study& s, const StudyWriteOptions& opt, const std::string& seg_stem) {
  json doc;
  doc["format"] = "deepopg-study";
  doc["version"] = 1;
  doc["id"] = s.id;
  doc["image"] = {{"width", s.width}, {"height", s.height}};
  json dets = json::array();
  for (const Detection& d : s.detections) {
    json j;
    j["probs"] = d.probs;
    j["box"] = box_json(d.box);
    if (d.shared_mask()) {
      j["mask"] = mask_json(d.masks.front(), opt.encoding);
    } else {
      json ms = json::array();
      for (const auto& m : d.masks) ms.push_back(mask_json(m, opt.encoding));
      j["masks"] = std::move(ms);
    }
    dets.push_back(std::move(j));
  }
  doc["detections"] = std::move(dets);
  if (s.segmentation) doc["segmentation"] = {{"path", seg_stem + ".seg"}};
  if (s.dentition) {
    json present = json::array();
    for (bool p : s.dentition->present) present.push_back(p ? 1 : 0);
    doc["dentition"] = {{"present", present}, {"implant_count", s.dentition->implant_count}};
  }
  if (s.truth) {
    json gt;
    json objs = json::array();
    for (const auto& o : s.truth->objects) {
      objs.push_back({{"class", o.cls}, {"box", box_json(o.box)}, {"mask", mask_json(o.mask, opt.encoding)}});
    }
    gt["objects"] = std::move(objs);
    json findings = json::array();
    for (const auto& row : s.truth->findings) {
      json r = json::array();
      for (bool f : row) r.push_back(f ? 1 : 0);
      findings.push_back(std::move(r));
    }
    gt["findings"] = std::move(findings);
    gt["detection_source"] = s.truth->detection_source;
    if (s.truth->segmentation) gt["segmentation"] = {{"path", seg_stem + ".gt.seg"}};
    doc["ground_truth"] = std::move(gt);
  }
  return doc;
}

class Reader {
 public:
  Reader(std::string file, fs::path base) : file_(std::move(file)), base_(std::move(base)) {}

  [[noreturn]] void fail(const std::string& where, const std::string& what) const {
    throw StudyFormatError(file_, where, what);
  }

  const json& field(const json& obj, const std::string& key, const std::string& where) const {
    if (!obj.is_object()) fail(where, "expected an object");
    auto it = obj.find(key);
    if (it == obj.end()) fail(where + "/" + key, "missing required field");
    return *it;
  }

  long long integer(const json& v, const std::string& where) const {
    if (!v.is_number_integer()) fail(where, "expected an integer");
    return v.get<long long>();
  }

  double number(const json& v, const std::string& where) const {
    if (!v.is_number()) fail(where, "expected a number");
    return v.get<double>();
  }

  const json& array(const json& v, const std::string& where, std::size_t expected = 0) const {
    if (!v.is_array()) fail(where, "expected an array");
    if (expected && v.size() != expected) {
      fail(where, "expected " + std::to_string(expected) + " elements, found " + std::to_string(v.size()));
    }
    return v;
  }

  Box box(const json& v, const std::string& where) const {
    array(v, where, 4);
    Box b;
    b.x0 = static_cast<int>(integer(v[0], where + "/0"));
    b.y0 = static_cast<int>(integer(v[1], where + "/1"));
    b.x1 = static_cast<int>(integer(v[2], where + "/2"));
    b.y1 = static_cast<int>(integer(v[3], where + "/3"));
    return b;
  }

  BinaryMask mask(const json& v, int w, int h, const std::string& where) const {
    if (!v.is_object()) fail(where, "expected a mask object");
    try {
      if (auto it = v.find("rle"); it != v.end()) {
        array(*it, where + "/rle");
        std::vector<std::uint32_t> runs;
        runs.reserve(it->size());
        for (std::size_t i = 0; i < it->size(); ++i) {
          const long long r = integer((*it)[i], where + "/rle/" + std::to_string(i));
          if (r < 0) fail(where + "/rle/" + std::to_string(i), "negative run length");
          runs.push_back(static_cast<std::uint32_t>(r));
        }
        return BinaryMask::from_rle(w, h, runs);
      }
      if (auto it = v.find("bits"); it != v.end()) {
        if (!it->is_string()) fail(where + "/bits", "expected a string of 0/1");
        const auto& s = it->get_ref<const std::string&>();
        std::vector<std::uint8_t> bits(s.size());
        for (std::size_t i = 0; i < s.size(); ++i) {
          if (s[i] != '0' && s[i] != '1') fail(where + "/bits", "non-binary character");
          bits[i] = s[i] == '1';
        }
        return BinaryMask(w, h, std::move(bits));
      }
    } catch (const std::invalid_argument& e) {
      fail(where, e.what());
    }
    fail(where, "mask needs an \"rle\" or \"bits\" payload");
  }

  SegmentationMap segmentation(const json& v, int w, int h, const std::string& where) const {
    const json& p = field(v, "path", where);
    if (!p.is_string()) fail(where + "/path", "expected a string");
    fs::path path = p.get<std::string>();
    if (path.is_relative()) path = base_ / path;
    SegmentationMap map = read_segmentation_file(path);
    if (map.width() != w || map.height() != h) fail(where, "segmentation size differs from image size");
    return map;
  }

  Study study(const json& doc) const {
    if (!doc.is_object()) fail("", "expected a JSON object");
    const json& fmt = field(doc, "format", "");
    if (fmt != "deepopg-study") fail("/format", "unsupported format tag");
    if (integer(field(doc, "version", ""), "/version") != 1) fail("/version", "unsupported version");
    Study s;
    if (auto it = doc.find("id"); it != doc.end()) {
      if (!it->is_string()) fail("/id", "expected a string");
      s.id = it->get<std::string>();
    }
    const json& image = field(doc, "image", "");
    s.width = static_cast<int>(integer(field(image, "width", "/image"), "/image/width"));
    s.height = static_cast<int>(integer(field(image, "height", "/image"), "/image/height"));
    if (s.width <= 0) fail("/image/width", "must be positive");
    if (s.height <= 0) fail("/image/height", "must be positive");

    const json& dets = array(field(doc, "detections", ""), "/detections");
    for (std::size_t i = 0; i < dets.size(); ++i) {
      const std::string at = "/detections/" + std::to_string(i);
      const json& d = dets[i];
      Detection det;
      const json& probs = array(field(d, "probs", at), at + "/probs", kNumDetClasses);
      for (int c = 0; c < kNumDetClasses; ++c) {
        det.probs[c] = number(probs[c], at + "/probs/" + std::to_string(c));
        if (!(det.probs[c] >= 0.0 && det.probs[c] <= 1.0)) fail(at + "/probs/" + std::to_string(c), "outside [0,1]");
      }
      double total = 0.0;
      for (double p : det.probs) total += p;
      if (std::abs(total - 1.0) > 1e-6) fail(at + "/probs", "sums to " + std::to_string(total));
      det.box = box(field(d, "box", at), at + "/box");
      if (!(det.box.x0 < det.box.x1 && det.box.y0 < det.box.y1) || det.box.x0 < 0 || det.box.y0 < 0 ||
          det.box.x1 > s.width || det.box.y1 > s.height) {
        fail(at + "/box", "box is empty or leaves the image");
      }
      if (auto it = d.find("mask"); it != d.end()) {
        det.masks.push_back(mask(*it, s.width, s.height, at + "/mask"));
      } else if (auto it2 = d.find("masks"); it2 != d.end()) {
        array(*it2, at + "/masks", kNumDetClasses);
        for (int c = 0; c < kNumDetClasses; ++c) {
          det.masks.push_back(mask((*it2)[c], s.width, s.height, at + "/masks/" + std::to_string(c)));
        }
      } else {
        fail(at, "detection needs \"mask\" or \"masks\"");
      }
      try {
        det.validate(s.width, s.height);
      } catch (const std::invalid_argument& e) {
        fail(at, e.what());
      }
      s.detections.push_back(std::move(det));
    }

    if (auto it = doc.find("segmentation"); it != doc.end()) {
      s.segmentation = segmentation(*it, s.width, s.height, "/segmentation");
    }
    if (auto it = doc.find("dentition"); it != doc.end()) {
      DentitionLabel label;
      const json& present = array(field(*it, "present", "/dentition"), "/dentition/present", kNumTeeth);
      for (int t = 0; t < kNumTeeth; ++t) {
        const std::string at = "/dentition/present/" + std::to_string(t);
        const long long v = present[t].is_boolean() ? present[t].get<bool>() : integer(present[t], at);
        if (v != 0 && v != 1) fail(at, "expected 0 or 1");
        label.present[t] = v == 1;
      }
      label.implant_count =
          static_cast<int>(integer(field(*it, "implant_count", "/dentition"), "/dentition/implant_count"));
      if (label.implant_count < 0) fail("/dentition/implant_count", "must be non-negative");
      s.dentition = label;
    }
    if (auto it = doc.find("ground_truth"); it != doc.end()) {
      GroundTruth gt;
      const json& objs = array(field(*it, "objects", "/ground_truth"), "/ground_truth/objects");
      for (std::size_t i = 0; i < objs.size(); ++i) {
        const std::string at = "/ground_truth/objects/" + std::to_string(i);
        GroundTruthObject o;
        o.cls = static_cast<int>(integer(field(objs[i], "class", at), at + "/class"));
        if (o.cls <= kBackgroundClass || o.cls >= kNumDetClasses) fail(at + "/class", "not an object class");
        o.box = box(field(objs[i], "box", at), at + "/box");
        o.mask = mask(field(objs[i], "mask", at), s.width, s.height, at + "/mask");
        gt.objects.push_back(std::move(o));
      }
      const json& findings = array(field(*it, "findings", "/ground_truth"), "/ground_truth/findings", kNumTeeth);
      for (int t = 0; t < kNumTeeth; ++t) {
        const std::string at = "/ground_truth/findings/" + std::to_string(t);
        array(findings[t], at, kNumFindings);
        for (int f = 0; f < kNumFindings; ++f) {
          const long long v = integer(findings[t][f], at + "/" + std::to_string(f));
          if (v != 0 && v != 1) fail(at + "/" + std::to_string(f), "expected 0 or 1");
          gt.findings[t][f] = v == 1;
        }
      }
      if (auto src = it->find("detection_source"); src != it->end()) {
        array(*src, "/ground_truth/detection_source", s.detections.size());
        for (std::size_t i = 0; i < src->size(); ++i) {
          const std::string at = "/ground_truth/detection_source/" + std::to_string(i);
          const long long v = integer((*src)[i], at);
          if (v < -1 || v >= static_cast<long long>(gt.objects.size())) fail(at, "no such ground-truth object");
          gt.detection_source.push_back(static_cast<int>(v));
        }
      }
      if (auto seg = it->find("segmentation"); seg != it->end()) {
        gt.segmentation = segmentation(*seg, s.width, s.height, "/ground_truth/segmentation");
      }
      s.truth = std::move(gt);
    }
    return s;
  }

 private:
  std::string file_;
  fs::path base_;
};

}  // namespace

std::string study_to_json(const Study& study, const StudyWriteOptions& options) {
  return to_json(study, options, study.id).dump();
}

Study study_from_json(const std::string& text, const fs::path& base_dir, const std::string& file_label) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw StudyFormatError(file_label, "", std::string("invalid JSON: ") + e.what());
  }
  return Reader(file_label, base_dir).study(doc);
}

void save_study(const Study& study, const fs::path& json_path, const StudyWriteOptions& options) {
  const std::string stem = json_path.stem().string();
  const fs::path dir = json_path.parent_path();
  if (study.segmentation) write_segmentation_file(dir / (stem + ".seg"), *study.segmentation);
  if (study.truth && study.truth->segmentation) {
    write_segmentation_file(dir / (stem + ".gt.seg"), *study.truth->segmentation);
  }
  std::ofstream out(json_path);
  if (!out) throw std::runtime_error("cannot open " + json_path.string() + " for writing");
  out << to_json(study, options, stem).dump() << '\n';
  if (!out) throw std::runtime_error("failed writing " + json_path.string());
}

Study load_study(const fs::path& json_path) {
  std::ifstream in(json_path);
  if (!in) throw StudyFormatError(json_path.string(), "", "cannot open study file");
  std::stringstream buf;
  buf << in.rdbuf();
  return study_from_json(buf.str(), json_path.parent_path(), json_path.string());
}

}  // namespace deepopg
