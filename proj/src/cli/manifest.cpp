#include <fstream>
#include <set>

#include "deepopg/cli.hpp"

namespace deepopg::cli {

nlohmann::ordered_json RunManifest::to_json() const {
  nlohmann::ordered_json doc;
  doc["format"] = "deepopg-manifest";
  doc["version"] = 1;
  doc["command"] = command;
  doc["config"] = config;
  doc["seed"] = seed;
  doc["inputs"] = inputs;
  doc["outputs"] = outputs;
  doc["tool_version"] = version;
  doc["duration_seconds"] = duration_seconds;
  return doc;
}

RunManifest RunManifest::from_json(const nlohmann::json& doc) {
  if (!doc.is_object() || doc.value("format", "") != "deepopg-manifest") {
    throw std::invalid_argument("not a deepopg-manifest document");
  }
  RunManifest m;
  m.command = doc.at("command").get<std::string>();
  m.config = nlohmann::ordered_json(doc.at("config"));
  m.seed = doc.at("seed").get<std::uint64_t>();
  m.inputs = doc.at("inputs").get<std::vector<std::string>>();
  m.outputs = doc.at("outputs").get<std::vector<std::string>>();
  m.version = doc.at("tool_version").get<std::string>();
  m.duration_seconds = doc.at("duration_seconds").get<double>();
  return m;
}

void write_manifest(const std::filesystem::path& dir, const RunManifest& manifest) {
  const auto path = dir / "manifest.json";
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << manifest.to_json().dump(2) << '\n';
}

RunManifest read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  return RunManifest::from_json(nlohmann::json::parse(in));
}

namespace {

std::string scalar_text(const nlohmann::json& v, const std::string& key) {
  if (v.is_string()) return v.get<std::string>();
  if (v.is_number_integer()) return std::to_string(v.get<long long>());
  if (v.is_number_unsigned()) return std::to_string(v.get<unsigned long long>());
  if (v.is_number_float()) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v.get<double>());
    return buf;
  }
  throw std::invalid_argument("config key '" + key + "' has an unsupported value type");
}

}  // namespace

std::vector<std::string> config_arguments(const nlohmann::json& doc, const std::vector<std::string>& explicit_args) {
  const nlohmann::json* cfg = &doc;
  if (doc.is_object() && doc.contains("format") && doc["format"] == "deepopg-manifest") cfg = &doc.at("config");
  if (!cfg->is_object()) throw std::invalid_argument("config must be a JSON object");

  std::set<std::string> given;
  for (const auto& a : explicit_args) {
    if (a.rfind("--", 0) == 0) given.insert(a.substr(2, a.find('=') == std::string::npos ? std::string::npos : a.find('=') - 2));
  }

  std::vector<std::string> out;
  for (const auto& [key, value] : cfg->items()) {
    if (key == "config" || given.count(key)) continue;
    if (value.is_null()) continue;
    if (value.is_boolean()) {
      if (value.get<bool>()) out.push_back("--" + key);
      continue;
    }
    if (value.is_array()) {
      for (const auto& item : value) {
        out.push_back("--" + key);
        out.push_back(scalar_text(item, key));
      }
      continue;
    }
    out.push_back("--" + key);
    out.push_back(scalar_text(value, key));
  }
  return out;
}

}  // namespace deepopg::cli
