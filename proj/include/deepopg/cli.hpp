#pragma once

#include <chrono>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "json.hpp"

namespace deepopg::cli {

/// Process exit status of `run`.
enum ExitCode : int {
  kOk = 0,
  kUsage = 2,          // unknown subcommand or flag, bad flag value
  kMissingInput = 3,   // input path does not exist or holds no studies
  kMalformedInput = 4, // study, assignment or config file fails validation
  kRuntimeError = 5,   // the computation itself failed
};

inline constexpr const char* kToolVersion = "0.1.0";

/// Record of one command run, written as manifest.json into its output
/// directory after every other output.
struct RunManifest {
  std::string command;
  /// Resolved option values keyed by long flag name.
  nlohmann::ordered_json config = nlohmann::ordered_json::object();
  std::uint64_t seed = 0;
  std::vector<std::string> inputs;
  std::vector<std::string> outputs;
  std::string version = kToolVersion;
  double duration_seconds = 0.0;

  nlohmann::ordered_json to_json() const;
  static RunManifest from_json(const nlohmann::json& doc);
};

void write_manifest(const std::filesystem::path& dir, const RunManifest& manifest);
RunManifest read_manifest(const std::filesystem::path& path);

/// Turns a config document into flag arguments. A manifest is accepted too,
/// in which case its "config" object is used. Keys already present in
/// `explicit_args` are skipped so the command line wins.
std::vector<std::string> config_arguments(const nlohmann::json& doc, const std::vector<std::string>& explicit_args);

/// Runs one subcommand. `args` excludes the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// printf("%.6g") of a value; every number the tool prints goes through it.
std::string format_number(double value);

}  // namespace deepopg::cli
