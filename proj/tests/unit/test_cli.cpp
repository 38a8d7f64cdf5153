#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "deepopg/cli.hpp"
#include "deepopg/coherence.hpp"
#include "deepopg/study.hpp"

using namespace deepopg;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const char* env = std::getenv("DEEPOPG_TEST_TMP");
  const fs::path root = env ? fs::path(env) : fs::temp_directory_path() / "deepopg_cli_test";
  const fs::path dir = root / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

struct Run {
  int code;
  std::string out;
  std::string err;
};

Run run(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

// Value column of the detection metrics CSV for one metric and threshold.
double metric(const fs::path& csv, const std::string& name, const std::string& threshold) {
  std::istringstream in(slurp(csv));
  std::string line;
  while (std::getline(in, line)) {
    std::istringstream row(line);
    std::string m, t, v;
    std::getline(row, m, ',');
    std::getline(row, t, ',');
    std::getline(row, v, ',');
    if (m == name && t == threshold) return std::stod(v);
  }
  FAIL("metric " << name << " at " << threshold << " not found");
  return -1.0;
}

}  // namespace

TEST_CASE("number formatting") {
  CHECK(cli::format_number(0.5) == "0.5");
  CHECK(cli::format_number(1.0 / 3.0) == "0.333333");
  CHECK(cli::format_number(1234567.0) == "1.23457e+06");
}

TEST_CASE("clean batch evaluates perfectly") {
  const fs::path dir = scratch("clean");
  REQUIRE(run({"generate", "--out", (dir / "s").string(), "--count", "50", "--seed", "11"}).code == cli::kOk);
  REQUIRE(run({"eval-detection", (dir / "s").string(), "--out", (dir / "e").string(), "--bootstrap", "20"}).code ==
          cli::kOk);
  CHECK(metric(dir / "e" / "detection_metrics.csv", "ap", "0.5") == 1.0);
  CHECK(metric(dir / "e" / "detection_metrics.csv", "ap", "0") == 1.0);

  REQUIRE(run({"eval-findings", (dir / "s").string(), "--out", (dir / "f").string()}).code == cli::kOk);
  const std::string auc = slurp(dir / "f" / "finding_auc.csv");
  CHECK(auc.find("macro,1,") != std::string::npos);
  CHECK(fs::exists(dir / "f" / "roc_points.csv"));
}

TEST_CASE("decode output scores the same through the reward command") {
  const fs::path dir = scratch("decode");
  REQUIRE(run({"generate", "--out", (dir / "s").string(), "--count", "3", "--seed", "4", "--duplicate-rate", "0.5",
               "--temperature", "0.3"})
              .code == cli::kOk);
  REQUIRE(run({"decode", (dir / "s").string(), "--out", (dir / "d").string()}).code == cli::kOk);
  for (int i = 0; i < 3; ++i) {
    const std::string stem = "study_000" + std::to_string(i);
    const fs::path doc_path = dir / "d" / (stem + ".decode.json");
    const auto doc = nlohmann::json::parse(slurp(doc_path));
    CHECK(doc["format"] == "deepopg-decode");
    const Run r = run({"reward", "--study", (dir / "s" / (stem + ".json")).string(), "--assignment", doc_path.string()});
    REQUIRE(r.code == cli::kOk);
    CHECK(std::stod(r.out) == doc["reward"].get<double>());

    const Study s = load_study(dir / "s" / (stem + ".json"));
    const StudyDecode d = decode_detections(s.detections, DecoderConfig{});
    CHECK(r.out == cli::format_number(d.result.reward) + "\n");
    CHECK(doc["assignment"].size() == d.result.assignment.assigned_count());
  }
}

TEST_CASE("manifest replay and idempotence") {
  const fs::path dir = scratch("replay");
  REQUIRE(run({"generate", "--out", (dir / "a").string(), "--count", "4", "--seed", "9", "--temperature", "0.2"}).code ==
          cli::kOk);
  REQUIRE(run({"generate", "--config", (dir / "a" / "manifest.json").string(), "--out", (dir / "b").string()}).code ==
          cli::kOk);
  for (int i = 0; i < 4; ++i) {
    const std::string name = "study_000" + std::to_string(i) + ".json";
    CHECK(slurp(dir / "a" / name) == slurp(dir / "b" / name));
  }
  const cli::RunManifest m = cli::read_manifest(dir / "b" / "manifest.json");
  CHECK(m.command == "generate");
  CHECK(m.seed == 9);
  CHECK(m.config["out"] == (dir / "b").string());
  CHECK(m.outputs.size() == 4);

  REQUIRE(run({"decode", (dir / "a").string(), "--out", (dir / "d1").string(), "--quadratic-weight", "0.5"}).code ==
          cli::kOk);
  REQUIRE(run({"decode", "--config", (dir / "d1" / "manifest.json").string(), "--out", (dir / "d2").string()}).code ==
          cli::kOk);
  CHECK(slurp(dir / "d1" / "study_0002.decode.json") == slurp(dir / "d2" / "study_0002.decode.json"));
  CHECK(cli::read_manifest(dir / "d2" / "manifest.json").config["quadratic-weight"] == "0.5");
}

TEST_CASE("training from the command line") {
  const fs::path dir = scratch("train");
  REQUIRE(run({"generate", "--out", (dir / "s").string(), "--count", "3", "--seed", "2", "--temperature", "0.3"}).code ==
          cli::kOk);
  for (const char* out : {"t1", "t2"}) {
    const Run r = run({"train-toy", (dir / "s").string(), "--out", (dir / out).string(), "--steps", "5", "--samples",
                       "8", "--batch-size", "2", "--seed", "3", "--heldout", (dir / "s").string()});
    REQUIRE(r.code == cli::kOk);
  }
  CHECK(slurp(dir / "t1" / "trajectory.csv") == slurp(dir / "t2" / "trajectory.csv"));
  CHECK(slurp(dir / "t1" / "policy.txt") == slurp(dir / "t2" / "policy.txt"));
  CHECK(slurp(dir / "t1" / "trajectory.csv").rfind("step,mean_reward,accuracy\n", 0) == 0);
  CHECK(fs::exists(dir / "t1" / "heldout_accuracy.csv"));
}

TEST_CASE("summaries") {
  const fs::path dir = scratch("summary");
  REQUIRE(run({"generate", "--out", (dir / "s").string(), "--count", "1", "--seed", "5"}).code == cli::kOk);
  REQUIRE(run({"summarize", (dir / "s").string(), "--out", (dir / "o").string()}).code == cli::kOk);
  const auto doc = nlohmann::json::parse(slurp(dir / "o" / "study_0000.summary.json"));
  CHECK(doc["teeth"].size() == 32);
  CHECK(doc["teeth"][0]["fdi"] == 18);
  CHECK(doc["teeth"][0]["values"].size() == 6);
  CHECK(run({"summarize", (dir / "s").string(), "--out", (dir / "o2").string(), "--threshold-profile", "custom",
             "--thresholds", "0.5,0.5,0.5,0.5,0.5,0.5"})
            .code == cli::kOk);
}

TEST_CASE("exit codes") {
  const fs::path dir = scratch("codes");
  CHECK(run({}).code == cli::kUsage);
  CHECK(run({"frobnicate"}).code == cli::kUsage);
  CHECK(run({"decode", (dir / "nothing").string(), "--out", (dir / "o").string(), "--bogus"}).code == cli::kUsage);
  CHECK(run({"decode", (dir / "nothing").string(), "--out", (dir / "o").string()}).code == cli::kMissingInput);
  CHECK(run({"generate", "--out", (dir / "g").string(), "--width", "10"}).code == cli::kUsage);

  std::ofstream(dir / "broken.json") << "{\"format\": \"deepopg-study\"";
  const Run bad = run({"decode", (dir / "broken.json").string(), "--out", (dir / "o").string()});
  CHECK(bad.code == cli::kMalformedInput);
  CHECK(bad.err.find("broken.json") != std::string::npos);

  REQUIRE(run({"generate", "--out", (dir / "s").string(), "--count", "1"}).code == cli::kOk);
  std::ofstream(dir / "assign.json") << R"({"assignment": [{"tooth": 99, "object": 0}]})";
  const Run r = run({"reward", "--study", (dir / "s" / "study_0000.json").string(), "--assignment",
                     (dir / "assign.json").string()});
  CHECK(r.code == cli::kMalformedInput);
  CHECK(r.err.find("/assignment/0/tooth") != std::string::npos);
  CHECK(run({"help"}).code != cli::kOk);
  CHECK(run({"--help"}).code == cli::kOk);
}

TEST_CASE("config documents") {
  const nlohmann::json doc = {{"count", 3}, {"raw-masks", true}, {"iou-thresholds", {0.0, 0.5}}};
  const auto args = cli::config_arguments(doc, {"--count", "7"});
  CHECK(std::find(args.begin(), args.end(), "--count") == args.end());
  CHECK(std::find(args.begin(), args.end(), "--raw-masks") != args.end());
  CHECK(std::count(args.begin(), args.end(), "--iou-thresholds") == 2);
}
