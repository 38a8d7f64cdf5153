#include "deepopg/cli.hpp"

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <exception>
#include <fstream>
#include <iostream>
#include <mutex>
#include <sstream>
#include <thread>

#include "CLI11.hpp"
#include "deepopg/pipeline.hpp"
#include "deepopg/synthgen.hpp"

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace deepopg::cli {

std::string format_number(double value) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", value);
  return buf;
}

namespace {

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct MissingInputError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct MalformedInputError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Number as it appears in JSON outputs: rounded to six significant digits.
double json_number(double v) { return std::stod(format_number(v)); }

// Shared options -------------------------------------------------------------

struct DecoderOptions {
  double quadratic_weight = 1.0;
  int top_k = 5;
  std::string pair_convention = "ordered";
  int time_budget_ms = 0;

  void attach(CLI::App* app) {
    app->add_option("--quadratic-weight", quadratic_weight, "Weight of the overlap penalty")
        ->check(CLI::NonNegativeNumber);
    app->add_option("--top-k", top_k, "Candidate classes per object")->check(CLI::PositiveNumber);
    app->add_option("--pair-convention", pair_convention, "ordered or unordered")
        ->check(CLI::IsMember({"ordered", "unordered"}));
    app->add_option("--time-budget-ms", time_budget_ms, "Search budget per study; 0 = unlimited")
        ->check(CLI::NonNegativeNumber);
  }

  DecoderConfig config() const {
    DecoderConfig c;
    c.quadratic_weight = quadratic_weight;
    c.candidate_classes_per_object = top_k;
    c.pair_convention = pair_convention == "unordered" ? PairConvention::kUnordered : PairConvention::kOrdered;
    if (time_budget_ms > 0) c.time_budget = std::chrono::milliseconds(time_budget_ms);
    return c;
  }
};

struct ProfileOptions {
  std::string name = "table1";
  std::vector<double> thresholds;

  void attach(CLI::App* app) {
    app->add_option("--threshold-profile", name, "table1 or custom")->check(CLI::IsMember({"table1", "custom"}));
    app->add_option("--thresholds", thresholds, "Six comma-separated thresholds for the custom profile")
        ->delimiter(',');
  }

  ThresholdProfile profile() const {
    if (name == "table1") {
      if (!thresholds.empty()) throw UsageError("--thresholds is only valid with --threshold-profile custom");
      return ThresholdProfile::table1();
    }
    if (thresholds.size() != kNumFindings) {
      throw UsageError("--threshold-profile custom needs --thresholds with " + std::to_string(kNumFindings) +
                       " values");
    }
    ThresholdProfile p;
    std::copy(thresholds.begin(), thresholds.end(), p.thresholds.begin());
    return p;
  }
};

// Inputs ---------------------------------------------------------------------

bool is_study_file(const fs::path& p) {
  const std::string name = p.filename().string();
  auto ends_with = [&](const std::string& suffix) {
    return name.size() >= suffix.size() && name.compare(name.size() - suffix.size(), suffix.size(), suffix) == 0;
  };
  return ends_with(".json") && name != "manifest.json" && !ends_with(".decode.json") && !ends_with(".summary.json");
}

std::vector<fs::path> collect_studies(const std::vector<std::string>& inputs) {
  std::vector<fs::path> files;
  for (const auto& in : inputs) {
    const fs::path p(in);
    if (!fs::exists(p)) throw MissingInputError("input not found: " + in);
    if (fs::is_directory(p)) {
      std::vector<fs::path> found;
      for (const auto& entry : fs::directory_iterator(p)) {
        if (entry.is_regular_file() && is_study_file(entry.path())) found.push_back(entry.path());
      }
      if (found.empty()) throw MissingInputError("no study files in " + in);
      std::sort(found.begin(), found.end());
      files.insert(files.end(), found.begin(), found.end());
    } else {
      files.push_back(p);
    }
  }
  if (files.empty()) throw MissingInputError("no input studies given");
  return files;
}

/// Runs fn(i) for i in [0, n) on up to `workers` threads. If any call throws,
/// the exception of the lowest failing index is rethrown after all threads
/// finish, so the reported error does not depend on scheduling.
template <typename Fn>
void parallel_for(std::size_t n, int workers, Fn fn) {
  std::vector<std::exception_ptr> errors(n);
  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        fn(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const std::size_t threads = std::min<std::size_t>(static_cast<std::size_t>(std::max(1, workers)), n);
  if (threads <= 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(work);
    for (auto& th : pool) th.join();
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

std::vector<Study> load_studies(const std::vector<fs::path>& files, int workers) {
  std::vector<Study> studies(files.size());
  parallel_for(files.size(), workers, [&](std::size_t i) { studies[i] = load_study(files[i]); });
  return studies;
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw std::runtime_error("cannot create output directory " + dir.string());
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

json read_json_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw MissingInputError("input not found: " + path.string());
  try {
    return json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw MalformedInputError(path.string() + ": <root>: " + e.what());
  }
}

std::vector<std::string> path_strings(const std::vector<fs::path>& paths) {
  std::vector<std::string> out;
  for (const auto& p : paths) out.push_back(p.string());
  return out;
}

// Commands -------------------------------------------------------------------

struct Context {
  std::ostream& out;
  RunManifest manifest;
  std::optional<fs::path> manifest_dir;
};

struct GenerateOptions {
  std::string out_dir;
  int count = 10;
  std::uint64_t seed = 0;
  GenConfig gen;
  bool raw_masks = false;
  int workers = 1;
};

void cmd_generate(const GenerateOptions& o, Context& ctx) {
  GenConfig cfg = o.gen;
  cfg.seed = o.seed;
  try {
    cfg.validate();
  } catch (const ConstraintError& e) {
    throw UsageError(e.what());
  }
  const fs::path dir(o.out_dir);
  ensure_dir(dir);
  StudyWriteOptions write;
  write.encoding = o.raw_masks ? MaskEncoding::kRaw : MaskEncoding::kRle;
  std::vector<fs::path> written(static_cast<std::size_t>(o.count));
  parallel_for(written.size(), o.workers, [&](std::size_t i) {
    const Study s = generate_indexed_study(cfg, i);
    written[i] = dir / (s.id + ".json");
    save_study(s, written[i], write);
  });
  ctx.manifest.outputs = path_strings(written);
  ctx.manifest_dir = dir;
  ctx.out << "wrote " << o.count << " studies to " << dir.string() << '\n';
}

json decode_document(const Study& s, const StudyDecode& d) {
  json doc;
  doc["format"] = "deepopg-decode";
  doc["version"] = 1;
  doc["study"] = s.id;
  json assignment = json::array();
  for (int t = 0; t < kNumTeeth; ++t) {
    if (const auto det = d.detection_for_tooth(t)) assignment.push_back({{"tooth", fdi_number(t)}, {"object", *det}});
  }
  doc["assignment"] = assignment;
  doc["reward"] = json_number(d.result.reward);
  json suppressed = json::array();
  for (std::size_t r : d.result.suppressed) suppressed.push_back(d.problem.objects[r]);
  doc["suppressed"] = suppressed;
  doc["implants"] = d.implants;
  doc["background"] = d.background;
  doc["optimal"] = d.result.optimality == Optimality::kProven;
  doc["nodes_explored"] = d.result.nodes_explored;
  return doc;
}

struct BatchOptions {
  std::vector<std::string> inputs;
  std::string out_dir;
  int workers = 1;
};

void cmd_decode(const BatchOptions& o, const DecoderOptions& dopt, Context& ctx) {
  const DecoderConfig cfg = dopt.config();
  const auto files = collect_studies(o.inputs);
  const fs::path dir(o.out_dir);
  ensure_dir(dir);
  std::vector<fs::path> written(files.size());
  std::vector<int> proven(files.size());
  parallel_for(files.size(), o.workers, [&](std::size_t i) {
    const Study s = load_study(files[i]);
    const StudyDecode d = decode_detections(s.detections, cfg);
    written[i] = dir / (files[i].stem().string() + ".decode.json");
    write_text(written[i], decode_document(s, d).dump(2) + "\n");
    proven[i] = d.result.optimality == Optimality::kProven;
  });
  ctx.manifest.inputs = path_strings(files);
  ctx.manifest.outputs = path_strings(written);
  ctx.manifest_dir = dir;
  const auto budget_hits = std::count(proven.begin(), proven.end(), 0);
  ctx.out << "decoded " << files.size() << " studies";
  if (budget_hits) ctx.out << " (" << budget_hits << " stopped at the time budget)";
  ctx.out << '\n';
}

struct RewardOptions {
  std::string study;
  std::string assignment;
};

void cmd_reward(const RewardOptions& o, const DecoderOptions& dopt, Context& ctx) {
  const DecoderConfig cfg = dopt.config();
  if (!fs::exists(o.study)) throw MissingInputError("input not found: " + o.study);
  const Study s = load_study(o.study);
  const json doc = read_json_file(o.assignment);
  const ToothProblem problem = tooth_problem(s.detections);

  auto bad = [&](const std::string& field, const std::string& what) {
    return MalformedInputError(o.assignment + ": " + field + ": " + what);
  };
  if (!doc.is_object() || !doc.contains("assignment") || !doc["assignment"].is_array()) {
    throw bad("/assignment", "expected an array of {tooth, object} pairs");
  }
  std::vector<int> choices(problem.objects.size(), Assignment::kNone);
  const auto& pairs = doc["assignment"];
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const std::string where = "/assignment/" + std::to_string(i);
    const auto& item = pairs[i];
    if (!item.is_object() || !item.contains("tooth") || !item["tooth"].is_number_integer()) {
      throw bad(where + "/tooth", "expected an FDI tooth number");
    }
    if (!item.contains("object") || !item["object"].is_number_unsigned()) {
      throw bad(where + "/object", "expected a detection index");
    }
    int tooth;
    try {
      tooth = tooth_from_fdi(item["tooth"].get<int>());
    } catch (const ConstraintError& e) {
      throw bad(where + "/tooth", e.what());
    }
    const auto det = item["object"].get<std::size_t>();
    const auto it = std::find(problem.objects.begin(), problem.objects.end(), det);
    if (it == problem.objects.end()) {
      throw bad(where + "/object", "detection " + std::to_string(det) + " is not a tooth detection of the study");
    }
    const auto row = static_cast<std::size_t>(it - problem.objects.begin());
    if (choices[row] != Assignment::kNone) throw bad(where + "/object", "detection assigned twice");
    choices[row] = tooth;
  }
  Assignment a;
  try {
    a = Assignment::from_choices(kNumTeeth, choices);
  } catch (const ConstraintError& e) {
    throw bad("/assignment", e.what());
  }
  ctx.out << format_number(dcr_reward(problem.probs, a, problem.overlap, cfg)) << '\n';
}

json summary_document(const Study& s, const FindingSummary& sum, const ProfileOptions& popt,
                      const ThresholdProfile& profile) {
  const FindingMatrix bin = binarize(sum, profile);
  json doc;
  doc["format"] = "deepopg-summary";
  doc["version"] = 1;
  doc["study"] = s.id;
  json prof;
  prof["name"] = popt.name;
  for (int f = 0; f < kNumFindings; ++f) prof["thresholds"][finding_name(static_cast<Finding>(f))] = profile.thresholds[f];
  doc["profile"] = prof;
  json teeth = json::array();
  for (int t = 0; t < kNumTeeth; ++t) {
    json row;
    row["fdi"] = fdi_number(t);
    row["detection"] = sum.source[t] ? json(*sum.source[t]) : json(nullptr);
    for (int f = 0; f < kNumFindings; ++f) {
      const char* name = finding_name(static_cast<Finding>(f));
      row["values"][name] = json_number(sum.values[t][f]);
      row["findings"][name] = bool(bin[t][f]);
    }
    teeth.push_back(row);
  }
  doc["teeth"] = teeth;
  json implants = json::array();
  for (const auto& imp : sum.implants) {
    implants.push_back({{"detection", imp.detection}, {"fdi", fdi_number(imp.tooth)}, {"value", json_number(imp.value)}});
  }
  doc["implants"] = implants;
  return doc;
}

void cmd_summarize(const BatchOptions& o, const DecoderOptions& dopt, const ProfileOptions& popt, Context& ctx) {
  const DecoderConfig cfg = dopt.config();
  const ThresholdProfile profile = popt.profile();
  const auto files = collect_studies(o.inputs);
  const fs::path dir(o.out_dir);
  ensure_dir(dir);
  std::vector<fs::path> written(files.size());
  parallel_for(files.size(), o.workers, [&](std::size_t i) {
    const Study s = load_study(files[i]);
    const FindingSummary sum = summarize(s, cfg);
    written[i] = dir / (files[i].stem().string() + ".summary.json");
    write_text(written[i], summary_document(s, sum, popt, profile).dump(2) + "\n");
  });
  ctx.manifest.inputs = path_strings(files);
  ctx.manifest.outputs = path_strings(written);
  ctx.manifest_dir = dir;
  ctx.out << "summarized " << files.size() << " studies\n";
}

struct EvalDetectionOptions {
  BatchOptions batch;
  std::string method = "dcr";
  std::vector<double> iou_thresholds{0.0, 0.5, 0.7};
  int bootstrap = 200;
  std::uint64_t seed = 0;
};

void cmd_eval_detection(const EvalDetectionOptions& o, const DecoderOptions& dopt, Context& ctx) {
  const DecoderConfig cfg = dopt.config();
  for (double t : o.iou_thresholds) {
    if (!(t >= 0.0 && t <= 1.0)) throw UsageError("IoU thresholds must lie in [0,1]");
  }
  const auto files = collect_studies(o.batch.inputs);
  const fs::path dir(o.batch.out_dir);
  ensure_dir(dir);
  const DecodeMethod method = o.method == "argmax-nms" ? DecodeMethod::kArgmaxNms : DecodeMethod::kCoherence;
  std::vector<std::vector<EvalObject>> pred(files.size()), truth(files.size());
  parallel_for(files.size(), o.batch.workers, [&](std::size_t i) {
    const Study s = load_study(files[i]);
    if (!s.truth) throw MalformedInputError(files[i].string() + ": /ground_truth: required for evaluation");
    truth[i] = truth_objects(s);
    pred[i] = predict_objects(s, method, cfg);
  });
  const DetectionReport r = evaluate_detection(pred, truth, o.iou_thresholds, o.bootstrap, o.seed);

  std::ostringstream csv, text;
  csv << "metric,iou_threshold,value,se\n";
  text << "method " << o.method << ", " << files.size() << " studies\n";
  for (std::size_t i = 0; i < r.ap.size(); ++i) {
    csv << "ap," << format_number(r.iou_thresholds[i]) << ',' << format_number(r.ap[i]) << ','
        << format_number(r.ap_se[i]) << '\n';
    text << "AP@" << format_number(r.iou_thresholds[i]) << "  " << format_number(r.ap[i]) << " (se "
         << format_number(r.ap_se[i]) << ")\n";
  }
  const std::string t0 = format_number(r.iou_thresholds[0]);
  auto row = [&](const char* name, const MeanSe& v) {
    csv << name << ',' << t0 << ',' << format_number(v.mean) << ',' << format_number(v.se) << '\n';
    text << name << "@" << t0 << "  " << format_number(v.mean) << " (se " << format_number(v.se) << ")\n";
  };
  row("da", r.da);
  row("fa", r.fa);
  row("image_iou", r.image_iou);
  csv << "da_pooled," << t0 << ',' << format_number(r.pooled.da) << ",\n";
  csv << "fa_pooled," << t0 << ',' << format_number(r.pooled.fa) << ",\n";

  const fs::path csv_path = dir / "detection_metrics.csv";
  const fs::path txt_path = dir / "detection_metrics.txt";
  write_text(csv_path, csv.str());
  write_text(txt_path, text.str());
  ctx.manifest.inputs = path_strings(files);
  ctx.manifest.outputs = {csv_path.string(), txt_path.string()};
  ctx.manifest_dir = dir;
  ctx.out << text.str();
}

void cmd_eval_findings(const BatchOptions& o, const DecoderOptions& dopt, const ProfileOptions& popt, Context& ctx) {
  const DecoderConfig cfg = dopt.config();
  const ThresholdProfile profile = popt.profile();
  const auto files = collect_studies(o.inputs);
  const fs::path dir(o.out_dir);
  ensure_dir(dir);
  std::vector<FindingSummary> sums(files.size());
  std::vector<FindingMatrix> truth(files.size());
  parallel_for(files.size(), o.workers, [&](std::size_t i) {
    const Study s = load_study(files[i]);
    if (!s.truth) throw MalformedInputError(files[i].string() + ": /ground_truth: required for evaluation");
    sums[i] = summarize(s, cfg);
    truth[i] = s.truth->findings;
  });
  const auto curves = evaluate_findings(sums, truth);

  std::ostringstream roc, table, text;
  roc << "finding,threshold,tpr,tnr,f1\n";
  table << "finding,auc,max_f1,max_f1_threshold,profile_threshold,profile_f1\n";
  text << "finding        AUC       max F1    F1 at profile\n";
  for (int f = 0; f < kNumFindings; ++f) {
    const char* name = finding_name(static_cast<Finding>(f));
    std::size_t tp = 0, fp = 0, fn = 0;
    for (std::size_t s = 0; s < sums.size(); ++s) {
      const FindingMatrix bin = binarize(sums[s], profile);
      for (int t = 0; t < kNumTeeth; ++t) {
        const bool p = bin[t][f], y = truth[s][t][f];
        tp += p && y;
        fp += p && !y;
        fn += !p && y;
      }
    }
    const std::string profile_f1 =
        tp + fp + fn ? format_number(2.0 * tp / static_cast<double>(2 * tp + fp + fn)) : std::string();
    const auto& c = curves[f];
    if (c) {
      for (const auto& pt : c->points) {
        roc << name << ',' << (std::isinf(pt.threshold) ? std::string("inf") : format_number(pt.threshold)) << ','
            << format_number(pt.tpr) << ',' << format_number(pt.tnr) << ',' << format_number(pt.f1) << '\n';
      }
      const auto& best = c->max_f1_point();
      table << name << ',' << format_number(c->auc) << ',' << format_number(best.f1) << ','
            << format_number(best.threshold) << ',' << format_number(profile.thresholds[f]) << ',' << profile_f1
            << '\n';
    } else {
      table << name << ",,,," << format_number(profile.thresholds[f]) << ',' << profile_f1 << '\n';
    }
    char line[96];
    std::snprintf(line, sizeof line, "%-14s %-9s %-9s %s\n", name, c ? format_number(c->auc).c_str() : "n/a",
                  c ? format_number(c->max_f1_point().f1).c_str() : "n/a",
                  profile_f1.empty() ? "n/a" : profile_f1.c_str());
    text << line;
  }
  const bool any = std::any_of(curves.begin(), curves.end(), [](const auto& c) { return c.has_value(); });
  if (any) {
    table << "macro," << format_number(macro_auc(curves)) << ",,,,\n";
    text << "macro AUC " << format_number(macro_auc(curves)) << '\n';
  }

  const fs::path roc_path = dir / "roc_points.csv";
  const fs::path auc_path = dir / "finding_auc.csv";
  write_text(roc_path, roc.str());
  write_text(auc_path, table.str());
  ctx.manifest.inputs = path_strings(files);
  ctx.manifest.outputs = {roc_path.string(), auc_path.string()};
  ctx.manifest_dir = dir;
  ctx.out << text.str();
}

struct TrainOptions {
  BatchOptions batch;
  std::vector<std::string> heldout;
  std::string init_policy;
  RLConfig rl;
};

std::vector<TrainingInstance> instances(const std::vector<Study>& studies, const std::vector<fs::path>& files) {
  std::vector<TrainingInstance> out;
  out.reserve(studies.size());
  for (std::size_t i = 0; i < studies.size(); ++i) {
    if (!studies[i].dentition) throw MalformedInputError(files[i].string() + ": /dentition: required for training");
    out.push_back(training_instance(studies[i]));
  }
  return out;
}

void cmd_train_toy(TrainOptions o, const DecoderOptions& dopt, Context& ctx) {
  o.rl.decoder = dopt.config();
  try {
    o.rl.validate();
  } catch (const ConstraintError& e) {
    throw UsageError(e.what());
  }
  const auto files = collect_studies(o.batch.inputs);
  const fs::path dir(o.batch.out_dir);
  ensure_dir(dir);
  const auto train = instances(load_studies(files, o.batch.workers), files);

  ToyPolicy init = initial_policy();
  if (!o.init_policy.empty()) {
    if (!fs::exists(o.init_policy)) throw MissingInputError("input not found: " + o.init_policy);
    try {
      init = ToyPolicy::load(o.init_policy);
    } catch (const std::exception& e) {
      throw MalformedInputError(o.init_policy + ": " + e.what());
    }
    if (init.classes() != kNumTeeth || init.features() != kPolicyFeatures) {
      throw MalformedInputError(o.init_policy + ": policy shape does not match the study features");
    }
  }
  const TrainingResult result = train_toy(init, train, o.rl);

  std::ostringstream traj;
  traj << "step,mean_reward,accuracy\n";
  for (const auto& s : result.trajectory) {
    traj << s.step << ',' << format_number(s.mean_reward) << ',' << format_number(s.accuracy) << '\n';
  }
  const fs::path traj_path = dir / "trajectory.csv";
  const fs::path policy_path = dir / "policy.txt";
  write_text(traj_path, traj.str());
  result.policy.save(policy_path);
  ctx.manifest.outputs = {traj_path.string(), policy_path.string()};
  auto inputs = path_strings(files);

  ctx.out << "trained " << o.rl.steps << " steps on " << train.size() << " studies\n";
  if (!o.heldout.empty()) {
    const auto held_files = collect_studies(o.heldout);
    const auto held = instances(load_studies(held_files, o.batch.workers), held_files);
    const double before = evaluate_policy(init, held, o.rl.decoder);
    const double after = evaluate_policy(result.policy, held, o.rl.decoder);
    const fs::path eval_path = dir / "heldout_accuracy.csv";
    write_text(eval_path, "split,initial_accuracy,final_accuracy\nheldout," + format_number(before) + ',' +
                              format_number(after) + '\n');
    ctx.manifest.outputs.push_back(eval_path.string());
    for (const auto& f : held_files) inputs.push_back(f.string());
    ctx.out << "held-out accuracy " << format_number(before) << " -> " << format_number(after) << '\n';
  }
  ctx.manifest.inputs = inputs;
  ctx.manifest_dir = dir;
}

// Config capture -------------------------------------------------------------

std::vector<std::string> split_default_list(std::string s) {
  if (!s.empty() && s.front() == '[') s = s.substr(1);
  if (!s.empty() && s.back() == ']') s.pop_back();
  std::vector<std::string> out;
  std::stringstream ss(s);
  for (std::string item; std::getline(ss, item, ',');) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

json resolved_config(const CLI::App* sub) {
  json cfg = json::object();
  for (const CLI::Option* opt : sub->get_options()) {
    if (opt->get_lnames().empty()) continue;
    const std::string key = opt->get_lnames().front();
    if (key == "help" || key == "config") continue;
    if (opt->get_type_size() == 0) {
      cfg[key] = opt->count() > 0;
      continue;
    }
    const bool list = opt->get_items_expected_max() > 1;
    std::vector<std::string> values;
    if (opt->count() > 0) {
      values = opt->results();
    } else if (!opt->get_default_str().empty()) {
      values = list ? split_default_list(opt->get_default_str()) : std::vector<std::string>{opt->get_default_str()};
    }
    if (list) {
      cfg[key] = values;
    } else if (!values.empty()) {
      cfg[key] = values.back();
    }
  }
  return cfg;
}

}  // namespace

int run(const std::vector<std::string>& raw_args, std::ostream& out, std::ostream& err) {
  const auto started = std::chrono::steady_clock::now();
  std::vector<std::string> args = raw_args;

  // --config: splice the file's values in after the subcommand name.
  for (std::size_t i = 0; i < args.size(); ++i) {
    std::string path;
    std::size_t consumed = 0;
    if (args[i] == "--config" && i + 1 < args.size()) {
      path = args[i + 1];
      consumed = 2;
    } else if (args[i].rfind("--config=", 0) == 0) {
      path = args[i].substr(9);
      consumed = 1;
    }
    if (!consumed) continue;
    if (!fs::exists(path)) {
      err << "error: config file not found: " << path << '\n';
      return kMissingInput;
    }
    std::vector<std::string> extra;
    try {
      std::ifstream in(path, std::ios::binary);
      const auto doc = nlohmann::json::parse(in);
      if (doc.is_object() && doc.value("format", "") == "deepopg-manifest" && !args.empty() &&
          doc.value("command", "") != args[0]) {
        err << "error: " << path << ": /command: manifest records '" << doc.value("command", "")
            << "', not '" << args[0] << "'\n";
        return kUsage;
      }
      std::vector<std::string> rest(args.begin(), args.end());
      rest.erase(rest.begin() + static_cast<std::ptrdiff_t>(i), rest.begin() + static_cast<std::ptrdiff_t>(i + consumed));
      extra = config_arguments(doc, rest);
      args = rest;
    } catch (const std::exception& e) {
      err << "error: " << path << ": <root>: " << e.what() << '\n';
      return kMalformedInput;
    }
    args.insert(args.begin() + (args.empty() ? 0 : 1), extra.begin(), extra.end());
    break;
  }

  CLI::App app{"Dental coherence decoding, weak supervision and evaluation on panoramic radiograph studies",
               "deepopg"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kToolVersion);
  app.option_defaults()->always_capture_default();
  std::string config_path;
  app.add_option("--config", config_path, "JSON file of flag values, or a manifest to replay")->configurable(false);

  DecoderOptions dopt;
  ProfileOptions popt;

  auto* gen = app.add_subcommand("generate", "Write synthetic studies");
  gen->option_defaults()->always_capture_default();
  GenerateOptions gopt;
  gen->add_option("--out", gopt.out_dir, "Output directory")->required();
  gen->add_option("--count", gopt.count, "Number of studies")->check(CLI::NonNegativeNumber);
  gen->add_option("--seed", gopt.seed, "Base seed");
  gen->add_option("--width", gopt.gen.width, "Image width in pixels");
  gen->add_option("--height", gopt.gen.height, "Image height in pixels");
  gen->add_option("--missing-prob", gopt.gen.missing_prob, "Chance a tooth is missing");
  gen->add_option("--implant-prob", gopt.gen.implant_prob, "Chance a missing slot holds an implant");
  gen->add_option("--impacted-prob", gopt.gen.impacted_prob);
  gen->add_option("--crown-bridge-prob", gopt.gen.crown_bridge_prob);
  gen->add_option("--restoration-prob", gopt.gen.restoration_prob);
  gen->add_option("--root-filled-prob", gopt.gen.root_filled_prob);
  gen->add_option("--duplicate-rate", gopt.gen.duplicate_rate, "Chance an object is detected twice");
  gen->add_option("--temperature", gopt.gen.temperature, "Label confusion; 0 gives one-hot probabilities");
  gen->add_option("--jitter", gopt.gen.jitter, "Mask jitter in pixels");
  gen->add_flag("--raw-masks", gopt.raw_masks, "Store masks as raw bit strings instead of RLE");
  gen->add_option("--workers", gopt.workers, "Worker threads")->check(CLI::PositiveNumber);

  auto add_batch = [](CLI::App* sub, BatchOptions& b) {
    sub->option_defaults()->always_capture_default();
    sub->add_option("--input,input", b.inputs, "Study files or directories")->required();
    sub->add_option("--out", b.out_dir, "Output directory")->required();
    sub->add_option("--workers", b.workers, "Worker threads")->check(CLI::PositiveNumber);
  };

  auto* dec = app.add_subcommand("decode", "Decode tooth assignments");
  BatchOptions decode_opt;
  add_batch(dec, decode_opt);
  dopt.attach(dec);

  auto* rew = app.add_subcommand("reward", "Print the coherence reward of an assignment");
  rew->option_defaults()->always_capture_default();
  RewardOptions ropt;
  rew->add_option("--study", ropt.study, "Study file")->required();
  rew->add_option("--assignment", ropt.assignment, "Decode document or {\"assignment\": [...]} file")->required();
  rew->add_option("--quadratic-weight", dopt.quadratic_weight)->check(CLI::NonNegativeNumber);
  rew->add_option("--pair-convention", dopt.pair_convention)->check(CLI::IsMember({"ordered", "unordered"}));

  auto* sum = app.add_subcommand("summarize", "Per-tooth finding summaries");
  BatchOptions sum_opt;
  add_batch(sum, sum_opt);
  dopt.attach(sum);
  popt.attach(sum);

  auto* evd = app.add_subcommand("eval-detection", "AP, DA, FA and per-image IoU");
  EvalDetectionOptions eopt;
  add_batch(evd, eopt.batch);
  dopt.attach(evd);
  evd->add_option("--method", eopt.method, "dcr or argmax-nms")->check(CLI::IsMember({"dcr", "argmax-nms"}));
  evd->add_option("--iou-thresholds", eopt.iou_thresholds, "Comma-separated IoU thresholds")->delimiter(',');
  evd->add_option("--bootstrap", eopt.bootstrap, "Bootstrap rounds for the AP standard error")
      ->check(CLI::NonNegativeNumber);
  evd->add_option("--seed", eopt.seed, "Bootstrap seed");

  auto* evf = app.add_subcommand("eval-findings", "Per-finding ROC curves and AUC");
  BatchOptions evf_opt;
  add_batch(evf, evf_opt);
  dopt.attach(evf);
  popt.attach(evf);

  auto* tr = app.add_subcommand("train-toy", "REINFORCE training of the toy policy");
  TrainOptions topt;
  add_batch(tr, topt.batch);
  dopt.attach(tr);
  bool no_baseline = false;
  tr->add_option("--heldout", topt.heldout, "Held-out study files or directories");
  tr->add_option("--init-policy", topt.init_policy, "Starting policy file");
  tr->add_option("--seed", topt.rl.rng_seed, "Training seed");
  tr->add_option("--steps", topt.rl.steps);
  tr->add_option("--learning-rate", topt.rl.learning_rate);
  tr->add_option("--samples", topt.rl.samples_per_instance, "Samples per instance");
  tr->add_option("--batch-size", topt.rl.batch_size);
  tr->add_flag("--no-baseline", no_baseline, "Disable the mean-reward baseline");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kOk;
  } catch (const CLI::CallForVersion&) {
    out << kToolVersion << '\n';
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    return kUsage;
  }

  CLI::App* sub = app.get_subcommands().front();
  Context ctx{out, {}, std::nullopt};
  ctx.manifest.command = sub->get_name();
  try {
    if (sub == gen) {
      ctx.manifest.seed = gopt.seed;
      cmd_generate(gopt, ctx);
    } else if (sub == dec) {
      cmd_decode(decode_opt, dopt, ctx);
    } else if (sub == rew) {
      cmd_reward(ropt, dopt, ctx);
    } else if (sub == sum) {
      cmd_summarize(sum_opt, dopt, popt, ctx);
    } else if (sub == evd) {
      ctx.manifest.seed = eopt.seed;
      cmd_eval_detection(eopt, dopt, ctx);
    } else if (sub == evf) {
      cmd_eval_findings(evf_opt, dopt, popt, ctx);
    } else if (sub == tr) {
      topt.rl.use_baseline = !no_baseline;
      ctx.manifest.seed = topt.rl.rng_seed;
      cmd_train_toy(topt, dopt, ctx);
    }
    if (ctx.manifest_dir) {
      ctx.manifest.config = resolved_config(sub);
      ctx.manifest.duration_seconds =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
      write_manifest(*ctx.manifest_dir, ctx.manifest);
    }
  } catch (const UsageError& e) {
    err << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const MissingInputError& e) {
    err << "error: " << e.what() << '\n';
    return kMissingInput;
  } catch (const StudyFormatError& e) {
    err << "error: " << e.what() << '\n';
    return kMalformedInput;
  } catch (const MalformedInputError& e) {
    err << "error: " << e.what() << '\n';
    return kMalformedInput;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kRuntimeError;
  }
  return kOk;
}

}  // namespace deepopg::cli
