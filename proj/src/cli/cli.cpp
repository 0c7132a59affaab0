#include "aimguard/cli.hpp"

#include <pthread.h>
#include <signal.h>

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <memory>
#include <sstream>
#include <thread>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "aimguard/error.hpp"
#include "aimguard/eval.hpp"
#include "aimguard/explainer.hpp"
#include "aimguard/features.hpp"
#include "aimguard/ingest.hpp"
#include "aimguard/inspector.hpp"
#include "aimguard/service.hpp"
#include "aimguard/simulator.hpp"
#include "aimguard/trajectory.hpp"
#include "aimguard/util.hpp"

namespace aimguard::cli {

namespace {

using json = nlohmann::json;
namespace fs = std::filesystem;

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Binds flags to JSON pointers. Only flags present on the command line are
// written, so the layering is: defaults, then flags, then --config.
class Flags {
 public:
  Flags(CLI::App* app, const json& defaults) : app_(app), defaults_(defaults) {}

  template <typename T>
  CLI::Option* add(const std::string& name, const std::string& pointer, const std::string& help) {
    auto value = std::make_shared<T>();
    auto* opt = app_->add_option(name, *value, help);
    const json::json_pointer ptr(pointer);
    if (defaults_.contains(ptr) && !defaults_.at(ptr).is_null()) {
      const auto& d = defaults_.at(ptr);
      opt->default_str(d.is_string() ? d.get<std::string>() : d.dump());
    }
    setters_.push_back([value, opt, ptr](json& cfg) {
      if (opt->count() > 0) cfg[ptr] = *value;
    });
    return opt;
  }

  CLI::Option* flag(const std::string& name, const std::string& pointer, const std::string& help) {
    auto value = std::make_shared<bool>(false);
    auto* opt = app_->add_flag(name, *value, help);
    const json::json_pointer ptr(pointer);
    setters_.push_back([value, opt, ptr](json& cfg) {
      if (opt->count() > 0) cfg[ptr] = *value;
    });
    return opt;
  }

  void apply(json& cfg) const {
    for (const auto& set : setters_) set(cfg);
  }

 private:
  CLI::App* app_;
  const json& defaults_;
  std::vector<std::function<void(json&)>> setters_;
};

struct RunResult {
  fs::path manifest;
  std::vector<fs::path> inputs;
  json summary = json::object();
};

struct Command {
  CLI::App* app = nullptr;
  json defaults;
  std::unique_ptr<Flags> flags;
  std::string config_path;
  std::function<void(json&)> finalize;  // post-merge normalization
  std::function<RunResult(const json&)> body;
};

// --- config access ---------------------------------------------------------

template <typename T>
T get(const json& cfg, const std::string& pointer) {
  try {
    return cfg.at(json::json_pointer(pointer)).get<T>();
  } catch (const json::exception& e) {
    throw UsageError(fmt::format("config {}: {}", pointer, e.what()));
  }
}

std::optional<std::string> optional_string(const json& cfg, const std::string& pointer) {
  const json::json_pointer ptr(pointer);
  if (!cfg.contains(ptr) || cfg.at(ptr).is_null()) return std::nullopt;
  auto s = get<std::string>(cfg, pointer);
  if (s.empty()) return std::nullopt;
  return s;
}

std::string required_string(const json& cfg, const std::string& pointer, const std::string& flag) {
  auto s = optional_string(cfg, pointer);
  if (!s) throw UsageError(fmt::format("{} is required", flag));
  return *s;
}

trajectory::ScreenSize screen_of(const json& cfg) {
  trajectory::ScreenSize s{get<double>(cfg, "/screen/width"), get<double>(cfg, "/screen/height")};
  if (!(s.width > 0.0) || !(s.height > 0.0)) throw UsageError("screen size must be positive");
  return s;
}

trajectory::WindowSpec window_of(const json& cfg) {
  trajectory::WindowSpec w{get<int>(cfg, "/window/m"), get<int>(cfg, "/window/n")};
  if (w.m < 1 || w.n < 1) throw UsageError("window needs m >= 1 and n >= 1");
  return w;
}

json screen_defaults() { return {{"width", 1920.0}, {"height", 1080.0}}; }
json window_defaults() { return {{"m", 64}, {"n", 32}}; }

void add_screen_flags(Flags& f) {
  f.add<double>("--width", "/screen/width", "screen width in pixels");
  f.add<double>("--height", "/screen/height", "screen height in pixels");
}

void add_window_flags(Flags& f) {
  f.add<int>("--m", "/window/m", "ticks before the elimination (elimination tick included)");
  f.add<int>("--n", "/window/n", "ticks after the elimination");
}

// --- manifests -------------------------------------------------------------

void add_input(json& list, const fs::path& path) {
  if (fs::is_directory(path)) {
    std::vector<fs::path> files;
    for (const auto& e : fs::recursive_directory_iterator(path)) {
      if (e.is_regular_file() && e.path().filename() != "manifest.json") files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
    for (const auto& f : files) add_input(list, f);
    return;
  }
  const auto bytes = util::read_file(path);
  list.push_back({{"path", path.string()}, {"bytes", bytes.size()}, {"sha256", util::sha256_hex(bytes)}});
}

void write_manifest(const fs::path& path, std::string_view command, const json& cfg, const RunResult& result,
                    const std::string& started_at, double wall_seconds) {
  json inputs = json::array();
  for (const auto& p : result.inputs) add_input(inputs, p);
  const json manifest = {{"command", command},
                         {"version", kVersion},
                         {"config", cfg},
                         {"config_sha256", util::sha256_hex(cfg.dump())},
                         {"inputs", inputs},
                         {"summary", result.summary},
                         {"threads", util::worker_threads()},
                         {"started_at", started_at},
                         {"wall_seconds", wall_seconds}};
  util::write_file(path, manifest.dump(2) + "\n");
}

fs::path sidecar(const fs::path& output) { return fs::path(output.string() + ".manifest.json"); }

// --- shared loading --------------------------------------------------------

struct Split {
  std::vector<ingest::MatchRecord> matches;
  ingest::LabelTable labels;
  std::vector<fs::path> files;
};

// A split is either a tick log file or a directory holding ticks.csv (or
// ticks.jsonl) and optionally labels.csv.
Split load_split(const fs::path& path, const std::optional<std::string>& labels_path) {
  Split s;
  fs::path ticks = path;
  std::optional<fs::path> labels;
  if (labels_path) labels = *labels_path;
  if (fs::is_directory(path)) {
    ticks = fs::exists(path / "ticks.csv") ? path / "ticks.csv" : path / "ticks.jsonl";
    if (!labels && fs::exists(path / "labels.csv")) labels = path / "labels.csv";
  }
  s.matches = ingest::load_tick_log(ticks);
  s.files.push_back(ticks);
  if (labels) {
    s.labels = ingest::load_labels(*labels);
    ingest::apply_labels(s.matches, s.labels);
    s.files.push_back(*labels);
  } else {
    s.labels = ingest::collect_labels(s.matches);
  }
  return s;
}

void log_line(std::string_view stage, const std::string& message) {
  fmt::print(stderr, "[{}] {}\n", stage, message);
  std::fflush(stderr);
}

json cleansing_json(const trajectory::CleansingReport& r) {
  return {{"eliminations", r.eliminations},
          {"accepted", r.accepted},
          {"truncated", r.truncated},
          {"glitch_missing", r.glitch_missing},
          {"glitch_duplicate", r.glitch_duplicate}};
}

std::vector<features::FeatureSeries> extract_series(std::span<const ingest::MatchRecord> matches,
                                                    trajectory::WindowSpec spec, trajectory::ScreenSize screen,
                                                    trajectory::CleansingReport* report = nullptr) {
  std::vector<features::FeatureSeries> out;
  for (const auto& m : matches) {
    for (const auto& p : m.players) {
      const auto ex = trajectory::extract_windows(p, m.match_id, spec, screen);
      if (report) *report += ex.report;
      for (const auto& w : ex.windows) out.push_back(features::compute_features(w));
    }
  }
  return out;
}

std::vector<inspector::PlayerVerdict> predict_all(const inspector::DetectorBundle& bundle,
                                                  std::span<const ingest::MatchRecord> matches) {
  std::vector<std::vector<inspector::PlayerVerdict>> per_match(matches.size());
  util::parallel_for(matches.size(), [&](std::size_t i) { per_match[i] = inspector::predict_match(bundle, matches[i]); });
  std::vector<inspector::PlayerVerdict> out;
  for (auto& v : per_match) {
    for (auto& p : v) out.push_back(std::move(p));
  }
  return out;
}

std::string verdict_lines(std::span<const inspector::PlayerVerdict> verdicts) {
  std::string out;
  for (const auto& v : verdicts) out += v.to_json().dump() + "\n";
  return out;
}

// --- simulate --------------------------------------------------------------

std::vector<std::pair<std::string, int>> parse_splits(std::string_view text) {
  std::vector<std::pair<std::string, int>> out;
  for (auto part : util::split(text, ',')) {
    part = util::trim(part);
    if (part.empty()) continue;
    const auto colon = part.find(':');
    const auto count = colon == std::string_view::npos ? std::nullopt : util::parse_int(part.substr(colon + 1));
    if (!count || *count < 1 || colon == 0) throw UsageError(fmt::format("bad split '{}', expected name:count", part));
    out.emplace_back(std::string(part.substr(0, colon)), static_cast<int>(*count));
  }
  return out;
}

RunResult run_simulate(const json& cfg) {
  simulator::DatasetConfig dc;
  dc.matches = get<int>(cfg, "/matches");
  dc.players = get<int>(cfg, "/players");
  dc.cheater_frac = get<double>(cfg, "/cheater_frac");
  dc.elims_min = get<int>(cfg, "/elims_min");
  dc.elims_max = get<int>(cfg, "/elims_max");
  dc.seed = get<std::uint64_t>(cfg, "/seed");
  dc.screen = screen_of(cfg);
  const auto& mix = cfg.at("profile_mix");
  try {
    dc.profile_mix = mix.is_object() ? mix.get<std::map<std::string, double>>()
                                     : simulator::parse_profile_mix(mix.get<std::string>());
  } catch (const json::exception& e) {
    throw UsageError(fmt::format("profile_mix: {}", e.what()));
  }
  if (dc.matches < 1 || dc.players < 1) throw UsageError("--matches and --players must be positive");
  if (!(dc.cheater_frac >= 0.0 && dc.cheater_frac <= 1.0)) throw UsageError("--cheater-frac must lie in [0, 1]");
  if (dc.elims_min < 1 || dc.elims_max < dc.elims_min) throw UsageError("need 1 <= elims-min <= elims-max");
  const fs::path out = required_string(cfg, "/out", "--out");
  const auto splits = parse_splits(get<std::string>(cfg, "/splits"));

  RunResult result;
  result.manifest = out / "manifest.json";
  const auto generate = [&](const simulator::DatasetConfig& c, const fs::path& dir) {
    const auto dataset = simulator::gen_dataset(c);
    simulator::write_dataset(dataset, dir);
    std::size_t cheaters = 0;
    for (const auto& [_, cheater] : dataset.labels()) cheaters += cheater ? 1 : 0;
    return json{{"dir", dir.string()},
                {"matches", dataset.matches.size()},
                {"players", dataset.labels().size()},
                {"cheaters", cheaters},
                {"eliminations", dataset.truth.size()},
                {"seed", c.seed}};
  };
  if (splits.empty()) {
    result.summary["dataset"] = generate(dc, out);
  } else {
    for (const auto& [name, count] : splits) {
      auto c = dc;
      c.matches = count;
      c.seed = util::derive_seed(dc.seed, {"split", name});
      c.match_prefix = name + "-";
      result.summary[name] = generate(c, out / name);
      log_line("simulate", fmt::format("{}: {} matches", name, count));
    }
  }
  return result;
}

// --- extract ---------------------------------------------------------------

RunResult run_extract(const json& cfg) {
  const auto ticks = required_string(cfg, "/ticks", "--ticks");
  const fs::path out = required_string(cfg, "/out", "--out");
  const auto spec = window_of(cfg);
  const auto screen = screen_of(cfg);
  const auto split = load_split(ticks, std::nullopt);
  trajectory::CleansingReport report;
  const auto series = extract_series(split.matches, spec, screen, &report);
  std::ostringstream dump;
  features::write_feature_dump(series, dump);
  util::write_file(out, dump.str());
  RunResult result;
  result.manifest = sidecar(out);
  result.inputs = split.files;
  std::size_t warnings = 0;
  for (const auto& m : split.matches) warnings += m.warnings.size();
  result.summary = {{"series", series.size()}, {"cleansing", cleansing_json(report)}, {"duplicate_ticks", warnings}};
  return result;
}

// --- train -----------------------------------------------------------------

json train_defaults() {
  auto j = inspector::PipelineConfig{}.to_json();
  j["train"] = nullptr;
  j["val"] = nullptr;
  j["test"] = nullptr;
  j["labels"] = nullptr;
  j["out"] = nullptr;
  j["arch"] = "default";
  return j;
}

void train_finalize(json& cfg) {
  const auto arch = get<std::string>(cfg, "/arch");
  if (arch == "tiny") {
    cfg["subsequence_architecture"] = inspector::tiny_subsequence_architecture();
  } else if (arch != "default") {
    throw UsageError(fmt::format("--arch must be default or tiny, got '{}'", arch));
  }
}

RunResult run_train(const json& cfg) {
  const auto train_path = required_string(cfg, "/train", "--train");
  const auto val_path = required_string(cfg, "/val", "--val");
  const auto test_path = optional_string(cfg, "/test");
  const auto labels = optional_string(cfg, "/labels");
  const fs::path out = required_string(cfg, "/out", "--out");
  inspector::PipelineConfig pc;
  try {
    pc = inspector::PipelineConfig::from_json(cfg);
  } catch (const json::exception& e) {
    throw UsageError(e.what());
  }

  const auto train = load_split(train_path, labels);
  const auto val = load_split(val_path, labels);
  RunResult result;
  result.manifest = out / "manifest.json";
  result.inputs = train.files;
  result.inputs.insert(result.inputs.end(), val.files.begin(), val.files.end());

  const auto bundle = inspector::train_pipeline(train.matches, val.matches, pc,
                                                [](const std::string& m) { log_line("train", m); });
  fs::create_directories(out);
  bundle.save(out / "model.json");
  util::write_file(out / "config.json", cfg.dump(2) + "\n");
  util::write_file(out / "history.json", bundle.history.dump(2) + "\n");
  result.summary = {{"model", (out / "model.json").string()},
                    {"model_version", bundle.model_version()},
                    {"threshold", bundle.threshold.threshold},
                    {"elimination_f1", bundle.threshold.f1}};

  if (test_path) {
    const auto test = load_split(*test_path, labels);
    result.inputs.insert(result.inputs.end(), test.files.begin(), test.files.end());
    const auto verdicts = predict_all(bundle, test.matches);
    util::write_file(out / "test_verdicts.jsonl", verdict_lines(verdicts));
    std::vector<json> records;
    for (const auto& v : verdicts) records.push_back(v.to_json());
    const auto joined = eval::join_verdicts(records, test.labels);
    const auto report = eval::metrics(eval::confusion(joined.labels, joined.verdicts));
    const auto baseline = eval::study_acc_a(extract_series(test.matches, pc.window, pc.screen), test.labels);
    const json test_report = {{"players", joined.labels.size()},
                              {"excluded", joined.excluded},
                              {"unlabeled", joined.unlabeled},
                              {"metrics", report.to_json()},
                              {"baselines", {baseline.to_json()}}};
    util::write_file(out / "test_report.json", test_report.dump(2) + "\n");
    result.summary["test"] = {{"recall", report.plain.recall.value},
                              {"fpr", report.plain.fpr.value},
                              {"weighted_f1", report.weighted.f1.value},
                              {"th_acc_a_weighted_f1", baseline.report.weighted.f1.value}};
    log_line("train", fmt::format("test recall {:.3f} fpr {:.3f} weighted F1 {:.3f} (th_acc_a {:.3f})",
                                  report.plain.recall.value, report.plain.fpr.value, report.weighted.f1.value,
                                  baseline.report.weighted.f1.value));
  }
  return result;
}

// --- predict ---------------------------------------------------------------

RunResult run_predict(const json& cfg) {
  const fs::path model = required_string(cfg, "/model", "--model");
  const auto ticks = required_string(cfg, "/ticks", "--ticks");
  const fs::path out = required_string(cfg, "/out", "--out");
  const auto bundle = inspector::DetectorBundle::load(model);
  const auto split = load_split(ticks, std::nullopt);
  const auto t0 = std::chrono::steady_clock::now();
  const auto verdicts = predict_all(bundle, split.matches);
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  util::write_file(out, verdict_lines(verdicts));

  RunResult result;
  result.manifest = sidecar(out);
  result.inputs = {model};
  result.inputs.insert(result.inputs.end(), split.files.begin(), split.files.end());
  std::size_t flagged = 0, excluded = 0;
  for (const auto& v : verdicts) {
    excluded += v.included ? 0 : 1;
    flagged += v.included && v.verdict ? 1 : 0;
  }
  result.summary = {{"model_version", bundle.model_version()},
                    {"matches", split.matches.size()},
                    {"players", verdicts.size()},
                    {"flagged", flagged},
                    {"excluded", excluded},
                    {"inference_seconds", seconds}};
  return result;
}

// --- explain ---------------------------------------------------------------

RunResult run_explain(const json& cfg) {
  const fs::path model = required_string(cfg, "/model", "--model");
  const auto ticks = required_string(cfg, "/ticks", "--ticks");
  const fs::path out = required_string(cfg, "/out", "--out");
  const auto match = optional_string(cfg, "/match");
  const auto player = optional_string(cfg, "/player");
  if (match.has_value() != player.has_value()) throw UsageError("--match and --player go together");
  explainer::ExplainOptions options;
  options.n_samples = get<std::size_t>(cfg, "/samples");
  options.seed = get<std::uint64_t>(cfg, "/seed");
  try {
    options.squeeze = explainer::parse_squeeze_mode(get<std::string>(cfg, "/squeeze"));
  } catch (const Error& e) {
    throw UsageError(e.what());
  }
  if (options.n_samples == 0) throw UsageError("--samples must be positive");
  const bool all = get<bool>(cfg, "/all");

  const auto bundle = inspector::DetectorBundle::load(model);
  const auto split = load_split(ticks, std::nullopt);
  RunResult result;
  result.inputs = {model};
  result.inputs.insert(result.inputs.end(), split.files.begin(), split.files.end());

  const auto explain = [&](const inspector::PlayerVerdict& v) {
    return explainer::export_attribution(explainer::explain_player(bundle, v, options)).dump() + "\n";
  };

  if (match) {
    const auto it = std::find_if(split.matches.begin(), split.matches.end(),
                                 [&](const ingest::MatchRecord& m) { return m.match_id == *match; });
    if (it == split.matches.end()) throw Error(ErrorKind::kNotFound, fmt::format("match {} not in {}", *match, ticks));
    if (!it->find_player(*player)) {
      throw Error(ErrorKind::kNotFound, fmt::format("player {} not in match {}", *player, *match));
    }
    for (const auto& v : inspector::predict_match(bundle, *it)) {
      if (v.player_id != *player) continue;
      if (!v.included) throw Error(ErrorKind::kNoEliminations, fmt::format("player excluded: {}", v.reason));
      util::write_file(out, explain(v));
      result.summary = {{"case_id", service::case_id(v.match_id, v.player_id)},
                        {"eliminations", v.eliminations.size()},
                        {"probability", v.probability}};
    }
    result.manifest = sidecar(out);
    return result;
  }

  fs::create_directories(out);
  std::size_t written = 0;
  for (const auto& v : predict_all(bundle, split.matches)) {
    if (!v.included || !(v.verdict || all)) continue;
    util::write_file(out / (service::case_id(v.match_id, v.player_id) + ".json"), explain(v));
    ++written;
    log_line("explain", fmt::format("{}/{}: {} eliminations", v.match_id, v.player_id, v.eliminations.size()));
  }
  result.manifest = out / "manifest.json";
  result.summary = {{"documents", written}};
  return result;
}

// --- eval ------------------------------------------------------------------

json significance(const eval::Confusion& a, const eval::Confusion& b, bool continuity) {
  // Recall comparison: detected cheaters out of all cheaters, per run.
  json out = {{"statistic", "recall"},
              {"x1", a.tp},
              {"n1", a.tp + a.fn},
              {"x2", b.tp},
              {"n2", b.tp + b.fn}};
  try {
    const auto z = eval::two_proportion_z(a.tp, a.tp + a.fn, b.tp, b.tp + b.fn, continuity);
    out["z_test"] = {{"z", z.z}, {"p", z.p}, {"continuity_correction", z.continuity_correction}};
  } catch (const Error& e) {
    out["z_test"] = {{"error", to_string(e.kind())}, {"message", e.what()}};
  }
  if (a.tp + a.fn + b.tp + b.fn > 0) out["fisher_p"] = eval::fisher_exact(a.tp, a.fn, b.tp, b.fn);
  return out;
}

RunResult run_eval(const json& cfg) {
  const fs::path verdicts = required_string(cfg, "/verdicts", "--verdicts");
  const fs::path labels_path = required_string(cfg, "/labels", "--labels");
  const fs::path out = required_string(cfg, "/out", "--out");
  const auto compare = optional_string(cfg, "/compare");
  const auto ticks = optional_string(cfg, "/ticks");
  const auto sweep_csv = optional_string(cfg, "/sweep_csv");
  const bool continuity = get<bool>(cfg, "/continuity_correction");
  const auto spec = window_of(cfg);
  const auto screen = screen_of(cfg);

  RunResult result;
  result.manifest = sidecar(out);
  result.inputs = {verdicts, labels_path};
  const auto labels = ingest::load_labels(labels_path);
  const auto joined = eval::join_verdicts(eval::read_jsonl(verdicts), labels);
  const auto report = eval::metrics(eval::confusion(joined.labels, joined.verdicts));
  json doc = {{"verdicts", verdicts.string()},
              {"players", joined.labels.size()},
              {"excluded", joined.excluded},
              {"unlabeled", joined.unlabeled},
              {"metrics", report.to_json()}};

  if (compare) {
    result.inputs.push_back(*compare);
    const auto other = eval::join_verdicts(eval::read_jsonl(*compare), labels);
    const auto other_report = eval::metrics(eval::confusion(other.labels, other.verdicts));
    doc["compare"] = {{"verdicts", *compare}, {"players", other.labels.size()}, {"metrics", other_report.to_json()}};
    doc["significance"] = significance(report.confusion, other_report.confusion, continuity);
  }

  if (ticks) {
    const auto split = load_split(*ticks, labels_path.string());
    result.inputs.push_back(*ticks);
    json baselines = json::array();
    const auto acc = eval::study_acc_a(extract_series(split.matches, spec, screen), labels);
    baselines.push_back(acc.to_json());
    if (sweep_csv) {
      std::vector<double> stats, thresholds;
      for (const auto& p : acc.players) stats.push_back(p.statistic);
      thresholds = stats;
      std::sort(thresholds.begin(), thresholds.end());
      thresholds.erase(std::unique(thresholds.begin(), thresholds.end()), thresholds.end());
      std::string csv = "threshold,tp,fp,tn,fn,f1,weighted_f1\n";
      for (const auto& p : eval::threshold_sweep(stats, acc.labels, thresholds)) {
        csv += fmt::format("{},{},{},{},{},{},{}\n", util::format_fixed(p.threshold, 9), p.confusion.tp,
                           p.confusion.fp, p.confusion.tn, p.confusion.fn, util::format_fixed(p.f1, 9),
                           util::format_fixed(p.weighted_f1, 9));
      }
      util::write_file(*sweep_csv, csv);
    }
    if (std::all_of(split.matches.begin(), split.matches.end(),
                    [](const ingest::MatchRecord& m) { return m.has_hit_column(); })) {
      std::vector<double> stats;
      std::vector<int> hit_labels;
      for (const auto& m : split.matches) {
        for (const auto& v : eval::th_hit_acc(m, 0.0)) {
          const auto it = labels.find({v.match_id, v.player_id});
          if (v.skipped || it == labels.end()) continue;
          stats.push_back(v.statistic);
          hit_labels.push_back(it->second ? 1 : 0);
        }
      }
      if (!stats.empty()) {
        const auto best = eval::best_threshold(stats, hit_labels);
        baselines.push_back({{"baseline", "th_hit_acc"},
                             {"players", stats.size()},
                             {"threshold", best.threshold},
                             {"metrics", eval::metrics(best.confusion).to_json()}});
      }
    }
    doc["baselines"] = baselines;
  }
  util::write_file(out, doc.dump(2) + "\n");
  result.summary = {{"players", joined.labels.size()},
                    {"recall", report.plain.recall.value},
                    {"fpr", report.plain.fpr.value},
                    {"weighted_f1", report.weighted.f1.value}};
  return result;
}

// --- render ----------------------------------------------------------------

RunResult run_render(const json& cfg) {
  const auto explanation = optional_string(cfg, "/explanation");
  const auto ticks = optional_string(cfg, "/ticks");
  const auto svg_out = optional_string(cfg, "/out");
  const auto frames_out = optional_string(cfg, "/frames");
  const auto channel = optional_string(cfg, "/channel");
  const auto screen = screen_of(cfg);
  const json::json_pointer tick_ptr("/elim_tick");
  std::optional<std::int64_t> elim_tick;
  if (cfg.contains(tick_ptr) && !cfg.at(tick_ptr).is_null()) elim_tick = get<std::int64_t>(cfg, "/elim_tick");
  if (explanation.has_value() == ticks.has_value()) throw UsageError("give exactly one of --explanation or --ticks");
  if (!svg_out && !frames_out) throw UsageError("--out or --frames is required");
  std::optional<std::size_t> channel_index;
  if (channel) {
    const auto it = std::find(features::kFeatureNames.begin(), features::kFeatureNames.end(), *channel);
    if (it == features::kFeatureNames.end()) throw UsageError(fmt::format("unknown channel '{}'", *channel));
    channel_index = static_cast<std::size_t>(it - features::kFeatureNames.begin());
  }

  RunResult result;
  std::vector<trajectory::ScreenPoint> points;
  std::size_t elim_index = 0;
  std::vector<std::pair<std::string, std::vector<double>>> attribution;
  std::string elimination;

  if (explanation) {
    result.inputs.push_back(*explanation);
    const auto doc = explainer::parse_explanation(json::parse(util::read_file(*explanation)));
    if (doc.eliminations.empty()) throw Error(ErrorKind::kNoEliminations, "explanation has no eliminations");
    const auto* el = &doc.eliminations.front();
    if (elim_tick) {
      const auto it = std::find_if(doc.eliminations.begin(), doc.eliminations.end(),
                                   [&](const explainer::ParsedElimination& e) { return e.elim_tick == *elim_tick; });
      if (it == doc.eliminations.end()) throw Error(ErrorKind::kNotFound, fmt::format("no elimination at {}", *elim_tick));
      el = &*it;
    }
    elimination = el->elimination_id;
    for (std::size_t c = 0; c < features::kNumFeatures; ++c) {
      attribution.emplace_back(std::string(features::kFeatureNames[c]), std::vector<double>{});
    }
    for (const auto& t : el->ticks) {
      if (t.t == el->elim_tick) elim_index = points.size();
      points.push_back({t.x, t.y, t.t, t.fired, t.eliminated});
      for (std::size_t c = 0; c < features::kNumFeatures; ++c) attribution[c].second.push_back(t.values[c]);
    }
  } else {
    if (channel) throw UsageError("--channel needs --explanation");
    const auto match = required_string(cfg, "/match", "--match");
    const auto player = required_string(cfg, "/player", "--player");
    const auto split = load_split(*ticks, std::nullopt);
    result.inputs = split.files;
    const auto it = std::find_if(split.matches.begin(), split.matches.end(),
                                 [&](const ingest::MatchRecord& m) { return m.match_id == match; });
    const auto* stream = it == split.matches.end() ? nullptr : it->find_player(player);
    if (!stream) throw Error(ErrorKind::kNotFound, fmt::format("{}/{} not in {}", match, player, *ticks));
    const auto ex = trajectory::extract_windows(*stream, match, window_of(cfg), screen);
    if (ex.windows.empty()) throw Error(ErrorKind::kNoWindows, fmt::format("{}/{} has no valid window", match, player));
    const auto* w = &ex.windows.front();
    if (elim_tick) {
      const auto wit = std::find_if(ex.windows.begin(), ex.windows.end(),
                                    [&](const trajectory::RawWindow& r) { return r.elim_tick() == *elim_tick; });
      if (wit == ex.windows.end()) throw Error(ErrorKind::kNotFound, fmt::format("no valid window at {}", *elim_tick));
      w = &*wit;
    }
    points = w->points;
    elim_index = w->elim_tick_index;
    elimination = explainer::elimination_id(match, player, w->elim_tick());
  }

  if (svg_out) {
    std::vector<double> values;
    if (channel_index) values = attribution[*channel_index].second;
    util::write_file(*svg_out,
                     trajectory::to_svg(trajectory::render_trajectory(points, elim_index, screen.width, screen.height,
                                                                      values)));
  }
  if (frames_out) {
    auto frames = trajectory::frame_list(points, elim_index, screen.width, screen.height, attribution);
    frames["elimination_id"] = elimination;
    util::write_file(*frames_out, frames.dump(2) + "\n");
  }
  result.manifest = sidecar(svg_out ? fs::path(*svg_out) : fs::path(*frames_out));
  result.summary = {{"elimination_id", elimination}, {"points", points.size()}};
  return result;
}

// --- serve -----------------------------------------------------------------

RunResult run_serve(const json& cfg, const std::function<void(const RunResult&)>& before_listen) {
  const fs::path verdicts = required_string(cfg, "/verdicts", "--verdicts");
  const fs::path store_dir = required_string(cfg, "/store", "--store");
  const auto explanations = optional_string(cfg, "/explanations");
  service::ServerOptions options;
  options.host = get<std::string>(cfg, "/host");
  options.port = get<int>(cfg, "/port");
  if (options.port < 0 || options.port > 65535) throw UsageError("--port must lie in 0..65535");
  options.token = optional_string(cfg, "/token");
  if (!options.token) {
    if (const char* env = std::getenv("AIMGUARD_TOKEN"); env && *env) options.token = env;
  }
  if (const auto dir = optional_string(cfg, "/static")) options.static_dir = *dir;

  // Block termination signals before any server thread starts so that only
  // the waiter below receives them.
  sigset_t signals;
  sigemptyset(&signals);
  sigaddset(&signals, SIGINT);
  sigaddset(&signals, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &signals, nullptr);

  service::CaseStore store(eval::read_jsonl(verdicts), explanations ? fs::path(*explanations) : fs::path(), store_dir,
                           screen_of(cfg));
  service::ReviewServer server(store, options);
  const int port = server.bind();
  if (port <= 0) throw Error(ErrorKind::kIo, fmt::format("cannot bind {}:{}", options.host, options.port));

  RunResult result;
  result.manifest = store_dir / "manifest.json";
  result.inputs = {verdicts};
  if (explanations) result.inputs.emplace_back(*explanations);
  result.summary = {{"cases", store.size()},
                    {"verdicts_replayed", store.verdict_count()},
                    {"skipped_log_lines", store.skipped_log_lines()},
                    {"port", port}};
  before_listen(result);
  log_line("serve", fmt::format("{} cases, {} verdicts replayed", store.size(), store.verdict_count()));
  fmt::print("listening on http://{}:{}\n", options.host, port);
  std::fflush(stdout);

  std::thread waiter([&] {
    int sig = 0;
    sigwait(&signals, &sig);
    server.stop();
  });
  server.listen();
  pthread_kill(waiter.native_handle(), SIGTERM);
  waiter.join();
  return result;
}

// ---------------------------------------------------------------------------

Command& add_command(std::vector<std::unique_ptr<Command>>& commands, CLI::App& app, const std::string& name,
                     const std::string& description, json defaults) {
  auto cmd = std::make_unique<Command>();
  cmd->app = app.add_subcommand(name, description);
  cmd->defaults = std::move(defaults);
  cmd->flags = std::make_unique<Flags>(cmd->app, cmd->defaults);
  cmd->app->add_option("--config", cmd->config_path, "JSON file whose keys override flags");
  commands.push_back(std::move(cmd));
  return *commands.back();
}

int execute(Command& cmd) {
  const auto name = cmd.app->get_name();
  const auto started_at = util::utc_timestamp();
  const auto t0 = std::chrono::steady_clock::now();
  try {
    json cfg = cmd.defaults;
    cmd.flags->apply(cfg);
    if (!cmd.config_path.empty()) {
      json file;
      try {
        file = json::parse(util::read_file(cmd.config_path));
      } catch (const json::exception& e) {
        throw UsageError(fmt::format("--config {}: {}", cmd.config_path, e.what()));
      } catch (const Error& e) {
        throw UsageError(e.what());
      }
      if (!file.is_object()) throw UsageError("--config must hold a JSON object");
      cfg.merge_patch(file);
    }
    if (cmd.finalize) cmd.finalize(cfg);
    const auto result = cmd.body(cfg);
    const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    write_manifest(result.manifest, name, cfg, result, started_at, wall);
    return 0;
  } catch (const UsageError& e) {
    fmt::print(stderr, "aimguard {}: {}\n", name, e.what());
    return 2;
  } catch (const Error& e) {
    fmt::print(stderr, "aimguard {}: {}: {}\n", name, to_string(e.kind()), e.what());
    return e.kind() == ErrorKind::kInvalidConfig ? 2 : 1;
  } catch (const std::exception& e) {
    fmt::print(stderr, "aimguard {}: {}\n", name, e.what());
    return 1;
  }
}

}  // namespace

int run(int argc, const char* const* argv) {
  CLI::App app{"aimguard: server-side aim-assist cheat detection"};
  app.set_version_flag("--version", std::string(kVersion));
  app.require_subcommand(1);
  std::vector<std::unique_ptr<Command>> commands;

  {
    auto& c = add_command(commands, app, "simulate", "generate a synthetic labeled tick-log dataset",
                          {{"matches", 20},
                           {"players", 10},
                           {"cheater_frac", 0.1},
                           {"profile_mix", "aimbot:1,wallhack:1,hybrid:1"},
                           {"elims_min", 2},
                           {"elims_max", 5},
                           {"seed", 0},
                           {"splits", ""},
                           {"out", nullptr},
                           {"screen", screen_defaults()}});
    auto& f = *c.flags;
    f.add<int>("--matches", "/matches", "matches to generate (per dataset)");
    f.add<int>("--players", "/players", "players per match");
    f.add<double>("--cheater-frac", "/cheater_frac", "fraction of cheating players");
    f.add<std::string>("--profile-mix", "/profile_mix", "cheat profile weights, e.g. aimbot:2,wallhack:1");
    f.add<int>("--elims-min", "/elims_min", "minimum eliminations per player");
    f.add<int>("--elims-max", "/elims_max", "maximum eliminations per player");
    f.add<std::uint64_t>("--seed", "/seed", "random seed");
    f.add<std::string>("--splits", "/splits", "named splits, e.g. train:120,val:40,test:40 (overrides --matches)");
    f.add<std::string>("--out", "/out", "output directory");
    add_screen_flags(f);
    c.body = run_simulate;
  }
  {
    auto& c = add_command(commands, app, "extract", "cut elimination windows and dump feature tuples",
                          {{"ticks", nullptr}, {"out", nullptr}, {"window", window_defaults()}, {"screen", screen_defaults()}});
    auto& f = *c.flags;
    f.add<std::string>("--ticks", "/ticks", "tick log (csv/jsonl) or dataset directory");
    f.add<std::string>("--out", "/out", "feature dump CSV");
    add_window_flags(f);
    add_screen_flags(f);
    c.body = run_extract;
  }
  {
    auto& c = add_command(commands, app, "train", "train the two-stage detector", train_defaults());
    auto& f = *c.flags;
    f.add<std::string>("--train", "/train", "training split (dataset directory or tick log)");
    f.add<std::string>("--val", "/val", "validation split");
    f.add<std::string>("--test", "/test", "optional test split, evaluated after training");
    f.add<std::string>("--labels", "/labels", "labels CSV when splits are bare tick logs");
    f.add<std::string>("--out", "/out", "output directory");
    f.add<int>("--m", "/window/m", "ticks before the elimination");
    f.add<int>("--n", "/window/n", "ticks after the elimination");
    f.add<std::size_t>("--w", "/w", "sliding window length");
    f.add<std::string>("--mode", "/mode", "match vector mode: o, b or a");
    f.add<std::uint64_t>("--seed", "/seed", "random seed");
    f.add<std::string>("--arch", "/arch", "subsequence architecture: default or tiny");
    f.add<int>("--epochs", "/subsequence_training/epochs", "subsequence model epochs");
    f.add<int>("--agg-epochs", "/aggregator_training/epochs", "aggregation model epochs");
    f.add<std::size_t>("--samples-per-epoch", "/subsequence_training/samples_per_epoch",
                       "subsequences drawn per epoch (0 = all)");
    f.add<std::size_t>("--val-samples", "/subsequence_training/val_samples",
                       "validation subsequences (0 = all)");
    c.finalize = train_finalize;
    c.body = run_train;
  }
  {
    auto& c = add_command(commands, app, "predict", "score matches and write verdict JSONL",
                          {{"model", nullptr}, {"ticks", nullptr}, {"out", nullptr}});
    auto& f = *c.flags;
    f.add<std::string>("--model", "/model", "model bundle (model.json)");
    f.add<std::string>("--ticks", "/ticks", "tick log or dataset directory");
    f.add<std::string>("--out", "/out", "verdict JSONL");
    c.body = run_predict;
  }
  {
    auto& c = add_command(commands, app, "explain", "write explanation documents",
                          {{"model", nullptr},
                           {"ticks", nullptr},
                           {"match", nullptr},
                           {"player", nullptr},
                           {"out", nullptr},
                           {"samples", 200},
                           {"seed", 0},
                           {"squeeze", "equation"},
                           {"all", false}});
    auto& f = *c.flags;
    f.add<std::string>("--model", "/model", "model bundle");
    f.add<std::string>("--ticks", "/ticks", "tick log or dataset directory");
    f.add<std::string>("--match", "/match", "match id (with --player: one document written to --out)");
    f.add<std::string>("--player", "/player", "player id");
    f.add<std::string>("--out", "/out", "output file, or directory of <case_id>.json without --match");
    f.add<std::size_t>("--samples", "/samples", "expected-gradients samples per subsequence");
    f.add<std::uint64_t>("--seed", "/seed", "random seed");
    f.add<std::string>("--squeeze", "/squeeze", "temporal squeeze: equation or coverage");
    f.flag("--all", "/all", "directory mode: explain every scored player, not only flagged ones");
    c.body = run_explain;
  }
  {
    auto& c = add_command(commands, app, "eval", "metrics, baselines and significance for verdict files",
                          {{"verdicts", nullptr},
                           {"labels", nullptr},
                           {"out", nullptr},
                           {"compare", nullptr},
                           {"ticks", nullptr},
                           {"sweep_csv", nullptr},
                           {"continuity_correction", false},
                           {"window", window_defaults()},
                           {"screen", screen_defaults()}});
    auto& f = *c.flags;
    f.add<std::string>("--verdicts", "/verdicts", "verdict JSONL");
    f.add<std::string>("--labels", "/labels", "labels CSV");
    f.add<std::string>("--out", "/out", "report JSON");
    f.add<std::string>("--compare", "/compare", "second verdict JSONL for the significance block");
    f.add<std::string>("--ticks", "/ticks", "tick log for the statistical baselines");
    f.add<std::string>("--sweep-csv", "/sweep_csv", "th_acc_a threshold sweep CSV (needs --ticks)");
    f.flag("--continuity-correction", "/continuity_correction", "continuity correction in the z-test");
    add_window_flags(f);
    add_screen_flags(f);
    c.body = run_eval;
  }
  {
    auto& c = add_command(commands, app, "render", "draw a trajectory as SVG and/or a frame list",
                          {{"explanation", nullptr},
                           {"ticks", nullptr},
                           {"match", nullptr},
                           {"player", nullptr},
                           {"elim_tick", nullptr},
                           {"channel", nullptr},
                           {"out", nullptr},
                           {"frames", nullptr},
                           {"window", window_defaults()},
                           {"screen", screen_defaults()}});
    auto& f = *c.flags;
    f.add<std::string>("--explanation", "/explanation", "explanation document");
    f.add<std::string>("--ticks", "/ticks", "tick log (with --match and --player)");
    f.add<std::string>("--match", "/match", "match id");
    f.add<std::string>("--player", "/player", "player id");
    f.add<std::int64_t>("--elim-tick", "/elim_tick", "elimination tick (default: first)");
    f.add<std::string>("--channel", "/channel", "color segments by this attribution channel");
    f.add<std::string>("--out", "/out", "SVG output");
    f.add<std::string>("--frames", "/frames", "frame-list JSON output");
    add_window_flags(f);
    add_screen_flags(f);
    c.body = run_render;
  }
  {
    auto& c = add_command(commands, app, "serve", "run the review service",
                          {{"verdicts", nullptr},
                           {"explanations", nullptr},
                           {"store", nullptr},
                           {"host", "127.0.0.1"},
                           {"port", 8080},
                           {"token", nullptr},
                           {"static", nullptr},
                           {"screen", screen_defaults()}});
    auto& f = *c.flags;
    f.add<std::string>("--verdicts", "/verdicts", "verdict JSONL from predict");
    f.add<std::string>("--explanations", "/explanations", "directory of <case_id>.json documents");
    f.add<std::string>("--store", "/store", "directory for the reviewer verdict log");
    f.add<std::string>("--host", "/host", "bind address");
    f.add<int>("--port", "/port", "port (0 picks a free one)");
    f.add<std::string>("--token", "/token", "shared token required in X-Aimguard-Token (or AIMGUARD_TOKEN)");
    f.add<std::string>("--static", "/static", "directory served at / (dashboard bundle)");
    add_screen_flags(f);
    // The manifest is written once the port is known, before serving.
    c.body = [](const json& cfg) {
      const auto started_at = util::utc_timestamp();
      auto result = run_serve(cfg, [&](const RunResult& r) { write_manifest(r.manifest, "serve", cfg, r, started_at, 0.0); });
      result.summary["stopped_at"] = util::utc_timestamp();
      return result;
    };
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 2;
  }
  for (auto& c : commands) {
    if (c->app->parsed()) return execute(*c);
  }
  return 2;
}

int run(const std::vector<std::string>& args) {
  std::vector<const char*> argv{"aimguard"};
  for (const auto& a : args) argv.push_back(a.c_str());
  return run(static_cast<int>(argv.size()), argv.data());
}

}  // namespace aimguard::cli
