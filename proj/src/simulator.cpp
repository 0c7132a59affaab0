#include "aimguard/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

#include <fmt/format.h>

#include "aimguard/error.hpp"

namespace aimguard::simulator {

namespace {

struct Vec {
  double x = 0.0;
  double y = 0.0;
};

Vec operator+(Vec a, Vec b) { return {a.x + b.x, a.y + b.y}; }
Vec operator-(Vec a, Vec b) { return {a.x - b.x, a.y - b.y}; }
Vec operator*(double s, Vec a) { return {s * a.x, s * a.y}; }
double norm(Vec a) { return std::hypot(a.x, a.y); }

double min_jerk(double tau) {
  tau = std::clamp(tau, 0.0, 1.0);
  return tau * tau * tau * (10.0 - 15.0 * tau + 6.0 * tau * tau);
}

double round6(double v) { return std::round(v * 1e6) / 1e6; }

// Motion constants (pixels, ticks).
constexpr double kCrosshairMargin = 60.0;
constexpr double kTargetMargin = 100.0;
constexpr double kIdleDecay = 0.85;
constexpr double kIdleNoise = 0.9;
constexpr double kFlickRate = 0.003;
constexpr double kFireRadius = 18.0;
constexpr double kHitRadius = 25.0;
constexpr int kNormalCadence = 5;
constexpr int kCheatCadence = 4;
constexpr int kEngagementTimeout = 160;

class PlayerSim {
 public:
  PlayerSim(const BehaviorProfile& profile, util::Rng& rng, std::string match_id, std::string player_id,
            trajectory::ScreenSize screen)
      : p_(profile), rng_(rng), match_id_(std::move(match_id)), player_id_(std::move(player_id)), screen_(screen) {
    c_ = {util::uniform(rng_, screen_.width * 0.3, screen_.width * 0.7),
          util::uniform(rng_, screen_.height * 0.3, screen_.height * 0.7)};
  }

  GeneratedPlayer run(int n_eliminations) {
    for (int k = 0; k < n_eliminations; ++k) {
      idle(k == 0 ? util::uniform_int(rng_, 80, 140) : util::uniform_int(rng_, 30, 90));
      switch (p_.kind) {
        case BehaviorKind::kNormal:
          engage_normal();
          break;
        case BehaviorKind::kAimbot:
          engage_aimbot(false);
          break;
        case BehaviorKind::kWallhack:
          engage_wallhack();
          break;
        case BehaviorKind::kHybrid:
          engage_aimbot(true);
          break;
      }
      idle(util::uniform_int(rng_, 40, 80));
    }
    out_.stream.player_id = player_id_;
    return std::move(out_);
  }

 private:
  // ---- world -------------------------------------------------------------

  Vec clamp_crosshair(Vec v) {
    Vec c{std::clamp(v.x, kCrosshairMargin, screen_.width - kCrosshairMargin),
          std::clamp(v.y, kCrosshairMargin, screen_.height - kCrosshairMargin)};
    if (c.x != v.x) u_.x = 0.0;
    if (c.y != v.y) u_.y = 0.0;
    return c;
  }

  Vec random_offset_point(Vec from, double lo, double hi) {
    const double d = util::uniform(rng_, lo, hi);
    const double phi = util::uniform(rng_, -std::numbers::pi, std::numbers::pi);
    return {std::clamp(from.x + d * std::cos(phi), kTargetMargin, screen_.width - kTargetMargin),
            std::clamp(from.y + d * 0.5 * std::sin(phi), kTargetMargin, screen_.height - kTargetMargin)};
  }

  void spawn_target(Vec at) {
    target_ = at;
    const double speed = util::uniform(rng_, 0.3, 2.5);
    tv_ = {util::uniform_int(rng_, 0, 1) ? speed : -speed, util::normal(rng_, 0.0, 0.2)};
  }

  // Piecewise-linear strafing with random reversals.
  void move_target() {
    if (util::uniform(rng_, 0.0, 1.0) < 0.03) tv_.x = -tv_.x;
    target_ = target_ + tv_;
    if (target_.x < kTargetMargin || target_.x > screen_.width - kTargetMargin) {
      tv_.x = -tv_.x;
      target_.x = std::clamp(target_.x, kTargetMargin, screen_.width - kTargetMargin);
    }
    if (target_.y < kTargetMargin || target_.y > screen_.height - kTargetMargin) {
      tv_.y = -tv_.y;
      target_.y = std::clamp(target_.y, kTargetMargin, screen_.height - kTargetMargin);
    }
    if (engaged_) truth_.target_path.emplace_back(target_.x, target_.y);
  }

  void emit(bool fired = false, bool hit = false, bool eliminated = false) {
    const auto [pitch, yaw] = trajectory::xy_to_pitch_yaw(c_.x, c_.y, screen_.width, screen_.height);
    ingest::TickRecord rec;
    rec.tick = tick_;
    rec.pitch = round6(pitch);
    rec.yaw = round6(yaw);
    rec.fired = fired;
    rec.eliminated = eliminated;
    rec.hit = fired && hit;
    rec.player_id = player_id_;
    rec.match_id = match_id_;
    out_.stream.ticks.push_back(std::move(rec));
    ++tick_;
  }

  // ---- phases ------------------------------------------------------------

  void idle_step() {
    if (flick_left_ > 0) {
      const double tau = 1.0 - static_cast<double>(flick_left_ - 1) / static_cast<double>(flick_len_);
      const Vec next = flick_from_ + min_jerk(tau) * (flick_to_ - flick_from_);
      u_ = next - c_;
      c_ = clamp_crosshair(next);
      --flick_left_;
      return;
    }
    if (util::uniform(rng_, 0.0, 1.0) < kFlickRate) {
      flick_from_ = c_;
      flick_to_ = clamp_crosshair(random_offset_point(c_, 80.0, 250.0));
      flick_len_ = flick_left_ = util::uniform_int(rng_, 5, 9);
      idle_step();
      return;
    }
    u_ = kIdleDecay * u_ + Vec{util::normal(rng_, 0.0, kIdleNoise), util::normal(rng_, 0.0, kIdleNoise)};
    c_ = clamp_crosshair(c_ + u_);
  }

  void idle(int ticks) {
    for (int i = 0; i < ticks; ++i) {
      idle_step();
      if (engaged_) move_target();
      emit();
    }
  }

  void begin_engagement(int reaction) {
    engaged_ = true;
    flick_left_ = 0;
    truth_ = ScenarioTruth{};
    truth_.match_id = match_id_;
    truth_.player_id = player_id_;
    truth_.profile = p_.name;
    truth_.cheater = p_.cheater();
    truth_.appearance_tick = tick_;
    truth_.reaction_delay = reaction;
    truth_.response_tick = tick_ + reaction;
    truth_.target_path.emplace_back(target_.x, target_.y);
    hits_needed_ = util::uniform_int(rng_, 1, 3);
    hits_ = 0;
    last_shot_ = -1000;
  }

  // Returns true when this tick eliminated the target.
  bool maybe_fire(int cadence, double fire_prob, double accuracy, bool force) {
    const double dist = norm(target_ - c_);
    const bool can_fire = tick_ - last_shot_ >= cadence;
    bool fired = false;
    bool hit = false;
    if (force) {
      fired = hit = true;
    } else if (can_fire && dist < kFireRadius && util::uniform(rng_, 0.0, 1.0) < fire_prob) {
      fired = true;
      hit = util::uniform(rng_, 0.0, 1.0) < accuracy * std::max(0.0, 1.0 - dist / kHitRadius);
    }
    if (fired) last_shot_ = tick_;
    if (hit) ++hits_;
    const bool eliminated = hits_ >= hits_needed_;
    if (eliminated) {
      truth_.elim_tick = tick_;
      truth_.engagement = {truth_.appearance_tick, tick_};
    }
    emit(fired, hit, eliminated);
    if (eliminated) {
      engaged_ = false;
      out_.truth.push_back(std::move(truth_));
    }
    return eliminated;
  }

  bool timed_out() const { return tick_ - truth_.appearance_tick >= kEngagementTimeout; }

  void engage_normal() {
    spawn_target(random_offset_point(c_, 120.0, 420.0));
    const int reaction = util::uniform_int(rng_, p_.reaction_min, p_.reaction_max);
    begin_engagement(reaction);
    idle_step();
    emit();  // appearance tick
    for (int i = 1; i < reaction; ++i) {
      idle_step();
      move_target();
      emit();
    }
    const double kp = util::uniform(rng_, 0.025, 0.06);
    const double zeta = util::uniform(rng_, 0.45, 0.8);
    const double kd = 2.0 * zeta * std::sqrt(kp);
    const double skill = util::uniform(rng_, 0.6, 0.95);
    while (true) {
      move_target();
      const Vec acc = kp * (target_ - c_) - kd * u_;
      u_ = u_ + acc + Vec{util::normal(rng_, 0.0, p_.motor_noise), util::normal(rng_, 0.0, p_.motor_noise)};
      c_ = clamp_crosshair(c_ + u_);
      if (maybe_fire(kNormalCadence, 0.6, skill, timed_out())) return;
    }
  }

  // Pre-positions the crosshair near where the target will appear and holds.
  void pre_aim(double slack) {
    const Vec entry = random_offset_point(c_, 120.0, 420.0);
    const double r = util::uniform(rng_, 0.0, slack);
    const double phi = util::uniform(rng_, -std::numbers::pi, std::numbers::pi);
    const Vec aim = clamp_crosshair(entry + Vec{r * std::cos(phi), r * std::sin(phi)});
    const Vec from = c_;
    const int move = util::uniform_int(rng_, 12, 22);
    for (int i = 1; i <= move; ++i) {
      const Vec next = from + min_jerk(static_cast<double>(i) / move) * (aim - from);
      u_ = next - c_;
      c_ = clamp_crosshair(next);
      emit();
    }
    const int hold = util::uniform_int(rng_, 20, 45);
    u_ = {0.0, 0.0};
    for (int i = 0; i < hold; ++i) {
      u_ = 0.5 * u_ + Vec{util::normal(rng_, 0.0, 0.12), util::normal(rng_, 0.0, 0.12)};
      c_ = clamp_crosshair(c_ + u_);
      emit();
    }
    spawn_target(entry);
  }

  void engage_wallhack() {
    pre_aim(p_.pre_aim_slack);
    const int reaction = util::uniform_int(rng_, p_.reaction_min, p_.reaction_max);
    begin_engagement(reaction);
    u_ = 0.5 * u_ + Vec{util::normal(rng_, 0.0, 0.12), util::normal(rng_, 0.0, 0.12)};
    c_ = clamp_crosshair(c_ + u_);
    emit();
    for (int i = 1; i < reaction; ++i) {
      u_ = 0.5 * u_ + Vec{util::normal(rng_, 0.0, 0.12), util::normal(rng_, 0.0, 0.12)};
      c_ = clamp_crosshair(c_ + u_);
      move_target();
      emit();
    }
    const double kp = 0.12;
    const double kd = 2.0 * 0.9 * std::sqrt(kp);
    while (true) {
      move_target();
      const Vec acc = kp * (target_ - c_) - kd * u_;
      u_ = u_ + acc + Vec{util::normal(rng_, 0.0, 0.3), util::normal(rng_, 0.0, 0.3)};
      c_ = clamp_crosshair(c_ + u_);
      if (maybe_fire(kCheatCadence, 0.9, 0.85, timed_out())) return;
    }
  }

  void engage_aimbot(bool pre_aimed) {
    if (pre_aimed) {
      pre_aim(p_.pre_aim_slack);
    } else {
      spawn_target(random_offset_point(c_, 120.0, 420.0));
    }
    const int reaction = util::uniform_int(rng_, p_.reaction_min, p_.reaction_max);
    begin_engagement(reaction);
    // Ticks before the snap starts: ordinary idle motion.
    if (reaction > 0) {
      idle_step();
      emit();
      for (int i = 1; i < reaction; ++i) {
        idle_step();
        move_target();
        emit();
      }
    }
    const int duration = util::uniform_int(rng_, p_.snap_min, p_.snap_max) +
                         static_cast<int>(std::lround(p_.smoothing * 24.0));
    const Vec from = c_;
    const std::int64_t snap_start = tick_;
    for (int i = 1; i <= duration; ++i) {
      if (i > 1 || reaction > 0) move_target();
      const Vec next = from + min_jerk(static_cast<double>(i) / duration) * (target_ - from);
      u_ = next - c_;
      c_ = clamp_crosshair(next);
      if (i < duration) {
        emit();
      } else {
        truth_.snap = std::make_pair(snap_start, tick_);
        if (maybe_fire(kCheatCadence, 1.0, 0.95, false)) return;
      }
    }
    const double follow = 1.0 - 0.7 * p_.smoothing;
    const double jitter = 0.25 + p_.smoothing * p_.motor_noise;
    while (true) {
      move_target();
      const Vec next = c_ + follow * (target_ - c_) +
                       Vec{util::normal(rng_, 0.0, jitter), util::normal(rng_, 0.0, jitter)};
      u_ = next - c_;
      c_ = clamp_crosshair(next);
      if (maybe_fire(kCheatCadence, 1.0, 0.95, timed_out())) return;
    }
  }

  const BehaviorProfile& p_;
  util::Rng& rng_;
  std::string match_id_;
  std::string player_id_;
  trajectory::ScreenSize screen_;

  std::int64_t tick_ = 0;
  Vec c_;
  Vec u_;
  Vec target_;
  Vec tv_;
  bool engaged_ = false;
  int flick_left_ = 0;
  int flick_len_ = 0;
  Vec flick_from_;
  Vec flick_to_;
  int hits_ = 0;
  int hits_needed_ = 1;
  std::int64_t last_shot_ = -1000;
  ScenarioTruth truth_;
  GeneratedPlayer out_;
};

}  // namespace

std::string_view kind_name(BehaviorKind kind) {
  switch (kind) {
    case BehaviorKind::kNormal:
      return "normal";
    case BehaviorKind::kAimbot:
      return "aimbot";
    case BehaviorKind::kWallhack:
      return "wallhack";
    case BehaviorKind::kHybrid:
      return "hybrid";
  }
  return "normal";
}

BehaviorKind parse_kind(std::string_view text) {
  if (text == "normal") return BehaviorKind::kNormal;
  if (text == "aimbot") return BehaviorKind::kAimbot;
  if (text == "wallhack") return BehaviorKind::kWallhack;
  if (text == "hybrid") return BehaviorKind::kHybrid;
  throw Error(ErrorKind::kInvalidConfig, fmt::format("unknown behavior kind '{}'", text));
}

void BehaviorProfile::validate() const {
  const bool ok = reaction_min >= 0 && reaction_min <= reaction_max && snap_min >= 1 && snap_min <= snap_max &&
                  smoothing >= 0.0 && smoothing <= 1.0 && motor_noise >= 0.0 && pre_aim_slack >= 0.0;
  if (!ok) throw Error(ErrorKind::kInvalidConfig, fmt::format("behavior profile '{}' out of range", name));
}

nlohmann::json BehaviorProfile::to_json() const {
  return {{"kind", kind_name(kind)},         {"name", name},
          {"reaction_delay", {reaction_min, reaction_max}},
          {"snap_time", {snap_min, snap_max}}, {"smoothing", smoothing},
          {"motor_noise", motor_noise},      {"pre_aim_slack", pre_aim_slack}};
}

BehaviorProfile BehaviorProfile::normal() { return BehaviorProfile{}; }

BehaviorProfile BehaviorProfile::aimbot(double smoothing) {
  BehaviorProfile p;
  p.kind = BehaviorKind::kAimbot;
  p.name = "aimbot";
  p.reaction_min = p.reaction_max = 0;
  p.smoothing = smoothing;
  p.validate();
  return p;
}

BehaviorProfile BehaviorProfile::wallhack() {
  BehaviorProfile p;
  p.kind = BehaviorKind::kWallhack;
  p.name = "wallhack";
  p.reaction_min = 2;
  p.reaction_max = 5;
  p.pre_aim_slack = 8.0;
  return p;
}

BehaviorProfile BehaviorProfile::hybrid() {
  BehaviorProfile p;
  p.kind = BehaviorKind::kHybrid;
  p.name = "hybrid";
  p.reaction_min = p.reaction_max = 0;
  p.pre_aim_slack = 40.0;
  return p;
}

BehaviorProfile BehaviorProfile::mimic(double smoothing) {
  BehaviorProfile p = aimbot(smoothing);
  p.name = "mimic";
  p.reaction_min = 10;
  p.reaction_max = 16;
  return p;
}

BehaviorProfile BehaviorProfile::named(std::string_view name, util::Rng& rng) {
  if (name == "normal") return normal();
  if (name == "aimbot") return aimbot(0.0);
  if (name == "wallhack") return wallhack();
  if (name == "hybrid") return hybrid();
  if (name == "mimic") return mimic(util::uniform(rng, 0.6, 0.9));
  throw Error(ErrorKind::kInvalidConfig, fmt::format("unknown profile '{}'", name));
}

nlohmann::json ScenarioTruth::to_json() const {
  nlohmann::json path = nlohmann::json::array();
  for (const auto& [x, y] : target_path) path.push_back({x, y});
  nlohmann::json j = {{"match_id", match_id},
                      {"player_id", player_id},
                      {"profile", profile},
                      {"cheater", cheater},
                      {"elim_tick", elim_tick},
                      {"appearance_tick", appearance_tick},
                      {"response_tick", response_tick},
                      {"reaction_delay", reaction_delay},
                      {"engagement", {engagement.first, engagement.second}},
                      {"snap", nullptr},
                      {"target_path", path}};
  if (snap) j["snap"] = {snap->first, snap->second};
  return j;
}

ScenarioTruth ScenarioTruth::from_json(const nlohmann::json& j) {
  ScenarioTruth t;
  t.match_id = j.at("match_id").get<std::string>();
  t.player_id = j.at("player_id").get<std::string>();
  t.profile = j.at("profile").get<std::string>();
  t.cheater = j.at("cheater").get<bool>();
  t.elim_tick = j.at("elim_tick").get<std::int64_t>();
  t.appearance_tick = j.at("appearance_tick").get<std::int64_t>();
  t.response_tick = j.at("response_tick").get<std::int64_t>();
  t.reaction_delay = j.at("reaction_delay").get<int>();
  t.engagement = {j.at("engagement")[0].get<std::int64_t>(), j.at("engagement")[1].get<std::int64_t>()};
  if (!j.at("snap").is_null()) t.snap = std::make_pair(j["snap"][0].get<std::int64_t>(), j["snap"][1].get<std::int64_t>());
  for (const auto& p : j.at("target_path")) t.target_path.emplace_back(p[0].get<double>(), p[1].get<double>());
  return t;
}

GeneratedPlayer gen_player(const BehaviorProfile& profile, int n_eliminations, util::Rng& rng,
                           const std::string& match_id, const std::string& player_id, trajectory::ScreenSize screen) {
  profile.validate();
  if (n_eliminations < 0) throw Error(ErrorKind::kInvalidConfig, "negative elimination count");
  PlayerSim sim(profile, rng, match_id, player_id, screen);
  return sim.run(n_eliminations);
}

nlohmann::json DatasetConfig::to_json() const {
  return {{"matches", matches},
          {"players", players},
          {"cheater_frac", cheater_frac},
          {"profile_mix", profile_mix},
          {"elims", {elims_min, elims_max}},
          {"seed", seed},
          {"match_prefix", match_prefix},
          {"screen", {screen.width, screen.height}}};
}

std::map<std::string, double> parse_profile_mix(std::string_view text) {
  std::map<std::string, double> mix;
  for (auto part : util::split(text, ',')) {
    part = util::trim(part);
    if (part.empty()) continue;
    const auto colon = part.find(':');
    const std::string name(util::trim(part.substr(0, colon)));
    double weight = 1.0;
    if (colon != std::string_view::npos) {
      const auto w = util::parse_double(util::trim(part.substr(colon + 1)));
      if (!w || *w < 0.0) throw Error(ErrorKind::kInvalidConfig, fmt::format("bad weight in '{}'", part));
      weight = *w;
    }
    util::Rng probe(0);
    BehaviorProfile::named(name, probe);  // validates the name
    mix[name] += weight;
  }
  double total = 0.0;
  for (const auto& [_, w] : mix) total += w;
  if (mix.empty() || total <= 0.0) throw Error(ErrorKind::kInvalidConfig, "profile mix has no positive weight");
  return mix;
}

ingest::LabelTable Dataset::labels() const { return ingest::collect_labels(matches); }

Dataset gen_dataset(const DatasetConfig& config) {
  if (config.matches < 1 || config.players < 1 || config.elims_min < 0 || config.elims_min > config.elims_max ||
      config.cheater_frac < 0.0 || config.cheater_frac > 1.0) {
    throw Error(ErrorKind::kInvalidConfig, "dataset config out of range");
  }
  double total_weight = 0.0;
  for (const auto& [_, w] : config.profile_mix) total_weight += w;
  const int cheaters = static_cast<int>(std::lround(config.cheater_frac * config.players));
  if (cheaters > 0 && total_weight <= 0.0) throw Error(ErrorKind::kInvalidConfig, "empty profile mix");

  Dataset out;
  for (int m = 0; m < config.matches; ++m) {
    ingest::MatchRecord match;
    match.match_id = fmt::format("{}{:04}", config.match_prefix, m + 1);
    util::Rng roster = util::make_rng(config.seed, {match.match_id, "roster"});
    std::vector<int> order(static_cast<std::size_t>(config.players));
    for (int i = 0; i < config.players; ++i) order[static_cast<std::size_t>(i)] = i;
    for (int i = 0; i < cheaters; ++i) {
      std::swap(order[static_cast<std::size_t>(i)], order[static_cast<std::size_t>(util::uniform_int(roster, i, config.players - 1))]);
    }
    std::vector<std::string> profile_of(static_cast<std::size_t>(config.players), "normal");
    for (int i = 0; i < cheaters; ++i) {
      double pick = util::uniform(roster, 0.0, total_weight);
      std::string chosen = config.profile_mix.rbegin()->first;
      for (const auto& [name, w] : config.profile_mix) {
        if (pick < w) {
          chosen = name;
          break;
        }
        pick -= w;
      }
      profile_of[static_cast<std::size_t>(order[static_cast<std::size_t>(i)])] = chosen;
    }
    for (int p = 0; p < config.players; ++p) {
      const std::string player_id = fmt::format("p{:02}", p);
      util::Rng rng = util::make_rng(config.seed, {match.match_id, player_id});
      const auto& name = profile_of[static_cast<std::size_t>(p)];
      const auto profile = BehaviorProfile::named(name, rng);
      const int n = util::uniform_int(rng, config.elims_min, config.elims_max);
      auto gen = gen_player(profile, n, rng, match.match_id, player_id, config.screen);
      match.players.push_back(std::move(gen.stream));
      match.label_map[player_id] = profile.cheater();
      out.profiles[{match.match_id, player_id}] = name;
      for (auto& t : gen.truth) out.truth.push_back(std::move(t));
    }
    out.matches.push_back(std::move(match));
  }
  return out;
}

void write_dataset(const Dataset& dataset, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  util::write_file(dir / "ticks.csv", ingest::write_tick_log(dataset.matches, ingest::LogFormat::kCsv));
  std::ostringstream labels;
  ingest::write_labels(dataset.labels(), labels);
  util::write_file(dir / "labels.csv", labels.str());
  std::string truth;
  for (const auto& t : dataset.truth) truth += t.to_json().dump() + "\n";
  util::write_file(dir / "truth.jsonl", truth);
  std::string profiles = "match_id,player_id,profile\n";
  for (const auto& [key, name] : dataset.profiles) profiles += fmt::format("{},{},{}\n", key.first, key.second, name);
  util::write_file(dir / "profiles.csv", profiles);
}

std::vector<ScenarioTruth> load_truth(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::kIo, fmt::format("cannot open {}", path.string()));
  std::vector<ScenarioTruth> out;
  std::string line;
  while (std::getline(in, line)) {
    if (util::trim(line).empty()) continue;
    out.push_back(ScenarioTruth::from_json(nlohmann::json::parse(line)));
  }
  return out;
}

// ---------------------------------------------------------------------------

AdversarialSelection select_adversarial(std::span<const features::FeatureSeries> series, std::span<const int> labels,
                                        double tolerance) {
  if (series.size() != labels.size()) {
    throw Error(ErrorKind::kLengthMismatch, fmt::format("{} series vs {} labels", series.size(), labels.size()));
  }
  std::vector<features::FeatureSeries> honest;
  std::map<std::pair<std::string, std::string>, std::size_t> slot;
  std::vector<PlayerMeans> cheaters;
  std::vector<std::size_t> counts;
  for (std::size_t i = 0; i < series.size(); ++i) {
    if (!labels[i]) {
      honest.push_back(series[i]);
      continue;
    }
    auto [it, fresh] = slot.emplace(std::make_pair(series[i].match_id, series[i].player_id), cheaters.size());
    if (fresh) {
      cheaters.push_back(PlayerMeans{series[i].match_id, series[i].player_id, {}, {}});
      counts.push_back(0);
    }
    auto& pm = cheaters[it->second];
    for (const auto& t : series[i].tuples) {
      const auto v = t.as_array();
      for (std::size_t f = 0; f < features::kNumFeatures; ++f) pm.mean[f] += v[f];
      ++counts[it->second];
    }
  }
  if (cheaters.empty()) throw Error(ErrorKind::kNoCheaters, "no cheater series to select from");

  AdversarialSelection out;
  out.non_cheater_mean = features::feature_means(honest);
  out.cheaters_considered = cheaters.size();
  for (std::size_t c = 0; c < cheaters.size(); ++c) {
    auto& pm = cheaters[c];
    if (counts[c] == 0) continue;
    for (double& v : pm.mean) v /= static_cast<double>(counts[c]);
    for (std::size_t f : kAdversarialChannels) {
      const double ref = out.non_cheater_mean[f];
      if (std::abs(pm.mean[f] - ref) <= tolerance * std::abs(ref)) pm.close_channels.push_back(f);
    }
    if (!pm.close_channels.empty()) out.selected.push_back(pm);
  }
  return out;
}

}  // namespace aimguard::simulator
