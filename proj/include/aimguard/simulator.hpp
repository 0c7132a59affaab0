#pragma once

// Synthetic tick logs for desk-scale experiments. Crosshair motion is modeled
// in screen pixels and converted to view angles through the inverse of the
// screen mapping, so every stage downstream sees ordinary ingest input.

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "aimguard/features.hpp"
#include "aimguard/ingest.hpp"
#include "aimguard/trajectory.hpp"
#include "aimguard/util.hpp"

namespace aimguard::simulator {

enum class BehaviorKind { kNormal, kAimbot, kWallhack, kHybrid };

std::string_view kind_name(BehaviorKind kind);
BehaviorKind parse_kind(std::string_view text);

struct BehaviorProfile {
  BehaviorKind kind = BehaviorKind::kNormal;
  std::string name = "normal";
  int reaction_min = 10;  // ticks between target appearance and response
  int reaction_max = 16;
  int snap_min = 1;  // aimbot/hybrid: ticks to reach the target at smoothing 0
  int snap_max = 3;
  double smoothing = 0.0;    // 0 = blatant snap, 1 = slowest and most human-like
  double motor_noise = 0.6;  // pixel std of per-tick velocity noise while aiming
  double pre_aim_slack = 8.0;  // wallhack/hybrid: max distance of the pre-aim point from the entry point

  bool cheater() const { return kind != BehaviorKind::kNormal; }
  void validate() const;
  nlohmann::json to_json() const;

  static BehaviorProfile normal();
  static BehaviorProfile aimbot(double smoothing = 0.0);
  static BehaviorProfile wallhack();
  static BehaviorProfile hybrid();
  // Smoothed aimbot with a human reaction delay.
  static BehaviorProfile mimic(double smoothing);
  // normal | aimbot | wallhack | hybrid | mimic
  static BehaviorProfile named(std::string_view name, util::Rng& rng);
};

struct ScenarioTruth {
  std::string match_id;
  std::string player_id;
  std::string profile;
  bool cheater = false;
  std::int64_t elim_tick = 0;
  std::int64_t appearance_tick = 0;
  std::int64_t response_tick = 0;  // first tick the player reacts to the target
  int reaction_delay = 0;
  std::pair<std::int64_t, std::int64_t> engagement{0, 0};
  std::optional<std::pair<std::int64_t, std::int64_t>> snap;  // aimbot/hybrid only
  // Target path during the engagement, one point per tick from appearance to elimination.
  std::vector<std::pair<double, double>> target_path;

  nlohmann::json to_json() const;
  static ScenarioTruth from_json(const nlohmann::json& j);
};

struct GeneratedPlayer {
  ingest::PlayerStream stream;
  std::vector<ScenarioTruth> truth;
};

GeneratedPlayer gen_player(const BehaviorProfile& profile, int n_eliminations, util::Rng& rng,
                           const std::string& match_id, const std::string& player_id,
                           trajectory::ScreenSize screen = {});

struct DatasetConfig {
  int matches = 20;
  int players = 10;
  double cheater_frac = 0.1;
  std::map<std::string, double> profile_mix{{"aimbot", 1.0}, {"wallhack", 1.0}, {"hybrid", 1.0}};
  int elims_min = 2;
  int elims_max = 5;
  std::uint64_t seed = 0;
  std::string match_prefix = "m";
  trajectory::ScreenSize screen;

  nlohmann::json to_json() const;
};

// "aimbot:2,wallhack:1" -> weights.
std::map<std::string, double> parse_profile_mix(std::string_view text);

struct Dataset {
  std::vector<ingest::MatchRecord> matches;
  std::vector<ScenarioTruth> truth;
  std::map<std::pair<std::string, std::string>, std::string> profiles;  // (match, player) -> profile name

  ingest::LabelTable labels() const;
};

Dataset gen_dataset(const DatasetConfig& config);

// ticks.csv, labels.csv, truth.jsonl
void write_dataset(const Dataset& dataset, const std::filesystem::path& dir);
std::vector<ScenarioTruth> load_truth(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Adversarial subset

// Channels compared by select_adversarial (t and I_e are excluded).
inline constexpr std::array<std::size_t, 6> kAdversarialChannels = {
    features::kFired, features::kVx, features::kVy, features::kAx, features::kAy, features::kTheta};

struct PlayerMeans {
  std::string match_id;
  std::string player_id;
  features::FeatureVector mean{};
  std::vector<std::size_t> close_channels;  // channels within tolerance
};

struct AdversarialSelection {
  features::FeatureVector non_cheater_mean{};
  std::vector<PlayerMeans> selected;
  std::size_t cheaters_considered = 0;
};

// A cheater qualifies when its per-match mean on at least one compared
// channel lies within ±tolerance (relative) of the non-cheater mean.
AdversarialSelection select_adversarial(std::span<const features::FeatureSeries> series, std::span<const int> labels,
                                        double tolerance = 0.10);

}  // namespace aimguard::simulator
