#pragma once

// Normalized tick-log ingestion.
//
// CSV layout (header required, LF line endings, UTF-8):
//   tick,pitch,yaw,fired,eliminated,hit,player_id,match_id
// `hit` may be empty. JSONL carries one object per row with the same keys.
// Labels live in a separate CSV: match_id,player_id,is_cheater.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace aimguard::ingest {

inline constexpr double kPitchLimit = 90.0;
inline constexpr double kYawLimit = 180.0;
inline constexpr int kDefaultTickRate = 64;

struct TickRecord {
  std::int64_t tick = 0;
  double pitch = 0.0;  // degrees, [-90, 90]
  double yaw = 0.0;    // degrees, [-180, 180]
  bool fired = false;
  bool eliminated = false;
  std::optional<bool> hit;
  std::string player_id;
  std::string match_id;

  bool operator==(const TickRecord&) const = default;
};

struct PlayerStream {
  std::string player_id;
  std::vector<TickRecord> ticks;  // sorted by tick; duplicates kept

  bool operator==(const PlayerStream&) const = default;
};

struct DuplicateTick {
  std::string player_id;
  std::int64_t tick = 0;

  bool operator==(const DuplicateTick&) const = default;
};

struct MatchRecord {
  std::string match_id;
  std::vector<PlayerStream> players;
  std::map<std::string, bool> label_map;  // player_id -> cheater
  int tick_rate = kDefaultTickRate;
  std::vector<DuplicateTick> warnings;

  const PlayerStream* find_player(std::string_view player_id) const;
  std::optional<bool> label(std::string_view player_id) const;
  bool has_hit_column() const;

  bool operator==(const MatchRecord&) const = default;
};

enum class LogFormat { kCsv, kJsonl };

LogFormat format_from_path(const std::filesystem::path& path);

// Parses a whole tick log. Range violations and malformed rows throw; duplicate
// ticks are recorded on the owning MatchRecord's `warnings`.
std::vector<MatchRecord> parse_tick_log(std::istream& source, LogFormat format);
std::vector<MatchRecord> parse_tick_log(std::string_view text, LogFormat format);
std::vector<MatchRecord> load_tick_log(const std::filesystem::path& path);

void write_tick_log(std::span<const MatchRecord> matches, LogFormat format, std::ostream& out);
std::string write_tick_log(std::span<const MatchRecord> matches, LogFormat format);

void validate_angles(double pitch, double yaw, std::size_t line = 0);

using LabelTable = std::map<std::pair<std::string, std::string>, bool>;  // (match, player)

LabelTable parse_labels(std::istream& source);
LabelTable load_labels(const std::filesystem::path& path);
void write_labels(const LabelTable& labels, std::ostream& out);
void apply_labels(std::span<MatchRecord> matches, const LabelTable& labels);
LabelTable collect_labels(std::span<const MatchRecord> matches);

}  // namespace aimguard::ingest
