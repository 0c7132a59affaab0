#include "aimguard/ingest.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <sstream>
#include <unordered_map>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "aimguard/error.hpp"
#include "aimguard/util.hpp"

namespace aimguard::ingest {
namespace {

constexpr std::string_view kCsvHeader = "tick,pitch,yaw,fired,eliminated,hit,player_id,match_id";
constexpr std::string_view kLabelHeader = "match_id,player_id,is_cheater";

bool valid_id(std::string_view id) {
  return !id.empty() && id.find_first_of(",\"\n\r") == std::string_view::npos;
}

class MatchBuilder {
 public:
  void add(TickRecord rec) {
    auto [mit, minserted] = match_index_.try_emplace(rec.match_id, matches_.size());
    if (minserted) {
      matches_.emplace_back();
      matches_.back().match_id = rec.match_id;
      player_index_.emplace_back();
    }
    MatchRecord& match = matches_[mit->second];
    auto& pindex = player_index_[mit->second];
    auto [pit, pinserted] = pindex.try_emplace(rec.player_id, match.players.size());
    if (pinserted) {
      match.players.push_back(PlayerStream{rec.player_id, {}});
    }
    match.players[pit->second].ticks.push_back(std::move(rec));
  }

  std::vector<MatchRecord> finish() && {
    for (auto& match : matches_) {
      for (auto& player : match.players) {
        std::stable_sort(player.ticks.begin(), player.ticks.end(),
                         [](const TickRecord& a, const TickRecord& b) { return a.tick < b.tick; });
        for (std::size_t i = 1; i < player.ticks.size(); ++i) {
          if (player.ticks[i].tick == player.ticks[i - 1].tick &&
              (i < 2 || player.ticks[i - 2].tick != player.ticks[i].tick)) {
            match.warnings.push_back(DuplicateTick{player.player_id, player.ticks[i].tick});
          }
        }
      }
    }
    return std::move(matches_);
  }

 private:
  std::vector<MatchRecord> matches_;
  std::unordered_map<std::string, std::size_t> match_index_;
  std::vector<std::unordered_map<std::string, std::size_t>> player_index_;
};

TickRecord parse_csv_row(std::string_view line, std::size_t line_no) {
  const auto fields = util::split(line, ',');
  if (fields.size() != 8) {
    throw MalformedRow(line_no, fmt::format("expected 8 fields, got {}", fields.size()));
  }
  TickRecord rec;
  auto tick = util::parse_int(fields[0]);
  if (!tick) throw MalformedRow(line_no, "tick is not an integer");
  rec.tick = *tick;
  auto pitch = util::parse_double(fields[1]);
  if (!pitch) throw MalformedRow(line_no, "pitch is not a number");
  auto yaw = util::parse_double(fields[2]);
  if (!yaw) throw MalformedRow(line_no, "yaw is not a number");
  validate_angles(*pitch, *yaw, line_no);
  rec.pitch = *pitch;
  rec.yaw = *yaw;
  auto fired = util::parse_bool(fields[3]);
  if (!fired) throw MalformedRow(line_no, "fired is not a boolean");
  auto eliminated = util::parse_bool(fields[4]);
  if (!eliminated) throw MalformedRow(line_no, "eliminated is not a boolean");
  rec.fired = *fired;
  rec.eliminated = *eliminated;
  if (!util::trim(fields[5]).empty()) {
    auto hit = util::parse_bool(fields[5]);
    if (!hit) throw MalformedRow(line_no, "hit is not a boolean");
    rec.hit = *hit;
  }
  const auto player = util::trim(fields[6]);
  const auto match = util::trim(fields[7]);
  if (player.empty()) throw MalformedRow(line_no, "empty player_id");
  if (match.empty()) throw MalformedRow(line_no, "empty match_id");
  rec.player_id = std::string(player);
  rec.match_id = std::string(match);
  return rec;
}

TickRecord parse_json_row(std::string_view line, std::size_t line_no) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(line);
  } catch (const nlohmann::json::parse_error& e) {
    throw MalformedRow(line_no, e.what());
  }
  if (!j.is_object()) throw MalformedRow(line_no, "row is not an object");
  auto need = [&](const char* key) -> const nlohmann::json& {
    auto it = j.find(key);
    if (it == j.end()) throw MalformedRow(line_no, fmt::format("missing field '{}'", key));
    return *it;
  };
  TickRecord rec;
  try {
    const auto& tick = need("tick");
    if (!tick.is_number_integer()) throw MalformedRow(line_no, "tick is not an integer");
    rec.tick = tick.get<std::int64_t>();
    const auto& pitch = need("pitch");
    const auto& yaw = need("yaw");
    if (!pitch.is_number() || !yaw.is_number()) throw MalformedRow(line_no, "angle is not a number");
    validate_angles(pitch.get<double>(), yaw.get<double>(), line_no);
    rec.pitch = pitch.get<double>();
    rec.yaw = yaw.get<double>();
    const auto& fired = need("fired");
    const auto& eliminated = need("eliminated");
    if (!fired.is_boolean() || !eliminated.is_boolean()) throw MalformedRow(line_no, "flag is not a boolean");
    rec.fired = fired.get<bool>();
    rec.eliminated = eliminated.get<bool>();
    if (auto it = j.find("hit"); it != j.end() && !it->is_null()) {
      if (!it->is_boolean()) throw MalformedRow(line_no, "hit is not a boolean");
      rec.hit = it->get<bool>();
    }
    const auto& player = need("player_id");
    const auto& match = need("match_id");
    if (!player.is_string() || !match.is_string()) throw MalformedRow(line_no, "id is not a string");
    rec.player_id = player.get<std::string>();
    rec.match_id = match.get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw MalformedRow(line_no, e.what());
  }
  if (rec.player_id.empty() || rec.match_id.empty()) throw MalformedRow(line_no, "empty id");
  return rec;
}

std::string bool_text(bool b) { return b ? "true" : "false"; }

}  // namespace

const PlayerStream* MatchRecord::find_player(std::string_view player_id) const {
  for (const auto& p : players) {
    if (p.player_id == player_id) return &p;
  }
  return nullptr;
}

std::optional<bool> MatchRecord::label(std::string_view player_id) const {
  auto it = label_map.find(std::string(player_id));
  if (it == label_map.end()) return std::nullopt;
  return it->second;
}

bool MatchRecord::has_hit_column() const {
  for (const auto& p : players) {
    for (const auto& t : p.ticks) {
      if (t.hit.has_value()) return true;
    }
  }
  return false;
}

LogFormat format_from_path(const std::filesystem::path& path) {
  const auto ext = path.extension().string();
  if (ext == ".jsonl" || ext == ".ndjson") return LogFormat::kJsonl;
  return LogFormat::kCsv;
}

void validate_angles(double pitch, double yaw, std::size_t line) {
  if (!std::isfinite(pitch) || pitch < -kPitchLimit || pitch > kPitchLimit) {
    throw RangeViolation("pitch", pitch, line);
  }
  if (!std::isfinite(yaw) || yaw < -kYawLimit || yaw > kYawLimit) {
    throw RangeViolation("yaw", yaw, line);
  }
}

std::vector<MatchRecord> parse_tick_log(std::istream& source, LogFormat format) {
  MatchBuilder builder;
  std::string line;
  std::size_t line_no = 0;
  bool header_seen = false;
  while (std::getline(source, line)) {
    ++line_no;
    std::string_view view = line;
    if (!view.empty() && view.back() == '\r') view.remove_suffix(1);
    if (format == LogFormat::kCsv && !header_seen) {
      if (util::trim(view) != kCsvHeader) {
        throw MalformedRow(line_no, fmt::format("expected header '{}'", kCsvHeader));
      }
      header_seen = true;
      continue;
    }
    if (util::trim(view).empty()) continue;
    builder.add(format == LogFormat::kCsv ? parse_csv_row(view, line_no) : parse_json_row(view, line_no));
  }
  if (format == LogFormat::kCsv && !header_seen) {
    throw MalformedRow(1, "missing header");
  }
  return std::move(builder).finish();
}

std::vector<MatchRecord> parse_tick_log(std::string_view text, LogFormat format) {
  std::istringstream in{std::string(text)};
  return parse_tick_log(in, format);
}

std::vector<MatchRecord> load_tick_log(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::kIo, fmt::format("cannot open {}", path.string()));
  return parse_tick_log(in, format_from_path(path));
}

void write_tick_log(std::span<const MatchRecord> matches, LogFormat format, std::ostream& out) {
  if (format == LogFormat::kCsv) out << kCsvHeader << '\n';
  for (const auto& match : matches) {
    for (const auto& player : match.players) {
      for (const auto& t : player.ticks) {
        if (format == LogFormat::kCsv) {
          if (!valid_id(t.player_id) || !valid_id(t.match_id)) {
            throw Error(ErrorKind::kValidation, "ids must be non-empty and free of commas/quotes");
          }
          out << t.tick << ',' << util::format_fixed(t.pitch) << ',' << util::format_fixed(t.yaw) << ','
              << bool_text(t.fired) << ',' << bool_text(t.eliminated) << ','
              << (t.hit ? bool_text(*t.hit) : std::string()) << ',' << t.player_id << ',' << t.match_id
              << '\n';
        } else {
          out << "{\"tick\":" << t.tick << ",\"pitch\":" << util::format_fixed(t.pitch)
              << ",\"yaw\":" << util::format_fixed(t.yaw) << ",\"fired\":" << bool_text(t.fired)
              << ",\"eliminated\":" << bool_text(t.eliminated)
              << ",\"hit\":" << (t.hit ? bool_text(*t.hit) : std::string("null"))
              << ",\"player_id\":" << nlohmann::json(t.player_id).dump()
              << ",\"match_id\":" << nlohmann::json(t.match_id).dump() << "}\n";
        }
      }
    }
  }
}

std::string write_tick_log(std::span<const MatchRecord> matches, LogFormat format) {
  std::ostringstream out;
  write_tick_log(matches, format, out);
  return out.str();
}

LabelTable parse_labels(std::istream& source) {
  LabelTable labels;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(source, line)) {
    ++line_no;
    std::string_view view = util::trim(line);
    if (line_no == 1) {
      if (view != kLabelHeader) {
        throw MalformedRow(line_no, fmt::format("expected header '{}'", kLabelHeader));
      }
      continue;
    }
    if (view.empty()) continue;
    const auto fields = util::split(view, ',');
    if (fields.size() != 3) throw MalformedRow(line_no, "expected 3 fields");
    auto label = util::parse_bool(fields[2]);
    if (!label) throw MalformedRow(line_no, "is_cheater is not a boolean");
    labels[{std::string(util::trim(fields[0])), std::string(util::trim(fields[1]))}] = *label;
  }
  return labels;
}

LabelTable load_labels(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::kIo, fmt::format("cannot open {}", path.string()));
  return parse_labels(in);
}

void write_labels(const LabelTable& labels, std::ostream& out) {
  out << kLabelHeader << '\n';
  for (const auto& [key, value] : labels) {
    out << key.first << ',' << key.second << ',' << bool_text(value) << '\n';
  }
}

void apply_labels(std::span<MatchRecord> matches, const LabelTable& labels) {
  for (auto& match : matches) {
    for (const auto& player : match.players) {
      auto it = labels.find({match.match_id, player.player_id});
      if (it != labels.end()) match.label_map[player.player_id] = it->second;
    }
  }
}

LabelTable collect_labels(std::span<const MatchRecord> matches) {
  LabelTable out;
  for (const auto& match : matches) {
    for (const auto& [player, label] : match.label_map) out[{match.match_id, player}] = label;
  }
  return out;
}

}  // namespace aimguard::ingest
