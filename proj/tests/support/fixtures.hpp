#pragma once

#include <stdlib.h>

#include <filesystem>
#include <set>
#include <string>
#include <vector>

#include "aimguard/ingest.hpp"
#include "aimguard/util.hpp"
#include "oracles.hpp"

namespace fixture {

// Random-walk player stream over ticks [first, first + count) with
// eliminations at the given ticks.
inline aimguard::ingest::PlayerStream stream(const std::string& player, const std::string& match, std::int64_t first,
                                             std::size_t count, const std::set<std::int64_t>& eliminations,
                                             std::uint64_t seed) {
  auto rng = aimguard::util::make_rng(seed, {"fixture", match, player});
  aimguard::ingest::PlayerStream s;
  s.player_id = player;
  double pitch = aimguard::util::uniform(rng, -30.0, 30.0);
  double yaw = aimguard::util::uniform(rng, -150.0, 150.0);
  for (std::size_t i = 0; i < count; ++i) {
    aimguard::ingest::TickRecord r;
    r.tick = first + static_cast<std::int64_t>(i);
    pitch = std::clamp(pitch + aimguard::util::normal(rng, 0.0, 0.4), -89.0, 89.0);
    yaw = std::clamp(yaw + aimguard::util::normal(rng, 0.0, 0.8), -179.0, 179.0);
    r.pitch = pitch;
    r.yaw = yaw;
    r.fired = aimguard::util::uniform(rng, 0.0, 1.0) < 0.1;
    r.eliminated = eliminations.contains(r.tick);
    r.player_id = player;
    r.match_id = match;
    s.ticks.push_back(r);
  }
  return s;
}

inline std::vector<oracle::RawTick> raw(const std::vector<aimguard::ingest::TickRecord>& ticks) {
  std::vector<oracle::RawTick> out;
  for (const auto& t : ticks) out.push_back({t.tick, t.pitch, t.yaw, t.fired, t.eliminated});
  return out;
}

class TempDir {
 public:
  TempDir() {
    std::string pattern = (std::filesystem::temp_directory_path() / "aimguard-test-XXXXXX").string();
    path_ = ::mkdtemp(pattern.data());
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

}  // namespace fixture
