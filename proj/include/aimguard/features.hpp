#pragma once

// Kinematic feature tuples [t, I_f, I_e, v_x, v_y, a_x, a_y, theta] built from
// backward differences over a raw window (dt measured in ticks).

#include <array>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "aimguard/trajectory.hpp"

namespace aimguard::features {

inline constexpr std::size_t kNumFeatures = 8;

enum Channel : std::size_t { kT = 0, kFired, kEliminated, kVx, kVy, kAx, kAy, kTheta };

inline constexpr std::array<std::string_view, kNumFeatures> kFeatureNames = {
    "t", "I_f", "I_e", "v_x", "v_y", "a_x", "a_y", "theta"};

using FeatureVector = std::array<double, kNumFeatures>;

struct FeatureTuple {
  std::int64_t t = 0;
  bool fired = false;
  bool eliminated = false;
  double v_x = 0.0;  // pixels / tick
  double v_y = 0.0;
  double a_x = 0.0;  // pixels / tick^2
  double a_y = 0.0;
  double theta = 0.0;  // radians / tick, (-pi, pi]

  FeatureVector as_array() const;
  bool operator==(const FeatureTuple&) const = default;
};

struct FeatureSeries {
  std::vector<FeatureTuple> tuples;
  std::string player_id;
  std::string match_id;
  std::int64_t elim_tick = 0;

  std::size_t size() const { return tuples.size(); }
  bool operator==(const FeatureSeries&) const = default;
};

// Wraps an angle difference into (-pi, pi].
double wrap_angle(double radians);
// atan2 with the stationary convention heading(0, 0) == 0.
double heading(double vx, double vy);

FeatureSeries compute_features(const trajectory::RawWindow& window);

// Mean of every channel over all ticks of the series accepted by `filter`.
FeatureVector feature_means(std::span<const FeatureSeries> dataset,
                            const std::function<bool(const FeatureSeries&)>& filter = {});

// Feature dump CSV:
//   t,I_f,I_e,v_x,v_y,a_x,a_y,theta,player_id,match_id,elim_tick
// A header naming the angular column `theta_deg` declares degrees; values are
// converted to radians on import.
void write_feature_dump(std::span<const FeatureSeries> series, std::ostream& out);
std::vector<FeatureSeries> read_feature_dump(std::istream& in);

}  // namespace aimguard::features
