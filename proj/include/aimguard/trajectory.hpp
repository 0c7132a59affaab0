#pragma once

// Screen-space reconstruction of the crosshair and elimination-window cutting.
//
// Orientation: x grows with yaw (left to right), y grows downward (screen
// convention), so looking up moves the point toward y = 0. Rendering recenters
// a window so its elimination point sits at the screen center; features never
// see that shift.

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "aimguard/ingest.hpp"

namespace aimguard::trajectory {

struct ScreenSize {
  double width = 1920.0;
  double height = 1080.0;
};

struct ScreenPoint {
  double x = 0.0;
  double y = 0.0;
  std::int64_t tick = 0;
  bool fired = false;
  bool eliminated = false;

  bool operator==(const ScreenPoint&) const = default;
};

std::pair<double, double> pitch_yaw_to_xy(double pitch, double yaw, double width, double height);
// Inverse mapping; returns (pitch, yaw).
std::pair<double, double> xy_to_pitch_yaw(double x, double y, double width, double height);

struct WindowSpec {
  int m = 64;  // ticks before the elimination (the elimination tick counts toward m)
  int n = 32;  // ticks after the elimination

  int length() const { return m + n; }
};

// m + n + 1 consecutive points: the leading point only feeds the first
// backward difference and is dropped by feature construction.
struct RawWindow {
  std::vector<ScreenPoint> points;
  std::size_t elim_tick_index = 0;
  std::string player_id;
  std::string match_id;

  std::int64_t elim_tick() const { return points.at(elim_tick_index).tick; }
};

struct CleansingReport {
  bool no_elimination_player = false;
  std::size_t eliminations = 0;
  std::size_t accepted = 0;
  std::size_t truncated = 0;          // stream ends (or starts) inside the window
  std::size_t glitch_missing = 0;     // gap in the tick sequence
  std::size_t glitch_duplicate = 0;   // repeated tick inside the window

  std::size_t rejected() const { return truncated + glitch_missing + glitch_duplicate; }
  CleansingReport& operator+=(const CleansingReport& other);
};

struct WindowExtraction {
  std::vector<RawWindow> windows;
  CleansingReport report;
};

WindowExtraction extract_windows(const ingest::PlayerStream& stream, const std::string& match_id,
                                 WindowSpec spec, ScreenSize screen = {});

// Vector drawing of a window, recentered on the elimination point.
struct Drawing {
  double width = 0.0;
  double height = 0.0;
  std::vector<std::pair<double, double>> polyline;
  std::vector<std::string> segment_colors;  // one per segment; empty without overlay
  std::vector<std::pair<double, double>> fire_markers;
  std::pair<double, double> elimination_marker{0.0, 0.0};
};

// `point_values`, when given, holds one value per point; segment i (points i
// to i+1) is colored by point_values[i + 1].
Drawing render_trajectory(std::span<const ScreenPoint> points, std::size_t elim_index, double width,
                          double height, std::span<const double> point_values = {});
Drawing render_trajectory(const RawWindow& window, ScreenSize screen = {});

// Symmetric diverging scale: -max_abs -> blue, 0 -> white, +max_abs -> red.
std::string diverging_color(double value, double max_abs);
// Scalar position of a color produced by diverging_color on its scale
// (red minus blue channel), monotone in the input value.
int color_scale_position(const std::string& hex_color);

std::string to_svg(const Drawing& drawing);

// Frame list consumed by the dashboard: one entry per point, recentered.
// `attribution` optionally maps channel name -> per-point values.
nlohmann::json frame_list(std::span<const ScreenPoint> points, std::size_t elim_index, double width,
                          double height,
                          const std::vector<std::pair<std::string, std::vector<double>>>& attribution = {});

}  // namespace aimguard::trajectory
