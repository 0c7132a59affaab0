#include "aimguard/trajectory.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include <fmt/format.h>

#include "aimguard/error.hpp"

namespace aimguard::trajectory {

std::pair<double, double> pitch_yaw_to_xy(double pitch, double yaw, double width, double height) {
  if (!(width > 0.0) || !(height > 0.0)) {
    throw Error(ErrorKind::kDomainError, "screen dimensions must be positive");
  }
  if (!(pitch >= -90.0 && pitch <= 90.0)) throw Error(ErrorKind::kDomainError, fmt::format("pitch {}", pitch));
  if (!(yaw >= -180.0 && yaw <= 180.0)) throw Error(ErrorKind::kDomainError, fmt::format("yaw {}", yaw));
  const double x = ((yaw + 180.0) / 360.0) * width;
  double y = ((pitch + 90.0) / 180.0) * height;
  y = height - y;
  return {x, y};
}

std::pair<double, double> xy_to_pitch_yaw(double x, double y, double width, double height) {
  if (!(width > 0.0) || !(height > 0.0)) {
    throw Error(ErrorKind::kDomainError, "screen dimensions must be positive");
  }
  if (!(x >= 0.0 && x <= width) || !(y >= 0.0 && y <= height)) {
    throw Error(ErrorKind::kDomainError, fmt::format("point ({}, {}) off screen", x, y));
  }
  const double yaw = x / width * 360.0 - 180.0;
  const double pitch = (height - y) / height * 180.0 - 90.0;
  return {std::clamp(pitch, -90.0, 90.0), std::clamp(yaw, -180.0, 180.0)};
}

CleansingReport& CleansingReport::operator+=(const CleansingReport& other) {
  // no_elimination_player is per player; callers count those separately.
  eliminations += other.eliminations;
  accepted += other.accepted;
  truncated += other.truncated;
  glitch_missing += other.glitch_missing;
  glitch_duplicate += other.glitch_duplicate;
  return *this;
}

WindowExtraction extract_windows(const ingest::PlayerStream& stream, const std::string& match_id,
                                 WindowSpec spec, ScreenSize screen) {
  if (spec.m < 1 || spec.n < 1) {
    throw Error(ErrorKind::kInvalidConfig, "window split requires m >= 1 and n >= 1");
  }
  WindowExtraction out;
  const auto& ticks = stream.ticks;
  const auto by_tick = [](const ingest::TickRecord& rec, std::int64_t t) { return rec.tick < t; };

  for (std::size_t j = 0; j < ticks.size(); ++j) {
    if (!ticks[j].eliminated) continue;
    // One event per elimination tick even if the row is duplicated.
    if (j > 0 && ticks[j - 1].tick == ticks[j].tick && ticks[j - 1].eliminated) continue;
    ++out.report.eliminations;

    const std::int64_t e = ticks[j].tick;
    const std::int64_t lo = e - spec.m;
    const std::int64_t hi = e + spec.n;
    if (ticks.front().tick > lo || ticks.back().tick < hi) {
      ++out.report.truncated;
      continue;
    }
    const auto first = std::lower_bound(ticks.begin(), ticks.end(), lo, by_tick);
    const auto last = std::lower_bound(ticks.begin(), ticks.end(), hi + 1, by_tick);
    bool duplicate = false;
    for (auto it = first; it != last && std::next(it) != last; ++it) {
      if (std::next(it)->tick == it->tick) {
        duplicate = true;
        break;
      }
    }
    if (duplicate) {
      ++out.report.glitch_duplicate;
      continue;
    }
    const auto count = static_cast<std::size_t>(std::distance(first, last));
    if (count != static_cast<std::size_t>(spec.m + spec.n + 1)) {
      ++out.report.glitch_missing;
      continue;
    }

    RawWindow window;
    window.player_id = stream.player_id;
    window.match_id = match_id;
    window.elim_tick_index = static_cast<std::size_t>(spec.m);
    window.points.reserve(count);
    for (auto it = first; it != last; ++it) {
      const auto [x, y] = pitch_yaw_to_xy(it->pitch, it->yaw, screen.width, screen.height);
      window.points.push_back(ScreenPoint{x, y, it->tick, it->fired, it->eliminated});
    }
    out.windows.push_back(std::move(window));
    ++out.report.accepted;
  }
  out.report.no_elimination_player = out.report.eliminations == 0;
  return out;
}

std::string diverging_color(double value, double max_abs) {
  double t = 0.0;
  if (max_abs > 0.0 && std::isfinite(value)) t = std::clamp(value / max_abs, -1.0, 1.0);
  int r = 255;
  int g = 255;
  int b = 255;
  if (t >= 0.0) {
    g = b = static_cast<int>(std::lround(255.0 * (1.0 - t)));
  } else {
    r = g = static_cast<int>(std::lround(255.0 * (1.0 + t)));
  }
  return fmt::format("#{:02x}{:02x}{:02x}", r, g, b);
}

int color_scale_position(const std::string& hex_color) {
  if (hex_color.size() != 7 || hex_color[0] != '#') {
    throw Error(ErrorKind::kValidation, fmt::format("not a #rrggbb color: {}", hex_color));
  }
  const int r = std::stoi(hex_color.substr(1, 2), nullptr, 16);
  const int b = std::stoi(hex_color.substr(5, 2), nullptr, 16);
  return r - b;
}

Drawing render_trajectory(std::span<const ScreenPoint> points, std::size_t elim_index, double width,
                          double height, std::span<const double> point_values) {
  if (points.empty()) throw Error(ErrorKind::kWindowTooShort, "nothing to render");
  if (elim_index >= points.size()) throw Error(ErrorKind::kShapeMismatch, "elimination index out of range");
  if (!point_values.empty() && point_values.size() != points.size()) {
    throw Error(ErrorKind::kShapeMismatch, "overlay length differs from point count");
  }
  Drawing d;
  d.width = width;
  d.height = height;
  const double dx = width / 2.0 - points[elim_index].x;
  const double dy = height / 2.0 - points[elim_index].y;
  d.polyline.reserve(points.size());
  for (const auto& p : points) {
    d.polyline.emplace_back(p.x + dx, p.y + dy);
    if (p.fired) d.fire_markers.emplace_back(p.x + dx, p.y + dy);
  }
  d.elimination_marker = d.polyline[elim_index];
  if (!point_values.empty()) {
    double max_abs = 0.0;
    for (double v : point_values.subspan(1)) max_abs = std::max(max_abs, std::abs(v));
    for (std::size_t i = 0; i + 1 < points.size(); ++i) {
      d.segment_colors.push_back(diverging_color(point_values[i + 1], max_abs));
    }
  }
  return d;
}

Drawing render_trajectory(const RawWindow& window, ScreenSize screen) {
  return render_trajectory(window.points, window.elim_tick_index, screen.width, screen.height);
}

std::string to_svg(const Drawing& d) {
  std::ostringstream svg;
  svg << fmt::format(
      "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{0}\" height=\"{1}\" viewBox=\"0 0 {0} {1}\">\n",
      d.width, d.height);
  svg << fmt::format("<rect width=\"{}\" height=\"{}\" fill=\"#1e1e1e\"/>\n", d.width, d.height);
  for (std::size_t i = 0; i + 1 < d.polyline.size(); ++i) {
    const auto& a = d.polyline[i];
    const auto& b = d.polyline[i + 1];
    const std::string color = d.segment_colors.empty() ? "#f0c020" : d.segment_colors[i];
    svg << fmt::format(
        "<line class=\"seg\" x1=\"{:.3f}\" y1=\"{:.3f}\" x2=\"{:.3f}\" y2=\"{:.3f}\" stroke=\"{}\" "
        "stroke-width=\"2\"/>\n",
        a.first, a.second, b.first, b.second, color);
  }
  for (const auto& [x, y] : d.fire_markers) {
    svg << fmt::format(
        "<polygon class=\"fire\" points=\"{:.3f},{:.3f} {:.3f},{:.3f} {:.3f},{:.3f}\" fill=\"#40c0ff\"/>\n", x,
        y - 6.0, x - 5.0, y + 4.0, x + 5.0, y + 4.0);
  }
  const auto [ex, ey] = d.elimination_marker;
  svg << fmt::format(
      "<g class=\"elimination\" stroke=\"#ff3030\" stroke-width=\"3\">"
      "<line x1=\"{:.3f}\" y1=\"{:.3f}\" x2=\"{:.3f}\" y2=\"{:.3f}\"/>"
      "<line x1=\"{:.3f}\" y1=\"{:.3f}\" x2=\"{:.3f}\" y2=\"{:.3f}\"/></g>\n",
      ex - 7, ey - 7, ex + 7, ey + 7, ex - 7, ey + 7, ex + 7, ey - 7);
  svg << "</svg>\n";
  return svg.str();
}

nlohmann::json frame_list(std::span<const ScreenPoint> points, std::size_t elim_index, double width,
                          double height,
                          const std::vector<std::pair<std::string, std::vector<double>>>& attribution) {
  const Drawing d = render_trajectory(points, elim_index, width, height);
  for (const auto& [name, values] : attribution) {
    if (values.size() != points.size()) {
      throw Error(ErrorKind::kShapeMismatch, fmt::format("attribution '{}' length mismatch", name));
    }
  }
  nlohmann::json frames = nlohmann::json::array();
  for (std::size_t i = 0; i < points.size(); ++i) {
    nlohmann::json f{{"tick", points[i].tick},
                     {"x", d.polyline[i].first},
                     {"y", d.polyline[i].second},
                     {"fired", points[i].fired},
                     {"eliminated", points[i].eliminated}};
    nlohmann::json attr = nlohmann::json::object();
    for (const auto& [name, values] : attribution) attr[name] = values[i];
    f["attribution"] = std::move(attr);
    frames.push_back(std::move(f));
  }
  return nlohmann::json{{"width", width},
                        {"height", height},
                        {"elimination_index", elim_index},
                        {"frames", std::move(frames)}};
}

}  // namespace aimguard::trajectory
