#include "aimguard/features.hpp"

#include <cmath>
#include <istream>
#include <map>
#include <numbers>
#include <ostream>

#include <fmt/format.h>

#include "aimguard/error.hpp"
#include "aimguard/util.hpp"

namespace aimguard::features {

FeatureVector FeatureTuple::as_array() const {
  return {static_cast<double>(t), fired ? 1.0 : 0.0, eliminated ? 1.0 : 0.0, v_x, v_y, a_x, a_y, theta};
}

double wrap_angle(double radians) {
  double r = std::remainder(radians, 2.0 * std::numbers::pi);
  if (r <= -std::numbers::pi) r += 2.0 * std::numbers::pi;
  return r;
}

double heading(double vx, double vy) {
  if (vx == 0.0 && vy == 0.0) return 0.0;
  return std::atan2(vy, vx);
}

FeatureSeries compute_features(const trajectory::RawWindow& window) {
  const auto& pts = window.points;
  if (pts.size() < 2) {
    throw Error(ErrorKind::kWindowTooShort, fmt::format("window has {} points, need at least 2", pts.size()));
  }
  FeatureSeries out;
  out.player_id = window.player_id;
  out.match_id = window.match_id;
  out.elim_tick = window.elim_tick();
  out.tuples.reserve(pts.size() - 1);

  double prev_vx = 0.0;
  double prev_vy = 0.0;
  double prev_alpha = 0.0;
  for (std::size_t i = 1; i < pts.size(); ++i) {
    const double dt = static_cast<double>(pts[i].tick - pts[i - 1].tick);
    if (!(dt > 0.0)) throw Error(ErrorKind::kWindowTooShort, "window ticks are not increasing");
    FeatureTuple f;
    f.t = pts[i].tick;
    f.fired = pts[i].fired;
    f.eliminated = pts[i].eliminated;
    f.v_x = (pts[i].x - pts[i - 1].x) / dt;
    f.v_y = (pts[i].y - pts[i - 1].y) / dt;
    const double alpha = heading(f.v_x, f.v_y);
    if (i >= 2) {
      f.a_x = (f.v_x - prev_vx) / dt;
      f.a_y = (f.v_y - prev_vy) / dt;
      f.theta = wrap_angle(alpha - prev_alpha) / dt;
    }
    prev_vx = f.v_x;
    prev_vy = f.v_y;
    prev_alpha = alpha;
    out.tuples.push_back(f);
  }
  return out;
}

FeatureVector feature_means(std::span<const FeatureSeries> dataset,
                            const std::function<bool(const FeatureSeries&)>& filter) {
  FeatureVector sum{};
  std::size_t count = 0;
  for (const auto& series : dataset) {
    if (filter && !filter(series)) continue;
    for (const auto& tuple : series.tuples) {
      const auto v = tuple.as_array();
      for (std::size_t c = 0; c < kNumFeatures; ++c) sum[c] += v[c];
      ++count;
    }
  }
  if (count == 0) throw Error(ErrorKind::kEmptySlice, "no ticks match the filter");
  for (auto& s : sum) s /= static_cast<double>(count);
  return sum;
}

void write_feature_dump(std::span<const FeatureSeries> series, std::ostream& out) {
  out << "t,I_f,I_e,v_x,v_y,a_x,a_y,theta,player_id,match_id,elim_tick\n";
  for (const auto& s : series) {
    for (const auto& f : s.tuples) {
      out << fmt::format("{},{},{},{},{},{},{},{},{},{},{}\n", f.t, f.fired ? 1 : 0, f.eliminated ? 1 : 0,
                         f.v_x, f.v_y, f.a_x, f.a_y, f.theta, s.player_id, s.match_id, s.elim_tick);
    }
  }
}

std::vector<FeatureSeries> read_feature_dump(std::istream& in) {
  std::string line;
  std::size_t line_no = 1;
  if (!std::getline(in, line)) throw MalformedRow(1, "missing header");
  const auto header = util::split(util::trim(line), ',');
  if (header.size() != 11) throw MalformedRow(1, "expected 11 columns");
  bool degrees = false;
  if (header[7] == "theta_deg") {
    degrees = true;
  } else if (header[7] != "theta") {
    throw MalformedRow(1, "column 8 must be theta or theta_deg");
  }

  std::vector<FeatureSeries> out;
  std::map<std::tuple<std::string, std::string, std::int64_t>, std::size_t> index;
  while (std::getline(in, line)) {
    ++line_no;
    const auto view = util::trim(line);
    if (view.empty()) continue;
    const auto fields = util::split(view, ',');
    if (fields.size() != 11) throw MalformedRow(line_no, "expected 11 fields");
    FeatureTuple f;
    auto t = util::parse_int(fields[0]);
    auto fired = util::parse_bool(fields[1]);
    auto elim = util::parse_bool(fields[2]);
    auto elim_tick = util::parse_int(fields[10]);
    if (!t || !fired || !elim || !elim_tick) throw MalformedRow(line_no, "bad integer/boolean field");
    f.t = *t;
    f.fired = *fired;
    f.eliminated = *elim;
    double* dst[] = {&f.v_x, &f.v_y, &f.a_x, &f.a_y, &f.theta};
    for (std::size_t k = 0; k < 5; ++k) {
      auto v = util::parse_double(fields[3 + k]);
      if (!v || !std::isfinite(*v)) throw MalformedRow(line_no, fmt::format("bad value in column {}", 4 + k));
      *dst[k] = *v;
    }
    if (degrees) f.theta = f.theta * std::numbers::pi / 180.0;
    auto key = std::make_tuple(std::string(fields[9]), std::string(fields[8]), *elim_tick);
    auto [it, inserted] = index.try_emplace(key, out.size());
    if (inserted) {
      FeatureSeries s;
      s.player_id = std::string(fields[8]);
      s.match_id = std::string(fields[9]);
      s.elim_tick = *elim_tick;
      out.push_back(std::move(s));
    }
    out[it->second].tuples.push_back(f);
  }
  return out;
}

}  // namespace aimguard::features
