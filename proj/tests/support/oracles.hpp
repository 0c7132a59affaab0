#pragma once

// Independent reference implementations used by the unit and acceptance
// tests. Nothing here calls into the library's numeric code: every oracle is
// a direct, slow restatement of the definition it checks.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numbers>
#include <numeric>
#include <vector>

namespace oracle {

struct RawTick {
  std::int64_t tick = 0;
  double pitch = 0.0;
  double yaw = 0.0;
  bool fired = false;
  bool eliminated = false;
};

inline double screen_x(double yaw, double width) { return (yaw + 180.0) / 360.0 * width; }
inline double screen_y(double pitch, double height) { return height - (pitch + 90.0) / 180.0 * height; }

// Feature rows [t, I_f, I_e, v_x, v_y, a_x, a_y, theta] from raw angles; the
// first tick only seeds the differences.
inline std::vector<std::array<double, 8>> features(const std::vector<RawTick>& ticks, double width, double height) {
  const double pi = std::numbers::pi;
  std::vector<std::array<double, 8>> rows;
  for (std::size_t i = 1; i < ticks.size(); ++i) {
    const double dt = static_cast<double>(ticks[i].tick - ticks[i - 1].tick);
    const double vx = (screen_x(ticks[i].yaw, width) - screen_x(ticks[i - 1].yaw, width)) / dt;
    const double vy = (screen_y(ticks[i].pitch, height) - screen_y(ticks[i - 1].pitch, height)) / dt;
    double ax = 0.0, ay = 0.0, theta = 0.0;
    if (i >= 2) {
      const double pdt = static_cast<double>(ticks[i - 1].tick - ticks[i - 2].tick);
      const double pvx = (screen_x(ticks[i - 1].yaw, width) - screen_x(ticks[i - 2].yaw, width)) / pdt;
      const double pvy = (screen_y(ticks[i - 1].pitch, height) - screen_y(ticks[i - 2].pitch, height)) / pdt;
      ax = (vx - pvx) / dt;
      ay = (vy - pvy) / dt;
      const double a1 = (vx == 0.0 && vy == 0.0) ? 0.0 : std::atan2(vy, vx);
      const double a0 = (pvx == 0.0 && pvy == 0.0) ? 0.0 : std::atan2(pvy, pvx);
      double d = a1 - a0;
      while (d > pi) d -= 2.0 * pi;
      while (d <= -pi) d += 2.0 * pi;
      theta = d / dt;
    }
    rows.push_back({static_cast<double>(ticks[i].tick), ticks[i].fired ? 1.0 : 0.0, ticks[i].eliminated ? 1.0 : 0.0,
                    vx, vy, ax, ay, theta});
  }
  return rows;
}

// Per-tick squeeze by explicit coverage enumeration: tick i (1-based)
// collects row i - s of every subsequence s whose span contains it, then
// divides by the printed denominator for its region.
inline std::vector<std::vector<double>> squeeze(const std::vector<std::vector<std::vector<double>>>& shap,
                                                std::size_t length, std::size_t w) {
  const std::size_t f = shap.at(0).at(0).size();
  std::vector<std::vector<double>> out(length, std::vector<double>(f, 0.0));
  for (std::size_t i = 1; i <= length; ++i) {
    std::vector<std::size_t> covering;
    for (std::size_t s = 1; s + w - 1 <= length; ++s) {
      if (s <= i && i <= s + w - 1) covering.push_back(s);
    }
    double denom;
    if (i == 1 || i == length) {
      denom = 1.0;
    } else if (i <= w) {
      denom = static_cast<double>(i);
    } else if (i <= length - w) {
      denom = static_cast<double>(w);
    } else {
      denom = static_cast<double>(length - i);
    }
    for (std::size_t c = 0; c < f; ++c) {
      double sum = 0.0;
      for (std::size_t s : covering) sum += shap[s - 1][i - s][c];
      out[i - 1][c] = sum / denom;
    }
  }
  return out;
}

// Shapley values as the average marginal contribution over all k!
// orderings; absent features take the background value.
inline std::vector<double> permutation_shapley(const std::function<double(const std::vector<double>&)>& f,
                                               const std::vector<double>& x, const std::vector<double>& background) {
  const std::size_t k = x.size();
  std::vector<std::size_t> order(k);
  std::iota(order.begin(), order.end(), 0);
  std::vector<double> phi(k, 0.0);
  double count = 0.0;
  do {
    std::vector<double> z = background;
    double before = f(z);
    for (std::size_t j : order) {
      z[j] = x[j];
      const double after = f(z);
      phi[j] += after - before;
      before = after;
    }
    count += 1.0;
  } while (std::next_permutation(order.begin(), order.end()));
  for (double& v : phi) v /= count;
  return phi;
}

inline unsigned __int128 choose(unsigned n, unsigned k) {
  if (k > n) return 0;
  unsigned __int128 r = 1;
  for (unsigned i = 1; i <= k; ++i) r = r * (n - k + i) / i;
  return r;
}

// Two-sided Fisher p-value by enumerating every table with the observed
// margins; "as extreme" compares exact integer hypergeometric weights.
inline double fisher(unsigned a, unsigned b, unsigned c, unsigned d) {
  const unsigned r1 = a + b, r2 = c + d, c1 = a + c, n = r1 + r2;
  const auto weight = [&](unsigned x) { return choose(r1, x) * choose(r2, c1 - x); };
  const auto observed = weight(a);
  unsigned __int128 tail = 0;
  const unsigned lo = c1 > r2 ? c1 - r2 : 0;
  const unsigned hi = std::min(r1, c1);
  for (unsigned x = lo; x <= hi; ++x) {
    if (weight(x) <= observed) tail += weight(x);
  }
  return static_cast<double>(static_cast<long double>(tail) / static_cast<long double>(choose(n, c1)));
}

struct Tally {
  std::size_t tp = 0, fp = 0, tn = 0, fn = 0;
};

inline Tally tally(const std::vector<int>& labels, const std::vector<int>& verdicts) {
  Tally t;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] == 1 && verdicts[i] == 1) ++t.tp;
    if (labels[i] == 0 && verdicts[i] == 1) ++t.fp;
    if (labels[i] == 0 && verdicts[i] == 0) ++t.tn;
    if (labels[i] == 1 && verdicts[i] == 0) ++t.fn;
  }
  return t;
}

inline double f1_from_tally(const Tally& t) {
  if (t.tp == 0) return 0.0;
  const double p = static_cast<double>(t.tp) / static_cast<double>(t.tp + t.fp);
  const double r = static_cast<double>(t.tp) / static_cast<double>(t.tp + t.fn);
  return 2.0 * p * r / (p + r);
}

// Best F1 of "score >= t" over every distinct score plus +infinity.
inline double best_threshold_f1(const std::vector<double>& scores, const std::vector<int>& labels) {
  std::vector<double> cuts = scores;
  cuts.push_back(INFINITY);
  double best = 0.0;
  for (double t : cuts) {
    std::vector<int> v;
    for (double s : scores) v.push_back(s >= t ? 1 : 0);
    best = std::max(best, f1_from_tally(tally(labels, v)));
  }
  return best;
}

struct Split {
  int feature = -1;
  double threshold = 0.0;
  double impurity = INFINITY;  // weighted child Gini
};

inline double gini(double pos, double n) {
  if (n == 0.0) return 0.0;
  const double p = pos / n;
  return 1.0 - p * p - (1.0 - p) * (1.0 - p);
}

// Lowest weighted child Gini over every feature and every midpoint between
// distinct sorted values (x <= threshold goes left).
inline Split best_gini_split(const std::vector<std::vector<double>>& rows, const std::vector<int>& labels) {
  Split best;
  for (std::size_t f = 0; f < rows.at(0).size(); ++f) {
    std::vector<double> values;
    for (const auto& r : rows) values.push_back(r[f]);
    std::sort(values.begin(), values.end());
    values.erase(std::unique(values.begin(), values.end()), values.end());
    for (std::size_t i = 0; i + 1 < values.size(); ++i) {
      const double thr = 0.5 * (values[i] + values[i + 1]);
      double nl = 0, pl = 0, nr = 0, pr = 0;
      for (std::size_t s = 0; s < rows.size(); ++s) {
        if (rows[s][f] <= thr) {
          nl += 1;
          pl += labels[s];
        } else {
          nr += 1;
          pr += labels[s];
        }
      }
      const double imp = (nl * gini(pl, nl) + nr * gini(pr, nr)) / (nl + nr);
      if (imp < best.impurity - 1e-15) best = {static_cast<int>(f), thr, imp};
    }
  }
  return best;
}

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// Scalar GRU over x[t][f] with row-major weight arrays W (H x F), U (H x H).
struct GruWeights {
  std::vector<double> wz, wr, wh, uz, ur, uh, bz, br, bh;
};

inline std::vector<std::vector<double>> gru(const std::vector<std::vector<double>>& x, const GruWeights& g,
                                            std::size_t hidden) {
  const std::size_t f = x.at(0).size();
  std::vector<double> h(hidden, 0.0);
  std::vector<std::vector<double>> out;
  for (const auto& xt : x) {
    std::vector<double> z(hidden), r(hidden), next(hidden);
    for (std::size_t i = 0; i < hidden; ++i) {
      double az = g.bz[i], ar = g.br[i];
      for (std::size_t j = 0; j < f; ++j) {
        az += g.wz[i * f + j] * xt[j];
        ar += g.wr[i * f + j] * xt[j];
      }
      for (std::size_t j = 0; j < hidden; ++j) {
        az += g.uz[i * hidden + j] * h[j];
        ar += g.ur[i * hidden + j] * h[j];
      }
      z[i] = sigmoid(az);
      r[i] = sigmoid(ar);
    }
    for (std::size_t i = 0; i < hidden; ++i) {
      double ac = g.bh[i];
      for (std::size_t j = 0; j < f; ++j) ac += g.wh[i * f + j] * xt[j];
      for (std::size_t j = 0; j < hidden; ++j) ac += g.uh[i * hidden + j] * r[j] * h[j];
      next[i] = (1.0 - z[i]) * h[i] + z[i] * std::tanh(ac);
    }
    h = next;
    out.push_back(h);
  }
  return out;
}

// Valid 1-D convolution; kernel[k][j][c], out[t][k].
inline std::vector<std::vector<double>> conv1d(const std::vector<std::vector<double>>& x,
                                               const std::vector<double>& kernel, const std::vector<double>& bias,
                                               std::size_t filters, std::size_t width) {
  const std::size_t c = x.at(0).size();
  std::vector<std::vector<double>> out;
  for (std::size_t t = 0; t + width <= x.size(); ++t) {
    std::vector<double> row(filters);
    for (std::size_t k = 0; k < filters; ++k) {
      double acc = bias[k];
      for (std::size_t j = 0; j < width; ++j) {
        for (std::size_t ch = 0; ch < c; ++ch) acc += kernel[(k * width + j) * c + ch] * x[t + j][ch];
      }
      row[k] = acc;
    }
    out.push_back(row);
  }
  return out;
}

}  // namespace oracle
