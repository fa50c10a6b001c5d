#pragma once

// Trajectory-derived indices, MFD sampling and fitting, capacity metrics.
// Statistics that can be undefined return std::optional.

#include <gsl/gsl_errno.h>
#include <gsl/gsl_multimin.h>
#include <gsl/gsl_vector.h>

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "uamsim/error.hpp"
#include "uamsim/flightdyn.hpp"
#include "uamsim/geometry.hpp"
#include "uamsim/hexspace.hpp"

namespace uam {

struct LogRecord {
  double t = 0.0;
  int id = 0;
  Vec3 position;
  Vec3 velocity;
  RegionId region;
  Phase phase = Phase::enroute;
  bool held = false;  // unreachable destination, holding position
};

struct Trip {
  int id = 0;
  double spawn_time = 0.0;
  std::optional<double> arrival_time;
  Vec3 origin;
  Vec3 destination;
};

/// Records are appended tick by tick, so they are time-ordered.
struct TrajectoryLog {
  double dt = 1.0;
  std::vector<LogRecord> records;
  std::vector<Trip> trips;

  /// [begin, end) index ranges of records sharing a timestamp.
  std::vector<std::pair<std::size_t, std::size_t>> ticks() const {
    std::vector<std::pair<std::size_t, std::size_t>> out;
    for (std::size_t i = 0; i < records.size();) {
      std::size_t j = i;
      while (j < records.size() && records[j].t == records[i].t) ++j;
      out.emplace_back(i, j);
      i = j;
    }
    return out;
  }
};

/// Mean over completed trips of the trip's closest distance to any other
/// logged aircraft. Trips that never share a tick with another aircraft
/// are left out; nullopt when no trip qualifies.
inline std::optional<double> min_separation_stats(const TrajectoryLog& log) {
  std::unordered_map<int, double> closest;
  for (const auto& [b, e] : log.ticks()) {
    for (std::size_t i = b; i < e; ++i) {
      for (std::size_t j = i + 1; j < e; ++j) {
        const double d = distance(log.records[i].position, log.records[j].position);
        for (const int id : {log.records[i].id, log.records[j].id}) {
          auto [it, fresh] = closest.try_emplace(id, d);
          if (!fresh) it->second = std::min(it->second, d);
        }
      }
    }
  }
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& trip : log.trips) {
    if (!trip.arrival_time) continue;
    const auto it = closest.find(trip.id);
    if (it == closest.end()) continue;
    sum += it->second;
    ++n;
  }
  if (n == 0) return std::nullopt;
  return sum / static_cast<double>(n);
}

/// Mean over completed trips of straight OD distance / duration.
inline std::optional<double> avg_travel_speed(const TrajectoryLog& log) {
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& trip : log.trips) {
    if (!trip.arrival_time) continue;
    const double dur = *trip.arrival_time - trip.spawn_time;
    if (!(dur > 0.0)) continue;
    sum += distance(trip.origin, trip.destination) / dur;
    ++n;
  }
  if (n == 0) return std::nullopt;
  return sum / static_cast<double>(n);
}

/// Trips completed in [t0, t1] per second.
inline double trip_completion_rate(const TrajectoryLog& log, double t0, double t1) {
  if (!(t1 > t0)) throw Error(Errc::invalid_argument, "completion window must have positive length");
  std::size_t n = 0;
  for (const auto& trip : log.trips) {
    if (trip.arrival_time && *trip.arrival_time >= t0 && *trip.arrival_time <= t1) ++n;
  }
  return static_cast<double>(n) / (t1 - t0);
}

/// Hover-plus-quadratic-drag power surrogate; coefficients are arbitrary
/// defaults meant for relative comparisons only.
struct EnergyModel {
  double hover_kw = 1.0;
  double drag_kw_s2_per_m2 = 0.001;

  double power_kw(const Vec3& v) const { return hover_kw + drag_kw_s2_per_m2 * norm_sq(v); }
};

/// Mean kWh per completed trip, integrating power over the trip's records.
inline std::optional<double> energy_per_trip(const TrajectoryLog& log, const EnergyModel& model = {}) {
  if (model.hover_kw < 0.0 || model.drag_kw_s2_per_m2 < 0.0) {
    throw Error(Errc::invalid_argument, "energy coefficients must be non-negative");
  }
  std::unordered_map<int, double> kj;
  for (const auto& r : log.records) kj[r.id] += model.power_kw(r.velocity) * log.dt;
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& trip : log.trips) {
    if (!trip.arrival_time) continue;
    sum += kj[trip.id] / 3600.0;
    ++n;
  }
  if (n == 0) return std::nullopt;
  return sum / static_cast<double>(n);
}

struct MfdSample {
  double window_start = 0.0;
  double window = 0.0;
  double accumulation = 0.0;  // mean aircraft count in the zone
  double outflow = 0.0;       // departures from the zone per second
  double density = 0.0;       // aircraft / km^2
  double flow = 0.0;          // aircraft / s / km^2
  long entries = 0;
  long exits = 0;
};

/// Per-window zone statistics. An aircraft is present while its record is
/// enroute and inside the zone; appearing present (entry or spawn inside)
/// counts as inflow, ceasing to be present (exit or arrival inside) as
/// outflow, so count changes always equal inflow minus outflow.
inline std::vector<MfdSample> mfd_samples(const TrajectoryLog& log, const std::function<bool(const Vec3&)>& in_zone,
                                          double zone_area_km2, double window, double horizon) {
  if (!(zone_area_km2 > 0.0)) throw Error(Errc::zero_area_zone, "measurement zone has no area");
  if (!(window >= log.dt)) throw Error(Errc::invalid_argument, "window must span at least one step");
  const auto windows = static_cast<std::size_t>(std::floor(horizon / window + 1e-9));
  std::vector<MfdSample> out(windows);
  for (std::size_t k = 0; k < windows; ++k) {
    out[k].window_start = static_cast<double>(k) * window;
    out[k].window = window;
  }
  const auto slot = [&](double t) -> std::optional<std::size_t> {
    const auto k = static_cast<std::size_t>(std::floor(t / window));
    if (t < 0.0 || k >= windows) return std::nullopt;
    return k;
  };

  std::unordered_set<int> present;
  std::unordered_set<int> now;
  for (const auto& [b, e] : log.ticks()) {
    now.clear();
    for (std::size_t i = b; i < e; ++i) {
      const auto& r = log.records[i];
      if (r.phase == Phase::enroute && in_zone(r.position)) now.insert(r.id);
    }
    // A record stamped t describes the state reached over (t - dt, t].
    const auto k = slot(log.records[b].t - log.dt);
    long in = 0;
    long gone = 0;
    for (const int id : now) in += present.contains(id) ? 0 : 1;
    for (const int id : present) gone += now.contains(id) ? 0 : 1;
    if (k) {
      out[*k].entries += in;
      out[*k].exits += gone;
      out[*k].accumulation += static_cast<double>(now.size());
    }
    present.swap(now);
  }
  // Ticks with no records still count as zero-accumulation ticks.
  const double ticks_in_window = std::round(window / log.dt);
  for (std::size_t k = 0; k < windows; ++k) {
    out[k].accumulation /= ticks_in_window;
    out[k].outflow = static_cast<double>(out[k].exits) / window;
    out[k].density = out[k].accumulation / zone_area_km2;
    out[k].flow = out[k].outflow / zone_area_km2;
  }
  return out;
}

struct FitParams {
  double alpha = 0.0;
  double beta = 0.0;
  double n_cr = 0.0;
  double residual = 0.0;                // sum of squared outflow errors
  std::vector<double> start_residuals;  // converged residual of every start

  double critical_flow() const { return alpha * n_cr * std::exp(-1.0 / beta); }
};

/// G(N) = alpha N exp(-(1/beta) (N/n_cr)^beta).
inline double mfd_curve(double n, double alpha, double beta, double n_cr) {
  if (n <= 0.0) return 0.0;
  return alpha * n * std::exp(-std::pow(n / n_cr, beta) / beta);
}

namespace detail {

struct FitData {
  std::span<const double> n;
  std::span<const double> g;
};

inline double fit_sse(const gsl_vector* x, void* params) {
  const auto* d = static_cast<const FitData*>(params);
  const double alpha = std::exp(gsl_vector_get(x, 0));
  const double beta = std::exp(gsl_vector_get(x, 1));
  const double ncr = std::exp(gsl_vector_get(x, 2));
  double s = 0.0;
  for (std::size_t i = 0; i < d->n.size(); ++i) {
    const double r = mfd_curve(d->n[i], alpha, beta, ncr) - d->g[i];
    s += r * r;
  }
  return std::isfinite(s) ? s : std::numeric_limits<double>::max();
}

}  // namespace detail

/// Least squares in log-parameters by Nelder-Mead from a log-spaced grid
/// of starts; the best converged start wins.
inline FitParams fit_mfd(std::span<const double> accumulation, std::span<const double> outflow) {
  if (accumulation.size() != outflow.size()) throw Error(Errc::invalid_argument, "sample columns differ in length");
  const auto nonzero = std::count_if(accumulation.begin(), accumulation.end(), [](double n) { return n > 0.0; });
  if (nonzero < 10) throw Error(Errc::fit_failure, "need at least 10 samples with nonzero accumulation");
  const double n_max = *std::max_element(accumulation.begin(), accumulation.end());
  const double g_max = *std::max_element(outflow.begin(), outflow.end());
  if (!(g_max > 0.0)) throw Error(Errc::fit_failure, "all outflow samples are zero");

  detail::FitData data{accumulation, outflow};
  gsl_multimin_function fn{&detail::fit_sse, 3, &data};
  gsl_error_handler_t* previous = gsl_set_error_handler_off();

  FitParams best;
  best.residual = std::numeric_limits<double>::infinity();
  const double slope = g_max / n_max;
  for (const double ncr_scale : {0.25, 0.5, 1.0, 2.0, 4.0}) {
    for (const double beta0 : {0.5, 1.0, 2.0, 4.0}) {
      for (const double alpha_scale : {0.5, 1.0, 2.0}) {
        gsl_vector* x = gsl_vector_alloc(3);
        gsl_vector* step = gsl_vector_alloc(3);
        gsl_vector_set(x, 0, std::log(alpha_scale * slope * 2.0));
        gsl_vector_set(x, 1, std::log(beta0));
        gsl_vector_set(x, 2, std::log(ncr_scale * n_max));
        gsl_vector_set_all(step, 0.5);
        gsl_multimin_fminimizer* s = gsl_multimin_fminimizer_alloc(gsl_multimin_fminimizer_nmsimplex2, 3);
        gsl_multimin_fminimizer_set(s, &fn, x, step);
        for (int iter = 0; iter < 5000; ++iter) {
          if (gsl_multimin_fminimizer_iterate(s) != GSL_SUCCESS) break;
          if (gsl_multimin_test_size(gsl_multimin_fminimizer_size(s), 1e-10) == GSL_SUCCESS) break;
        }
        const double r = s->fval;
        best.start_residuals.push_back(r);
        if (r < best.residual) {
          best.residual = r;
          best.alpha = std::exp(gsl_vector_get(s->x, 0));
          best.beta = std::exp(gsl_vector_get(s->x, 1));
          best.n_cr = std::exp(gsl_vector_get(s->x, 2));
        }
        gsl_multimin_fminimizer_free(s);
        gsl_vector_free(step);
        gsl_vector_free(x);
      }
    }
  }
  gsl_set_error_handler(previous);
  if (!std::isfinite(best.residual)) throw Error(Errc::fit_failure, "no start converged");
  return best;
}

inline FitParams fit_mfd(std::span<const MfdSample> samples) {
  std::vector<double> n;
  std::vector<double> g;
  for (const auto& s : samples) {
    n.push_back(s.accumulation);
    g.push_back(s.outflow);
  }
  return fit_mfd(n, g);
}

struct CapacityMetrics {
  double k_jam = 0.0;  // aircraft / km^2
  double k_cr = 0.0;   // aircraft / km^2
  double q_cr = 0.0;   // aircraft / s / km^2
  bool k_jam_lower_bound = false;
};

/// Critical values from the fit; jam density from the samples: the densest
/// congested sample whose flow is under 5% of critical. Without such a
/// sample the densest observation is reported as a lower bound.
inline CapacityMetrics capacity_metrics(const FitParams& fit, double zone_area_km2,
                                        std::span<const MfdSample> samples) {
  if (!(zone_area_km2 > 0.0)) throw Error(Errc::zero_area_zone, "measurement zone has no area");
  CapacityMetrics m;
  m.k_cr = fit.n_cr / zone_area_km2;
  m.q_cr = fit.critical_flow() / zone_area_km2;
  double jam = -1.0;
  double densest = 0.0;
  for (const auto& s : samples) {
    densest = std::max(densest, s.density);
    if (s.density > m.k_cr && s.flow < 0.05 * m.q_cr) jam = std::max(jam, s.density);
  }
  if (jam < 0.0) {
    m.k_jam = densest;
    m.k_jam_lower_bound = true;
  } else {
    m.k_jam = jam;
  }
  return m;
}

/// Spearman rank correlation with average ranks for ties.
inline double spearman(std::span<const double> x, std::span<const double> y) {
  const auto ranks = [](std::span<const double> v) {
    std::vector<std::size_t> idx(v.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
    std::vector<double> r(v.size());
    for (std::size_t i = 0; i < idx.size();) {
      std::size_t j = i;
      while (j < idx.size() && v[idx[j]] == v[idx[i]]) ++j;
      const double avg = 0.5 * static_cast<double>(i + j - 1) + 1.0;
      for (std::size_t k = i; k < j; ++k) r[idx[k]] = avg;
      i = j;
    }
    return r;
  };
  if (x.size() != y.size() || x.size() < 2) return 0.0;
  const auto rx = ranks(x);
  const auto ry = ranks(y);
  const double n = static_cast<double>(x.size());
  const double mx = (n + 1.0) / 2.0;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    sxy += (rx[i] - mx) * (ry[i] - mx);
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - mx) * (ry[i] - mx);
  }
  if (sxx == 0.0 || syy == 0.0) return 0.0;
  return sxy / std::sqrt(sxx * syy);
}

}  // namespace uam
