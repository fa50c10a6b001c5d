#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>

#include <gtest/gtest.h>

#include "oracles.hpp"
#include "support.hpp"
#include "uamsim/metrics.hpp"

using namespace uam;
using uam::testing::Gen;
using uam::testing::synthetic_mfd;

namespace {

/// Static aircraft, one record per tick for ticks 1..T, every trip completed at T.
TrajectoryLog static_log(const std::vector<Vec3>& at, int ticks) {
  TrajectoryLog log;
  for (int t = 1; t <= ticks; ++t) {
    for (std::size_t i = 0; i < at.size(); ++i) log.records.push_back({double(t), int(i), at[i], {}, {}, Phase::enroute});
  }
  for (std::size_t i = 0; i < at.size(); ++i) log.trips.push_back({int(i), 0.0, double(ticks), at[i], at[i]});
  return log;
}

Trip trip(int id, double spawn, std::optional<double> arrive, Vec3 o, Vec3 d) { return {id, spawn, arrive, o, d}; }

bool in_disc(const Vec3& p) { return std::hypot(p.x, p.y) <= 500.0; }

/// Spearman without ties: 1 - 6 sum d^2 / (n (n^2 - 1)).
double spearman_no_ties(const std::vector<double>& x, const std::vector<double>& y) {
  const std::size_t n = x.size();
  auto rank = [n](const std::vector<double>& v, std::size_t i) {
    std::size_t r = 1;
    for (std::size_t j = 0; j < n; ++j) r += v[j] < v[i] ? 1 : 0;
    return double(r);
  };
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += std::pow(rank(x, i) - rank(y, i), 2);
  const double nn = double(n);
  return 1.0 - 6.0 * s / (nn * (nn * nn - 1.0));
}

}  // namespace

TEST(Separation, TwoStaticAircraft) {
  const auto log = static_log({{0, 0, 500}, {300, 0, 500}}, 10);
  EXPECT_NEAR(*min_separation_stats(log), 300.0, 1e-12);
}

TEST(Separation, ThreeCollinear) {
  const auto log = static_log({{0, 0, 500}, {100, 0, 500}, {300, 0, 500}}, 5);
  EXPECT_NEAR(*min_separation_stats(log), (100.0 + 100.0 + 200.0) / 3.0, 1e-12);
}

TEST(Separation, SingleAircraftIsUndefined) {
  EXPECT_FALSE(min_separation_stats(static_log({{0, 0, 500}}, 5)).has_value());
}

TEST(Separation, NonOverlappingLifetimesAreExcluded) {
  TrajectoryLog log;
  log.records.push_back({1, 0, {0, 0, 500}, {}, {}, Phase::enroute});
  log.records.push_back({2, 1, {10, 0, 500}, {}, {}, Phase::enroute});
  log.trips = {trip(0, 0, 1, {}, {}), trip(1, 1, 2, {}, {})};
  EXPECT_FALSE(min_separation_stats(log).has_value());
}

TEST(Speed, Examples) {
  TrajectoryLog log;
  log.trips = {trip(0, 0, 100, {0, 0, 500}, {2000, 0, 500})};
  EXPECT_NEAR(*avg_travel_speed(log), 20.0, 1e-12);
  log.trips = {trip(0, 50, 250, {0, 0, 500}, {0, 2000, 500})};
  EXPECT_NEAR(*avg_travel_speed(log), 10.0, 1e-12);
  log.trips = {trip(0, 0, 100, {0, 0, 500}, {1000, 0, 500}), trip(1, 0, 100, {0, 0, 500}, {2000, 0, 500}),
               trip(2, 0, std::nullopt, {0, 0, 500}, {9000, 0, 500})};
  EXPECT_NEAR(*avg_travel_speed(log), 15.0, 1e-12);
  log.trips = {trip(0, 0, std::nullopt, {}, {1, 0, 0})};
  EXPECT_FALSE(avg_travel_speed(log).has_value());
}

TEST(Completion, Examples) {
  TrajectoryLog log;
  EXPECT_EQ(trip_completion_rate(log, 0, 1000), 0.0);
  for (int i = 0; i < 191; ++i) log.trips.push_back(trip(i, 0, 5.0 * i + 1.0, {}, {}));
  EXPECT_NEAR(trip_completion_rate(log, 0, 1000), 0.191, 1e-15);
  EXPECT_NEAR(trip_completion_rate(log, 0, 2000), 0.191 / 2.0, 1e-15);
  EXPECT_THROW(trip_completion_rate(log, 10, 10), Error);
}

TEST(Energy, Examples) {
  TrajectoryLog log;
  for (int t = 1; t <= 3600; ++t) log.records.push_back({double(t), 0, {}, {}, {}, Phase::enroute});
  log.trips = {trip(0, 0, 3600, {}, {})};
  EXPECT_NEAR(*energy_per_trip(log, {0.0, 0.001}), 0.0, 1e-15);
  EXPECT_NEAR(*energy_per_trip(log, {1.0, 0.0}), 1.0, 1e-12);
  for (auto& r : log.records) r.velocity = {12, 16, 0};
  EXPECT_NEAR(*energy_per_trip(log, {1.0, 0.001}), 1.4, 1e-12);
  EXPECT_THROW(energy_per_trip(log, {-1.0, 0.0}), Error);
}

TEST(Mfd, EmptyZone) {
  TrajectoryLog log;
  for (int t = 1; t <= 100; ++t) log.records.push_back({double(t), 0, {2000, 0, 500}, {}, {}, Phase::enroute});
  const auto s = mfd_samples(log, in_disc, 0.785, 10.0, 100.0);
  ASSERT_EQ(s.size(), 10u);
  for (const auto& w : s) {
    EXPECT_EQ(w.accumulation, 0.0);
    EXPECT_EQ(w.outflow, 0.0);
  }
}

TEST(Mfd, SingleCrossingCountsOnce) {
  TrajectoryLog log;
  for (int t = 1; t <= 200; ++t) {
    log.records.push_back({double(t), 7, {-1000.0 + 10.0 * t, 0, 500}, {10, 0, 0}, {}, Phase::enroute});
  }
  const auto s = mfd_samples(log, in_disc, 0.785, 20.0, 200.0);
  double trips = 0.0;
  double aircraft_seconds = 0.0;
  for (const auto& w : s) {
    trips += w.outflow * w.window;
    aircraft_seconds += w.accumulation * w.window;
  }
  EXPECT_NEAR(trips, 1.0, 1e-12);
  EXPECT_NEAR(aircraft_seconds, 101.0, 1e-9);  // x in [-500, 500] at 10 m per tick
}

TEST(Mfd, SteadyCirculation) {
  TrajectoryLog log;
  const int n = 6;
  for (int t = 1; t <= 600; ++t) {
    for (int i = 0; i < n; ++i) {
      const double a = 0.02 * t + 2.0 * std::numbers::pi * i / n;
      log.records.push_back({double(t), i, {300 * std::cos(a), 300 * std::sin(a), 500}, {}, {}, Phase::enroute});
    }
  }
  for (const auto& w : mfd_samples(log, in_disc, 0.785, 60.0, 600.0)) {
    EXPECT_NEAR(w.accumulation, n, 1e-12);
    EXPECT_NEAR(w.density, n / 0.785, 1e-9);
    EXPECT_EQ(w.outflow, 0.0);
  }
}

TEST(Mfd, Errors) {
  TrajectoryLog log;
  EXPECT_THROW(mfd_samples(log, in_disc, 0.0, 10.0, 100.0), Error);
  EXPECT_THROW(mfd_samples(log, in_disc, 1.0, 0.5, 100.0), Error);
}

TEST(Fit, CurveVanishesAtZero) {
  Gen g(81);
  for (int k = 0; k < 100; ++k) EXPECT_EQ(mfd_curve(0.0, g.uniform(0.1, 5), g.uniform(0.1, 5), g.uniform(1, 50)), 0.0);
}

TEST(Fit, CriticalValue) {
  FitParams f;
  f.alpha = 1.0;
  f.beta = 2.0;
  f.n_cr = 10.0;
  EXPECT_NEAR(f.critical_flow(), 6.0653, 1e-4);
  // The curve peaks at n_cr.
  const double h = 1e-4;
  const double slope = (mfd_curve(10 + h, 1, 2, 10) - mfd_curve(10 - h, 1, 2, 10)) / (2 * h);
  EXPECT_NEAR(slope, 0.0, 1e-7);
  EXPECT_NEAR(mfd_curve(10, 1, 2, 10), f.critical_flow(), 1e-12);
}

TEST(Fit, RecoversSyntheticParameters) {
  Gen g(82);
  const auto samples = synthetic_mfd(g, 1.0, 2.0, 10.0, 0.05, 80);
  const auto f = fit_mfd(samples);
  EXPECT_NEAR(f.alpha, 1.0, 0.1);
  EXPECT_NEAR(f.beta, 2.0, 0.2);
  EXPECT_NEAR(f.n_cr, 10.0, 1.0);
}

TEST(Fit, DegenerateSamplesFail) {
  std::vector<MfdSample> zeros(30);
  EXPECT_THROW(fit_mfd(zeros), Error);
  std::vector<MfdSample> few(5);
  for (auto& s : few) s.accumulation = s.outflow = 1.0;
  EXPECT_THROW(fit_mfd(few), Error);
}

TEST(Capacity, Division) {
  FitParams f;
  f.alpha = 0.1;
  f.beta = 1.0;
  f.n_cr = 20.0;
  const auto m = capacity_metrics(f, 2.0, {});
  EXPECT_NEAR(m.k_cr, 10.0, 1e-12);
  EXPECT_NEAR(m.q_cr, 0.1 * 20.0 * std::exp(-1.0) / 2.0, 1e-12);
}

TEST(Capacity, JamFromSamplesOrLowerBound) {
  FitParams f;
  f.alpha = 1.0;
  f.beta = 2.0;
  f.n_cr = 10.0;
  std::vector<MfdSample> s(3);
  s[0].density = 5.0;
  s[0].flow = 5.0;
  s[1].density = 12.0;
  s[1].flow = 3.0;
  s[2].density = 14.0;
  s[2].flow = 1.0;
  auto m = capacity_metrics(f, 1.0, s);
  EXPECT_TRUE(m.k_jam_lower_bound);
  EXPECT_EQ(m.k_jam, 14.0);
  s.push_back({});
  s[3].density = 30.0;
  s[3].flow = 0.01;
  m = capacity_metrics(f, 1.0, s);
  EXPECT_FALSE(m.k_jam_lower_bound);
  EXPECT_EQ(m.k_jam, 30.0);
  EXPECT_THROW(capacity_metrics(f, 0.0, s), Error);
}

TEST(Spearman, Examples) {
  const std::vector<double> x{1, 2, 3, 4, 5};
  const std::vector<double> up{2, 4, 9, 16, 30};
  const std::vector<double> down{5, 4, 3, 2, 1};
  EXPECT_NEAR(spearman(x, up), 1.0, 1e-12);
  EXPECT_NEAR(spearman(x, down), -1.0, 1e-12);
  EXPECT_EQ(spearman(x, std::vector<double>{3, 3, 3, 3, 3}), 0.0);
}

TEST(Property, SpearmanMatchesClosedForm) {
  Gen g(83);
  for (int trial = 0; trial < 200; ++trial) {
    const int n = g.integer(3, 60);
    std::vector<double> x(n), y(n);
    for (int i = 0; i < n; ++i) {
      x[i] = g.uniform(0, 1);
      y[i] = 0.5 * x[i] + g.uniform(0, 1);
    }
    ASSERT_NEAR(spearman(x, y), spearman_no_ties(x, y), 1e-12);
  }
}

TEST(Property, FitRecoveryAcrossSeeds) {
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    Gen g(1000 + seed);
    const double alpha = g.uniform(0.05, 2.0);
    const double beta = g.uniform(1.0, 3.0);
    const double ncr = g.uniform(3.0, 40.0);
    const auto f = fit_mfd(synthetic_mfd(g, alpha, beta, ncr, 0.05, 80));
    EXPECT_NEAR(f.alpha / alpha, 1.0, 0.1) << "seed " << seed;
    EXPECT_NEAR(f.beta / beta, 1.0, 0.1) << "seed " << seed;
    EXPECT_NEAR(f.n_cr / ncr, 1.0, 0.1) << "seed " << seed;
  }
}

TEST(Property, FitResidualIsBestOfStarts) {
  Gen g(84);
  for (int trial = 0; trial < 10; ++trial) {
    const auto f = fit_mfd(synthetic_mfd(g, g.uniform(0.1, 1), g.uniform(0.5, 3), g.uniform(2, 30), 0.2, 40));
    ASSERT_FALSE(f.start_residuals.empty());
    for (const double r : f.start_residuals) EXPECT_LE(f.residual, r);
  }
}

TEST(Property, ZoneCountBalance) {
  // Random walkers appearing and disappearing: window by window, the change
  // in the last-tick count equals entries minus exits.
  Gen g(85);
  TrajectoryLog log;
  std::vector<Vec3> pos(30);
  std::vector<bool> alive(30, false);
  for (int t = 1; t <= 400; ++t) {
    for (int i = 0; i < 30; ++i) {
      if (!alive[i] && g.coin(0.05)) {
        alive[i] = true;
        pos[i] = {g.uniform(-900, 900), g.uniform(-900, 900), 500};
      } else if (alive[i] && g.coin(0.01)) {
        alive[i] = false;
      }
      if (!alive[i]) continue;
      pos[i] += Vec3{g.uniform(-40, 40), g.uniform(-40, 40), 0};
      log.records.push_back({double(t), i, pos[i], {}, {}, Phase::enroute});
    }
  }
  const auto s = mfd_samples(log, in_disc, 0.785, 1.0, 400.0);
  long count = 0;
  for (std::size_t k = 0; k < s.size(); ++k) {
    count += s[k].entries - s[k].exits;
    ASSERT_EQ(double(count), s[k].accumulation) << "window " << k;
  }
}

TEST(Property, EnergyAtLeastHoverTimesShortestTrip) {
  Gen g(86);
  for (int trial = 0; trial < 50; ++trial) {
    TrajectoryLog log;
    double shortest = 1e18;
    for (int i = 0; i < 5; ++i) {
      const int dur = g.integer(1, 200);
      for (int t = 1; t <= dur; ++t) log.records.push_back({double(t), i, {}, g.in_ball(20), {}, Phase::enroute});
      log.trips.push_back(trip(i, 0, dur, {}, {}));
      shortest = std::min(shortest, double(dur));
    }
    const EnergyModel m{g.uniform(0, 3), g.uniform(0, 0.01)};
    EXPECT_GE(*energy_per_trip(log, m), m.hover_kw * shortest / 3600.0 - 1e-12);
  }
}

TEST(Property, MetricsBitIdentical) {
  Gen g(87);
  TrajectoryLog log;
  for (int t = 1; t <= 100; ++t) {
    for (int i = 0; i < 8; ++i) log.records.push_back({double(t), i, g.in_ball(800), g.in_ball(20), {}, Phase::enroute});
  }
  for (int i = 0; i < 8; ++i) log.trips.push_back(trip(i, 0, 100, g.in_ball(800), g.in_ball(800)));
  const auto a = std::array{*min_separation_stats(log), *avg_travel_speed(log), *energy_per_trip(log)};
  const auto b = std::array{*min_separation_stats(log), *avg_travel_speed(log), *energy_per_trip(log)};
  EXPECT_EQ(std::memcmp(a.data(), b.data(), sizeof(a)), 0);
}
