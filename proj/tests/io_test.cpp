#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <gtest/gtest.h>

#include "support.hpp"
#include "uamsim/io.hpp"

using namespace uam;
using uam::io::json;
using uam::testing::Gen;

namespace {

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::filesystem::path scratch(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("uamsim_io_test_" + name);
  std::filesystem::remove_all(p);
  return p;
}

RunConfig small_run(const std::string& preset, std::uint64_t seed) {
  return io::run_config_from({{"seed", seed}, {"scenario", {{"preset", preset}, {"horizon", 300.0}, {"rate", 0.08}}}});
}

Errc code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error thrown";
  return Errc::invalid_argument;
}

}  // namespace

TEST(Text, NumberFormatting) {
  EXPECT_EQ(io::num(1.23456), "1.235");
  EXPECT_EQ(io::num(-0.0001), "0.000");
  EXPECT_EQ(io::num(-0.0), "0.000");
  EXPECT_EQ(io::num(-2.5, 1), "-2.5");
  EXPECT_EQ(io::num(1e6, 0), "1000000");
}

TEST(Text, Fnv1aReferenceVectors) {
  EXPECT_EQ(io::fnv1a(""), 0xcbf29ce484222325ull);
  EXPECT_EQ(io::fnv1a("a"), 0xaf63dc4c8601ec8cull);
  EXPECT_EQ(io::fnv1a("foobar"), 0x85944171f73967e8ull);
  EXPECT_EQ(io::hex64(0xabcull), "0000000000000abc");
}

TEST(Config, PresetsRoundTrip) {
  for (const std::string preset : {"plus", "hash", "star", "two-layer", "nofly"}) {
    const RunConfig a = small_run(preset, 7);
    const RunConfig b = io::run_config_from(io::to_json(a));
    EXPECT_EQ(io::to_json(a).dump(), io::to_json(b).dump()) << preset;
    EXPECT_EQ(io::config_hash(a), io::config_hash(b)) << preset;
  }
}

TEST(Config, HashSeparatesConfigs) {
  EXPECT_NE(io::config_hash(small_run("plus", 1)), io::config_hash(small_run("plus", 2)));
  EXPECT_NE(io::config_hash(small_run("plus", 1)), io::config_hash(small_run("star", 1)));
}

TEST(Config, ExplicitSectionsOverridePreset) {
  const json j = {{"scenario",
                   {{"preset", "plus"},
                    {"mode", "baseline"},
                    {"network", {{"layers", {400.0, 600.0}}, {"bounds", {{"parallelogram", {7, 7}}}}, {"n_cr", 3.0}}},
                    {"closures", {{{"label", 0}, {"start", 10.0}, {"end", 20.0}}}},
                    {"flows", {{{"origin", {{"disc", {0, 0, 50}}}}, {"destination", {{"region", {0, 1, 1}}}},
                                {"rate", {{"breakpoints", {0, 100}}, {"rates", {0.1, 0.0}}}}, {"z", {400, 400}}}}}}}};
  const RunConfig c = io::run_config_from(j);
  EXPECT_EQ(c.scenario.mode, GuidanceMode::baseline);
  EXPECT_EQ(c.scenario.network.layer_altitudes.size(), 2u);
  EXPECT_EQ(c.scenario.network.bounds.kind, Bounds::Kind::parallelogram);
  EXPECT_EQ(c.scenario.network.defaults.n_cr, 3.0);
  ASSERT_EQ(c.scenario.closures.size(), 1u);
  EXPECT_EQ(c.scenario.demand.flows.size(), 1u);
  EXPECT_EQ(c.scenario.demand.flows[0].destination.kind, Zone::Kind::region);
  EXPECT_NEAR(c.planner.region_leg_length, std::sqrt(3.0) * 250.0, 1e-9);
}

TEST(Config, ErrorsAreConfigErrors) {
  EXPECT_EQ(code_of([] { io::run_config_from({{"seed", "x"}}); }), Errc::config);
  EXPECT_EQ(code_of([] { io::run_config_from({{"scenario", {{"preset", "circle"}}}}); }), Errc::config);
  EXPECT_EQ(code_of([] { io::run_config_from({{"scenario", {{"mode", "fast"}}}}); }), Errc::config);
  EXPECT_EQ(code_of([] { io::run_config_from({{"integrator", {{"dt", -1.0}}}}); }), Errc::config);
  EXPECT_EQ(code_of([] { io::run_config_from({{"scenario", {{"horizon", -5.0}}}}); }), Errc::config);
  EXPECT_EQ(code_of([] { io::read_json("/nonexistent/config.json"); }), Errc::io);
}

TEST(Config, MalformedFileIsConfigError) {
  const auto dir = scratch("bad");
  std::filesystem::create_directories(dir);
  io::write_file(dir / "bad.json", "{ \"seed\": ");
  EXPECT_EQ(code_of([&] { io::read_json(dir / "bad.json"); }), Errc::config);
}

TEST(Csv, TrajectoryRoundTrip) {
  Gen g(101);
  TrajectoryLog log;
  for (int t = 1; t <= 20; ++t) {
    for (int id = 0; id < 3; ++id) {
      LogRecord r{double(t), id, g.in_ball(1000), g.in_ball(20), {0, g.integer(-3, 3), g.integer(-3, 3)}};
      r.phase = t == 20 && id == 0 ? Phase::arrived : Phase::enroute;
      r.held = id == 2;
      log.records.push_back(r);
    }
  }
  std::stringstream ss;
  io::write_trajectory_csv(ss, log, "deadbeef", 9);
  EXPECT_EQ(ss.str().rfind("# config_hash=deadbeef seed=9\n", 0), 0u);
  const auto back = io::read_trajectory_csv(ss);
  ASSERT_EQ(back.records.size(), log.records.size());
  EXPECT_EQ(back.dt, 1.0);
  for (std::size_t k = 0; k < log.records.size(); ++k) {
    const auto& a = log.records[k];
    const auto& b = back.records[k];
    EXPECT_EQ(a.id, b.id);
    EXPECT_LE(distance(a.position, b.position), 1e-3);
    EXPECT_LE(distance(a.velocity, b.velocity), 1e-3);
    EXPECT_TRUE(a.region == b.region);
    EXPECT_EQ(a.phase, b.phase);
    EXPECT_EQ(a.held, b.held);
  }
}

TEST(Csv, TrajectoryRejectsBadInput) {
  std::stringstream wrong_header("a,b,c\n");
  EXPECT_EQ(code_of([&] { io::read_trajectory_csv(wrong_header); }), Errc::io);
  std::stringstream short_row("t,id,x,y,z,vx,vy,vz,layer,q,r,phase\n1,2,3\n");
  EXPECT_EQ(code_of([&] { io::read_trajectory_csv(short_row); }), Errc::io);
  std::stringstream bad_num("t,id,x,y,z,vx,vy,vz,layer,q,r,phase\n1,a,0,0,0,0,0,0,0,0,0,enroute\n");
  EXPECT_EQ(code_of([&] { io::read_trajectory_csv(bad_num); }), Errc::io);
}

TEST(Csv, MfdRoundTrip) {
  std::vector<MfdSample> s(4);
  for (int k = 0; k < 4; ++k) {
    s[k].window_start = 60.0 * k;
    s[k].accumulation = 1.5 * k;
    s[k].outflow = 0.01 * k;
    s[k].density = s[k].accumulation / 0.785;
    s[k].flow = s[k].outflow / 0.785;
  }
  std::stringstream ss;
  io::write_mfd_csv(ss, s);
  const auto back = io::read_mfd_csv(ss);
  ASSERT_EQ(back.size(), 4u);
  for (int k = 0; k < 4; ++k) {
    EXPECT_EQ(back[k].window_start, s[k].window_start);
    EXPECT_NEAR(back[k].accumulation, s[k].accumulation, 1e-6);
    EXPECT_NEAR(back[k].outflow, s[k].outflow, 1e-6);
    EXPECT_NEAR(back[k].density, s[k].density, 1e-6);
  }
}

TEST(Bundle, WritesEveryFileAndReplaysByteIdentical) {
  const auto a = scratch("bundle_a");
  const auto b = scratch("bundle_b");
  for (const auto& dir : {a, b}) {
    Simulation sim(small_run("plus", 3));
    sim.run();
    io::write_bundle(dir, sim);
  }
  const json manifest = json::parse(slurp(a / "manifest.json"));
  ASSERT_EQ(manifest.at("files").size(), 5u);
  for (const auto& f : manifest.at("files")) {
    const std::string name = f.get<std::string>();
    ASSERT_TRUE(std::filesystem::exists(a / name)) << name;
    EXPECT_EQ(slurp(a / name), slurp(b / name)) << name;
  }
  EXPECT_EQ(slurp(a / "manifest.json"), slurp(b / "manifest.json"));
  const json metrics = json::parse(slurp(a / "metrics.json"));
  EXPECT_EQ(metrics.at("config_hash"), manifest.at("config_hash"));
  EXPECT_EQ(metrics.at("seed"), 3);
  EXPECT_EQ(metrics.at("conservation_violations"), 0);
  EXPECT_GT(metrics.at("spawned").get<long>(), 0);
}

TEST(Bundle, HorizonZeroStillValid) {
  auto c = small_run("plus", 1);
  c.scenario.horizon = 0.0;
  Simulation sim(c);
  sim.run();
  const auto s = io::summarize(sim, io::config_hash(c));
  EXPECT_TRUE(s.mfd.empty());
  EXPECT_TRUE(s.metrics.at("avg_min_separation_m").is_null());
  EXPECT_TRUE(s.fit.contains("error"));
}

TEST(Property, RandomKnobsRoundTrip) {
  Gen g(102);
  for (int trial = 0; trial < 50; ++trial) {
    json j = {{"seed", g.integer(1, 1 << 30)},
              {"scenario",
               {{"preset", std::vector<std::string>{"plus", "hash", "star"}[g.integer(0, 2)]},
                {"rate", g.uniform(0, 0.3)},
                {"sweep", g.coin()},
                {"horizon", g.uniform(10, 5000)},
                {"altitude", std::vector<std::string>{"flat", "thin", "thick"}[g.integer(0, 2)]}}},
              {"integrator", {{"omega_clamp", g.coin()}, {"waypoint_threshold", g.uniform(5, 50)}}},
              {"avoidance", {{"horizon", g.uniform(1, 20)}, {"fallback", g.coin()}}},
              {"replan", {{"period", g.uniform(1, 300)}, {"on_spawn", g.coin()}}},
              {"energy", {{"hover_kw", g.uniform(0, 5)}}}};
    const RunConfig a = io::run_config_from(j);
    const RunConfig b = io::run_config_from(io::to_json(a));
    ASSERT_EQ(io::config_hash(a), io::config_hash(b));
  }
}
