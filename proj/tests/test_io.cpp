#include <cstdio>
#include <cstring>
#include <fstream>

#include "doctest.h"
#include "gstz/artifacts.hpp"
#include "gstz/config.hpp"
#include "gstz/dataset.hpp"
#include "gstz/pipeline.hpp"

using namespace gstz;

namespace {

void write_file(const std::string& path, const std::string& content) {
  std::ofstream os(path);
  os << content;
}

std::string read_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

}  // namespace

TEST_CASE("config parsing, overrides, and hashing") {
  write_file("cfg_test.txt",
             "# comment\n"
             "seed = 7\n"
             "model.arch=linear\n"
             "train.lr = 0.005  # inline comment\n"
             "\n");
  Config c = Config::from_file("cfg_test.txt");
  CHECK(c.get_u64("seed", 0) == 7);
  CHECK(c.get_str("model.arch", "") == "linear");
  CHECK(c.get_double("train.lr", 0.0) == doctest::Approx(0.005));
  CHECK(c.get_int("missing", 42) == 42);

  const uint64_t h0 = c.hash();
  c.set_line("train.lr=0.01");
  CHECK(c.get_double("train.lr", 0.0) == doctest::Approx(0.01));
  CHECK(c.hash() != h0);

  // Same content, same hash, independent of insertion order.
  Config d;
  d.set("train.lr", "0.01");
  d.set("model.arch", "linear");
  d.set("seed", "7");
  CHECK(d.hash() == c.hash());

  SUBCASE("errors") {
    write_file("cfg_bad.txt", "not a pair\n");
    CHECK_THROWS_AS(Config::from_file("cfg_bad.txt"), ConfigError);
    CHECK_THROWS_AS(c.get_double("model.arch", 0.0), ConfigError);
    CHECK_THROWS_AS(c.set_line("nonsense"), ConfigError);
  }
}

TEST_CASE("STCM costmap export round trip with the pinned header") {
  GridSpec spec;
  spec.height = 8;
  spec.width = 12;
  SpatioTemporalCostmap cm{spec, 3, ChannelStack(3, 8, 12)};
  for (size_t i = 0; i < cm.maps.data().size(); ++i) {
    cm.maps.data()[i] = static_cast<double>(i % 17) / 17.0;
  }
  export_costmap_stcm(cm, "cm_test.stcm");

  const std::string bytes = read_file("cm_test.stcm");
  REQUIRE(bytes.size() == 4 + 4 + 4 + 4 + 4 + 3 * 8 * 12 * 4);
  CHECK(bytes.substr(0, 4) == "STCM");
  uint32_t t, h, w;
  std::memcpy(&t, bytes.data() + 4, 4);
  std::memcpy(&h, bytes.data() + 8, 4);
  std::memcpy(&w, bytes.data() + 12, 4);
  CHECK(t == 3);
  CHECK(h == 8);
  CHECK(w == 12);

  const SpatioTemporalCostmap back = import_costmap_stcm("cm_test.stcm");
  CHECK(back.horizon == 3);
  CHECK(back.spec.resolution == doctest::Approx(0.5));
  for (size_t i = 0; i < cm.maps.data().size(); ++i) {
    CHECK(back.maps.data()[i] ==
          doctest::Approx(cm.maps.data()[i]).epsilon(1e-7));
  }
}

TEST_CASE("PGM export carries the config hash comment") {
  GridSpec spec;
  spec.height = 4;
  spec.width = 6;
  SpatioTemporalCostmap cm{spec, 1, ChannelStack(1, 4, 6)};
  export_costmap_pgm(cm, 0, "cm_test.pgm", "deadbeef00000000");
  const std::string bytes = read_file("cm_test.pgm");
  CHECK(bytes.find("P5") == 0);
  CHECK(bytes.find("# config_hash=deadbeef00000000") != std::string::npos);
  // cost 0 renders white
  CHECK(static_cast<unsigned char>(bytes.back()) == 255);
}

TEST_CASE("native demonstration dataset round trip is exact") {
  DatasetGenConfig cfg;
  cfg.count = 3;
  cfg.seed = 21;
  cfg.horizon = 10;
  cfg.scenario.n_others = 6;
  const std::vector<Demonstration> demos = generate_demonstrations(cfg);
  REQUIRE(demos.size() == 3);
  save_demonstrations(demos, "demos_test.gdem");
  const std::vector<Demonstration> back =
      load_demonstrations_native("demos_test.gdem");
  REQUIRE(back.size() == demos.size());
  for (size_t i = 0; i < demos.size(); ++i) {
    CHECK(back[i].goal.source_lane == demos[i].goal.source_lane);
    CHECK(back[i].goal.target_lane == demos[i].goal.target_lane);
    CHECK(back[i].obs.channels.data() == demos[i].obs.channels.data());
    REQUIRE(back[i].states.size() == demos[i].states.size());
    for (size_t t = 0; t < demos[i].states.size(); ++t) {
      CHECK(back[i].states[t].x == demos[i].states[t].x);
      CHECK(back[i].states[t].y == demos[i].states[t].y);
      CHECK(back[i].states[t].psi == demos[i].states[t].psi);
      CHECK(back[i].states[t].v == demos[i].states[t].v);
    }
  }
}

TEST_CASE("ngsim loader") {
  const LaneGeometry lanes;

  SUBCASE("empty file: empty list, zero dropped") {
    write_file("ngsim_empty.csv", "vehicle_id,frame,x,y,v,lane_id\n");
    NgsimLoadStats stats;
    const auto demos =
        load_demonstrations_ngsim("ngsim_empty.csv", lanes, 30, GridSpec{}, &stats);
    CHECK(demos.empty());
    CHECK(stats.windows_dropped == 0);
  }

  SUBCASE("one 18 s lane change produces 151 sliding tuples") {
    // (18 - 3)/0.1 + 1 = 151 tuples of 31 states inside 181 frames.
    std::string csv = "vehicle_id,frame,x,y,v,lane_id\n";
    for (int f = 100; f <= 300; ++f) {
      const int lane = f < 200 ? 2 : 3;
      const double y = lane == 2 ? 5.25 : 8.75;
      csv += "7," + std::to_string(f) + "," + std::to_string(0.6 * f) + "," +
             std::to_string(y) + ",6.0," + std::to_string(lane) + "\n";
    }
    write_file("ngsim_one.csv", csv);
    NgsimLoadStats stats;
    const auto demos =
        load_demonstrations_ngsim("ngsim_one.csv", lanes, 30, GridSpec{}, &stats);
    CHECK(stats.lane_changes == 1);
    CHECK(stats.windows_dropped == 0);
    CHECK(static_cast<int>(demos.size()) == 151);
    for (const Demonstration& d : demos) {
      CHECK(d.states.size() == 31);
      CHECK(d.goal.source_lane == 1);  // csv lanes are 1-based
      CHECK(d.goal.target_lane == 2);
    }
  }

  SUBCASE("frame gaps drop the window with a count") {
    std::string csv = "vehicle_id,frame,x,y,v,lane_id\n";
    for (int f = 100; f <= 300; ++f) {
      if (f == 150) continue;  // gap inside the window
      const int lane = f < 200 ? 2 : 3;
      csv += "7," + std::to_string(f) + "," + std::to_string(0.6 * f) +
             ",5.25,6.0," + std::to_string(lane) + "\n";
    }
    write_file("ngsim_gap.csv", csv);
    NgsimLoadStats stats;
    const auto demos =
        load_demonstrations_ngsim("ngsim_gap.csv", lanes, 30, GridSpec{}, &stats);
    CHECK(demos.empty());
    CHECK(stats.windows_dropped == 1);
  }

  SUBCASE("schema violations name the row and column") {
    write_file("ngsim_bad.csv",
               "vehicle_id,frame,x,y,v,lane_id\n"
               "1,2,3.0,oops,5.0,2\n");
    try {
      load_demonstrations_ngsim("ngsim_bad.csv", lanes, 30, GridSpec{});
      FAIL("expected an exception");
    } catch (const std::runtime_error& e) {
      const std::string msg = e.what();
      CHECK(msg.find("row 2") != std::string::npos);
      CHECK(msg.find("'y'") != std::string::npos);
    }
  }
}

TEST_CASE("csv writer format and summary csv") {
  BatchSummary s;
  s.label = "gstz-wpmpc-s";
  s.episodes = 50;
  s.successes = 44;
  s.collisions = 4;
  s.timeouts = 2;
  s.time_avg = 14.25;
  write_summary_csv({s}, "summary_test.csv", "0123456789abcdef");
  const std::string content = read_file("summary_test.csv");
  CHECK(content.find("# config_hash=0123456789abcdef") == 0);
  CHECK(content.find("model,time,succ_pct") != std::string::npos);
  CHECK(content.find("gstz-wpmpc-s,14.250000,88.000000,8.000000,4.000000") !=
        std::string::npos);

  // Byte-identical on re-write.
  write_summary_csv({s}, "summary_test2.csv", "0123456789abcdef");
  CHECK(read_file("summary_test.csv") == read_file("summary_test2.csv"));
}

TEST_CASE("svg artifacts are written with the hash comment") {
  GridSpec spec;
  spec.height = 4;
  spec.width = 6;
  SpatioTemporalCostmap cm{spec, 1, ChannelStack(1, 4, 6)};
  svg_costmap(cm, 0, "plot_cm.svg", "costmap t=0", "beef");
  CHECK(read_file("plot_cm.svg").find("config_hash=beef") != std::string::npos);

  std::vector<StepLog> logs(5);
  for (int i = 0; i < 5; ++i) {
    logs[i].ego.x = i * 2.0;
    logs[i].ego.y = 5.25;
  }
  svg_trajectory(logs, LaneGeometry{}, "plot_traj.svg", "episode", "beef");
  CHECK(read_file("plot_traj.svg").find("polyline") != std::string::npos);

  svg_bars({"a", "b"}, {1.0, 2.0}, "plot_bars.svg", "metric", "beef");
  CHECK(read_file("plot_bars.svg").find("rect") != std::string::npos);
}
