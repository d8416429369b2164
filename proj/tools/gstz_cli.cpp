// Command-line front end: train models, roll out and evaluate planners,
// export costmaps, and plot results. All randomness flows from --seed.

#include <CLI11.hpp>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "gstz/artifacts.hpp"
#include "gstz/config.hpp"
#include "gstz/dataset.hpp"
#include "gstz/irl.hpp"
#include "gstz/parallel.hpp"
#include "gstz/pipeline.hpp"
#include "gstz/reward_model.hpp"
#include "gstz/rng.hpp"
#include "gstz/sim.hpp"

namespace fs = std::filesystem;
using namespace gstz;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitRuntime = 3;

struct CommonArgs {
  std::string config_path;
  std::vector<std::string> overrides;
  std::string out_dir = "out";
  std::string model_path;
  std::string label;
  std::string input;
  int64_t seed = -1;
  int threads = 0;
  int episodes = -1;
};

Config assemble_config(const CommonArgs& args) {
  Config cfg;
  if (!args.config_path.empty()) cfg = Config::from_file(args.config_path);
  for (const std::string& line : args.overrides) cfg.set_line(line);
  if (args.seed >= 0) cfg.set("seed", std::to_string(args.seed));
  if (args.threads > 0) cfg.set("threads", std::to_string(args.threads));
  if (args.episodes >= 0) cfg.set("eval.episodes", std::to_string(args.episodes));
  if (!cfg.has("threads")) cfg.set("threads", std::to_string(default_threads()));
  return cfg;
}

std::vector<Demonstration> load_training_data(const Config& cfg) {
  const std::string source = cfg.get_str("train.demos", "scripted");
  if (source == "scripted") {
    return generate_demonstrations(dataset_config_from(cfg));
  }
  if (source.size() > 4 && source.substr(source.size() - 4) == ".csv") {
    NgsimLoadStats stats;
    LaneGeometry lanes = scenario_from(cfg).lanes;
    auto demos = load_demonstrations_ngsim(source, lanes,
                                           cfg.get_int("model.horizon", 30),
                                           grid_spec_from(cfg), &stats);
    std::fprintf(stderr,
                 "ngsim: %d lane changes, %d windows dropped, %d tuples\n",
                 stats.lane_changes, stats.windows_dropped, stats.tuples);
    return demos;
  }
  return load_demonstrations_native(source);
}

int cmd_train(const CommonArgs& args) {
  const Config cfg = assemble_config(args);
  fs::create_directories(args.out_dir);
  const auto demos = load_training_data(cfg);
  if (demos.empty()) {
    std::fprintf(stderr, "no demonstrations to train on\n");
    return kExitRuntime;
  }
  auto model = model_from(cfg);
  IrlConfig irl = irl_config_from(cfg);

  CsvWriter metrics(args.out_dir + "/train_metrics.csv", cfg.hash_hex(),
                    {"epoch", "ld_proxy", "l_zero", "svf_overlap", "grad_norm"});
  train(demos, *model, irl, [&](const EpochMetrics& m) {
    metrics.row_values({static_cast<double>(m.epoch), m.ld_proxy, m.l_zero,
                        m.svf_overlap, m.grad_norm});
    std::fprintf(stderr, "epoch %d  ld %.4f  l_zero %.5f  overlap %.3f\n",
                 m.epoch, m.ld_proxy, m.l_zero, m.svf_overlap);
  });

  const std::string ckpt = args.model_path.empty()
                               ? args.out_dir + "/model.gstz"
                               : args.model_path;
  save_checkpoint(*model, ckpt);
  std::fprintf(stderr, "saved %s\n", ckpt.c_str());
  return kExitOk;
}

int cmd_rollout(const CommonArgs& args) {
  const Config cfg = assemble_config(args);
  fs::create_directories(args.out_dir);
  const auto model = load_checkpoint(args.model_path);
  const Scenario sc = scenario_from(cfg);
  EpisodeConfig ec = episode_config_from(cfg);
  ec.seed = derive_seed(cfg.get_u64("seed", 0), 0x2011);
  const EpisodeResult r = run_episode(sc, ec, *model);

  CsvWriter log(args.out_dir + "/episode.csv", cfg.hash_hex(),
                {"t", "wp_x", "wp_y", "x", "y", "psi", "v", "accel", "steer",
                 "authorized", "valid_len", "plan_cost"});
  for (const StepLog& l : r.logs) {
    log.row_values({l.t, l.wp_x, l.wp_y, l.ego.x, l.ego.y, l.ego.psi, l.ego.v,
                    l.cmd.accel, l.cmd.steer, static_cast<double>(l.authorized),
                    static_cast<double>(l.valid_len), l.plan_cost});
  }
  svg_trajectory(r.logs, sc.lanes, args.out_dir + "/episode.svg",
                 std::string("episode: ") + outcome_name(r.outcome),
                 cfg.hash_hex());
  std::printf("outcome=%s time=%.1f steps=%zu\n", outcome_name(r.outcome),
              r.completion_time, r.logs.size());
  return kExitOk;
}

int cmd_eval(const CommonArgs& args) {
  const Config cfg = assemble_config(args);
  fs::create_directories(args.out_dir);
  const auto model = load_checkpoint(args.model_path);

  BatchConfig bc;
  bc.label = args.label.empty() ? cfg.get_str("eval.planner", "wpmpc")
                                : args.label;
  bc.episodes = cfg.get_int("eval.episodes", 50);
  bc.scenario = scenario_from(cfg);
  bc.episode = episode_config_from(cfg);
  bc.seed = cfg.get_u64("seed", 0);
  bc.threads = cfg.get_int("threads", 1);

  std::vector<EpisodeResult> episodes;
  const BatchSummary summary = run_batch(bc, *model, &episodes);
  write_summary_csv({summary}, args.out_dir + "/summary.csv", cfg.hash_hex());

  CsvWriter per_ep(args.out_dir + "/episodes.csv", cfg.hash_hex(),
                   {"episode", "outcome", "time", "accel_max", "ang_acc_max"});
  for (size_t i = 0; i < episodes.size(); ++i) {
    per_ep.row({std::to_string(i), outcome_name(episodes[i].outcome),
                CsvWriter::format(episodes[i].completion_time),
                CsvWriter::format(episodes[i].metrics.accel_max),
                CsvWriter::format(episodes[i].metrics.ang_acc_max)});
  }
  std::printf("%s: %d/%d success, %d collision, %d timeout (time %.1f s)\n",
              summary.label.c_str(), summary.successes, summary.episodes,
              summary.collisions, summary.timeouts, summary.time_avg);
  return kExitOk;
}

int cmd_export_costmap(const CommonArgs& args) {
  const Config cfg = assemble_config(args);
  fs::create_directories(args.out_dir);
  const auto model = load_checkpoint(args.model_path);

  // Observation from a seeded scene at the moment the expert would start.
  Scenario sc = scenario_from(cfg);
  const World w = make_world(sc);
  const Demonstration demo = scripted_expert(
      w, w.goal.target_lane, model->horizon(),
      derive_seed(cfg.get_u64("seed", 0), 0xec));
  const SpatioTemporalCostmap cm = model->forward(demo.obs);

  export_costmap_stcm(cm, args.out_dir + "/costmap.stcm");
  for (int t = 0; t < cm.horizon; ++t) {
    char name[64];
    std::snprintf(name, sizeof(name), "/costmap_t%02d.pgm", t);
    export_costmap_pgm(cm, t, args.out_dir + name, cfg.hash_hex());
  }
  std::printf("wrote costmap.stcm and %d pgm maps to %s\n", cm.horizon,
              args.out_dir.c_str());
  return kExitOk;
}

int cmd_plot(const CommonArgs& args) {
  const Config cfg = assemble_config(args);
  fs::create_directories(args.out_dir);
  const std::string& in = args.input;
  if (in.size() > 5 && in.substr(in.size() - 5) == ".stcm") {
    const SpatioTemporalCostmap cm = import_costmap_stcm(in);
    for (int t : {0, cm.horizon / 2, cm.horizon - 1}) {
      char name[64];
      std::snprintf(name, sizeof(name), "/costmap_t%02d.svg", t);
      svg_costmap(cm, t, args.out_dir + name,
                  "costmap t=" + std::to_string(t), cfg.hash_hex());
    }
    return kExitOk;
  }

  // CSV: either a batch summary (one SVG per metric column) or an episode log
  // (trajectory overlay).
  std::ifstream is(in);
  if (!is) {
    std::fprintf(stderr, "cannot open %s\n", in.c_str());
    return kExitRuntime;
  }
  std::string line, header;
  std::getline(is, line);  // config hash comment
  std::getline(is, header);
  if (header.rfind("model,", 0) == 0) {
    std::vector<std::string> columns;
    std::istringstream hs(header);
    std::string col;
    while (std::getline(hs, col, ',')) columns.push_back(col);
    std::vector<std::vector<std::string>> rows;
    while (std::getline(is, line)) {
      std::vector<std::string> cells;
      std::istringstream ls(line);
      while (std::getline(ls, col, ',')) cells.push_back(col);
      if (cells.size() == columns.size()) rows.push_back(cells);
    }
    for (size_t c = 1; c < columns.size(); ++c) {
      std::vector<std::string> labels;
      std::vector<double> values;
      for (const auto& r : rows) {
        labels.push_back(r[0]);
        values.push_back(std::stod(r[c]));
      }
      svg_bars(labels, values, args.out_dir + "/metric_" + columns[c] + ".svg",
               columns[c], cfg.hash_hex());
    }
    std::printf("wrote %zu metric plots to %s\n", columns.size() - 1,
                args.out_dir.c_str());
    return kExitOk;
  }
  if (header.rfind("t,", 0) == 0) {
    std::vector<StepLog> logs;
    while (std::getline(is, line)) {
      std::istringstream ls(line);
      std::string cell;
      std::vector<double> v;
      while (std::getline(ls, cell, ',')) v.push_back(std::stod(cell));
      if (v.size() < 7) continue;
      StepLog l;
      l.t = v[0];
      l.ego.x = v[3];
      l.ego.y = v[4];
      l.ego.psi = v[5];
      l.ego.v = v[6];
      logs.push_back(l);
    }
    svg_trajectory(logs, scenario_from(cfg).lanes,
                   args.out_dir + "/trajectory.svg", "episode trajectory",
                   cfg.hash_hex());
    std::printf("wrote trajectory plot\n");
    return kExitOk;
  }
  std::fprintf(stderr, "unrecognized input format: %s\n", in.c_str());
  return kExitRuntime;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"goal-conditioned spatiotemporal costmap learning and MPC"};
  app.require_subcommand(1);

  CommonArgs args;
  app.add_option("--config", args.config_path, "key=value config file");
  app.add_option("--set", args.overrides, "config override key=value")
      ->take_all();
  app.add_option("--seed", args.seed, "master seed (overrides config)");
  app.add_option("--threads", args.threads, "worker threads");
  app.add_option("--out", args.out_dir, "output directory");

  CLI::App* train_cmd = app.add_subcommand("train", "train a costmap model");
  train_cmd->add_option("--model", args.model_path, "checkpoint output path");

  CLI::App* rollout_cmd =
      app.add_subcommand("rollout", "run one closed-loop episode");
  rollout_cmd->add_option("--model", args.model_path, "checkpoint")->required();

  CLI::App* eval_cmd =
      app.add_subcommand("eval", "run a seeded batch of episodes");
  eval_cmd->add_option("--model", args.model_path, "checkpoint")->required();
  eval_cmd->add_option("--n", args.episodes, "episode count");
  eval_cmd->add_option("--label", args.label, "summary row label");

  CLI::App* export_cmd =
      app.add_subcommand("export-costmap", "predict and export a costmap");
  export_cmd->add_option("--model", args.model_path, "checkpoint")->required();

  CLI::App* plot_cmd = app.add_subcommand("plot", "render SVG figures");
  plot_cmd->add_option("--input", args.input, "summary csv, episode csv, or stcm")
      ->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (train_cmd->parsed()) return cmd_train(args);
    if (rollout_cmd->parsed()) return cmd_rollout(args);
    if (eval_cmd->parsed()) return cmd_eval(args);
    if (export_cmd->parsed()) return cmd_export_costmap(args);
    if (plot_cmd->parsed()) return cmd_plot(args);
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kExitConfig;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitRuntime;
  }
  return kExitConfig;
}
