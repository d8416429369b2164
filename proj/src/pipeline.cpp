#include "gstz/pipeline.hpp"

#include <algorithm>
#include <cmath>

#include "gstz/artifacts.hpp"
#include "gstz/parallel.hpp"
#include "gstz/rng.hpp"

namespace gstz {

BatchSummary run_batch(const BatchConfig& cfg, const RewardModel& model,
                       std::vector<EpisodeResult>* episodes_out) {
  std::vector<EpisodeResult> results(cfg.episodes);
  parallel_for(cfg.episodes, cfg.threads, [&](int i) {
    Scenario sc = cfg.scenario;
    sc.seed = derive_seed(cfg.seed, static_cast<uint64_t>(i));
    EpisodeConfig ec = cfg.episode;
    ec.seed = derive_seed(cfg.seed, 0x10000u + static_cast<uint64_t>(i));
    results[i] = run_episode(sc, ec, model);
  });

  BatchSummary s;
  s.label = cfg.label;
  s.episodes = cfg.episodes;
  double time_sum = 0.0;
  EpisodeMetrics acc;
  for (const EpisodeResult& r : results) {
    switch (r.outcome) {
      case Outcome::kSuccess:
        ++s.successes;
        time_sum += r.completion_time;
        break;
      case Outcome::kCollision:
        ++s.collisions;
        break;
      case Outcome::kTimeout:
        ++s.timeouts;
        break;
    }
    acc.brake_avg += r.metrics.brake_avg;
    acc.throttle_avg += r.metrics.throttle_avg;
    acc.accel_max += r.metrics.accel_max;
    acc.brake_jerk_avg += r.metrics.brake_jerk_avg;
    acc.throttle_jerk_avg += r.metrics.throttle_jerk_avg;
    acc.ang_acc_avg += r.metrics.ang_acc_avg;
    acc.ang_acc_max += r.metrics.ang_acc_max;
    acc.ang_jerk_avg += r.metrics.ang_jerk_avg;
    acc.ang_jerk_max += r.metrics.ang_jerk_max;
  }
  const double inv = cfg.episodes ? 1.0 / cfg.episodes : 0.0;
  s.mean.brake_avg = acc.brake_avg * inv;
  s.mean.throttle_avg = acc.throttle_avg * inv;
  s.mean.accel_max = acc.accel_max * inv;
  s.mean.brake_jerk_avg = acc.brake_jerk_avg * inv;
  s.mean.throttle_jerk_avg = acc.throttle_jerk_avg * inv;
  s.mean.ang_acc_avg = acc.ang_acc_avg * inv;
  s.mean.ang_acc_max = acc.ang_acc_max * inv;
  s.mean.ang_jerk_avg = acc.ang_jerk_avg * inv;
  s.mean.ang_jerk_max = acc.ang_jerk_max * inv;
  s.time_avg = s.successes ? time_sum / s.successes : 0.0;
  if (episodes_out) *episodes_out = std::move(results);
  return s;
}

const std::vector<std::string> kSummaryColumns = {
    "model",          "time",          "succ_pct",       "coll_pct",
    "timeout_pct",    "brake_avg",     "thr_avg",        "acc_max",
    "brake_jerk_avg", "thr_jerk_avg",  "ang_acc_avg",    "ang_acc_max",
    "ang_jerk_avg",   "ang_jerk_max"};

std::vector<std::string> summary_row(const BatchSummary& s) {
  auto f = CsvWriter::format;
  return {s.label,
          f(s.time_avg),
          f(s.success_rate()),
          f(s.collision_rate()),
          f(s.timeout_rate()),
          f(s.mean.brake_avg),
          f(s.mean.throttle_avg),
          f(s.mean.accel_max),
          f(s.mean.brake_jerk_avg),
          f(s.mean.throttle_jerk_avg),
          f(s.mean.ang_acc_avg),
          f(s.mean.ang_acc_max),
          f(s.mean.ang_jerk_avg),
          f(s.mean.ang_jerk_max)};
}

void write_summary_csv(const std::vector<BatchSummary>& rows,
                       const std::string& path, const std::string& hash_hex) {
  CsvWriter csv(path, hash_hex, kSummaryColumns);
  for (const BatchSummary& s : rows) csv.row(summary_row(s));
}

// ---------------------------------------------------------------------------
// Config assembly

GridSpec grid_spec_from(const Config& c) {
  GridSpec g;
  g.width = c.get_int("grid.width", g.width);
  g.height = c.get_int("grid.height", g.height);
  g.resolution = c.get_double("grid.resolution", g.resolution);
  return g;
}

Scenario scenario_from(const Config& c) {
  Scenario sc;
  sc.lanes.n_lanes = c.get_int("scenario.lanes", sc.lanes.n_lanes);
  sc.lanes.lane_width = c.get_double("scenario.lane_width", sc.lanes.lane_width);
  sc.n_others = c.get_int("scenario.n_others", sc.n_others);
  sc.dt = c.get_double("scenario.dt", sc.dt);
  sc.timeout = c.get_double("scenario.timeout", sc.timeout);
  sc.spawn_span = c.get_double("scenario.spawn_span", sc.spawn_span);
  sc.ego_v0_min = c.get_double("scenario.ego_v0_min", sc.ego_v0_min);
  sc.ego_v0_max = c.get_double("scenario.ego_v0_max", sc.ego_v0_max);
  if (c.has("scenario.ego_v0")) {
    sc.ego_v0 = c.get_double("scenario.ego_v0", 0.0);
  }
  if (c.has("scenario.ego_lane")) {
    sc.ego_start_lane = c.get_int("scenario.ego_lane", 0);
  }
  if (c.has("scenario.goal_lane")) {
    sc.goal_lane = c.get_int("scenario.goal_lane", 0);
  }
  sc.others_speed_base =
      c.get_double("scenario.speed_base", sc.others_speed_base);
  sc.others_speed_jitter =
      c.get_double("scenario.speed_jitter", sc.others_speed_jitter);
  sc.seed = c.get_u64("seed", 0);
  return sc;
}

IrlConfig irl_config_from(const Config& c) {
  IrlConfig irl;
  irl.mode = c.get_str("train.mode", "spatiotemporal") == "non-temporal"
                 ? SvfMode::kNonTemporal
                 : SvfMode::kSpatioTemporal;
  irl.gamma = c.get_double("train.gamma", irl.gamma);
  irl.c_zero = c.get_double("train.c_zero", irl.c_zero);
  irl.learner_rollouts = c.get_int("train.rollouts", irl.learner_rollouts);
  irl.epochs = c.get_int("train.epochs", irl.epochs);
  irl.mppi = MppiConfig::training_budget();
  irl.mppi.samples = c.get_int("train.mppi.samples", irl.mppi.samples);
  irl.mppi.iterations = c.get_int("train.mppi.iterations", irl.mppi.iterations);
  irl.mppi.sigma_accel =
      c.get_double("mppi.sigma_accel", irl.mppi.sigma_accel);
  irl.mppi.sigma_steer =
      c.get_double("mppi.sigma_steer", irl.mppi.sigma_steer);
  irl.mppi.lambda = c.get_double("mppi.lambda", irl.mppi.lambda);
  irl.adam.lr = c.get_double("train.lr", irl.adam.lr);
  irl.adam.weight_decay = c.get_double("train.weight_decay",
                                       irl.adam.weight_decay);
  irl.seed = c.get_u64("seed", 0);
  irl.threads = c.get_int("threads", 1);
  return irl;
}

EpisodeConfig episode_config_from(const Config& c) {
  EpisodeConfig ec;
  ec.planner = c.get_str("eval.planner", "wpmpc") == "mppi"
                   ? PlannerKind::kMppi
                   : PlannerKind::kWpmpc;
  ec.safety_layer = c.get_bool("eval.safety", true);
  ec.safety_margin = c.get_double("eval.safety_margin", ec.safety_margin);
  ec.noise.scale = c.get_double("eval.noise_scale", 0.0);
  ec.mppi = MppiConfig::online_budget();
  ec.mppi.samples = c.get_int("eval.mppi.samples", ec.mppi.samples);
  ec.mppi.iterations = c.get_int("eval.mppi.iterations", ec.mppi.iterations);
  ec.mppi.sigma_accel = c.get_double("mppi.sigma_accel", ec.mppi.sigma_accel);
  ec.mppi.sigma_steer = c.get_double("mppi.sigma_steer", ec.mppi.sigma_steer);
  ec.mppi.lambda = c.get_double("mppi.lambda", ec.mppi.lambda);
  ec.mppi.execute_steps = c.get_int("eval.h", ec.mppi.execute_steps);
  ec.wpmpc.low_cost_quantile =
      c.get_double("wpmpc.quantile", ec.wpmpc.low_cost_quantile);
  ec.wpmpc.linearization_passes =
      c.get_int("wpmpc.passes", ec.wpmpc.linearization_passes);
  ec.wpmpc.squared_objective =
      c.get_str("wpmpc.objective", "squared") != "norm";
  ec.wpmpc.v_max = c.get_double("wpmpc.v_max", ec.wpmpc.v_max);
  ec.horizon = c.get_int("model.horizon", ec.horizon);
  return ec;
}

DatasetGenConfig dataset_config_from(const Config& c) {
  DatasetGenConfig d;
  d.count = c.get_int("dataset.count", d.count);
  d.seed = c.get_u64("dataset.seed", c.get_u64("seed", 0));
  d.horizon = c.get_int("model.horizon", d.horizon);
  d.scenario = scenario_from(c);
  d.lane_keep_fraction =
      c.get_double("dataset.lane_keep_fraction", d.lane_keep_fraction);
  d.v0_min = c.get_double("dataset.v0_min", d.v0_min);
  d.v0_max = c.get_double("dataset.v0_max", d.v0_max);
  d.warmup_max = c.get_double("dataset.warmup_max", d.warmup_max);
  return d;
}

std::unique_ptr<RewardModel> model_from(const Config& c) {
  const GridSpec spec = grid_spec_from(c);
  const int horizon = c.get_int("model.horizon", 30);
  const uint64_t seed = c.get_u64("seed", 0);
  const std::string arch = c.get_str("model.arch", "conv");
  if (arch == "linear") {
    return std::make_unique<LinearFeatureModel>(horizon, spec, kObsChannels,
                                                seed);
  }
  if (arch == "conv") {
    ConvModelDims dims;
    dims.c1 = c.get_int("model.c1", dims.c1);
    dims.c2 = c.get_int("model.c2", dims.c2);
    dims.c3 = c.get_int("model.c3", dims.c3);
    return std::make_unique<ConvEncoderDecoderModel>(horizon, spec,
                                                     kObsChannels, dims, seed);
  }
  throw ConfigError("unknown model.arch: " + arch);
}

}  // namespace gstz
