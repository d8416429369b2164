#include "gstz/irl.hpp"

#include <cmath>
#include <cstdio>
#include <stdexcept>

#include "gstz/parallel.hpp"
#include "gstz/rng.hpp"

namespace gstz {

namespace {

bool finite_states(std::span<const VehicleState> states) {
  for (const VehicleState& s : states) {
    if (!(std::isfinite(s.x) && std::isfinite(s.y) && std::isfinite(s.psi) &&
          std::isfinite(s.v))) {
      return false;
    }
  }
  return true;
}

// Collapse per-timestep one-hot grids into a single discounted visitation
// image and repeat it across the horizon.
SvfStack collapse_discounted(const ChannelStack& onehots, double gamma) {
  const int T = onehots.channels();
  SvfStack out(T, onehots.height(), onehots.width());
  const size_t n = out.channel(0).size();
  std::vector<double> acc(n, 0.0);
  double g = 1.0;
  for (int t = 0; t < T; ++t) {
    const auto src = onehots.channel(t);
    for (size_t i = 0; i < n; ++i) acc[i] += g * src[i];
    g *= gamma;
  }
  for (int t = 0; t < T; ++t) {
    auto dst = out.channel(t);
    std::copy(acc.begin(), acc.end(), dst.begin());
  }
  return out;
}

// Deterministic Fisher-Yates on top of the counter stream; std::shuffle is
// implementation-defined.
void shuffle_indices(std::vector<int>& idx, uint64_t seed) {
  const CounterRng rng(seed);
  for (size_t i = idx.size(); i > 1; --i) {
    const size_t j =
        static_cast<size_t>(rng.uniform(i) * static_cast<double>(i));
    std::swap(idx[i - 1], idx[std::min(j, i - 1)]);
  }
}

}  // namespace

SvfStack demo_svf(const Demonstration& demo, const GridSpec& spec,
                  SvfMode mode, double gamma) {
  const int T = static_cast<int>(demo.states.size()) - 1;
  const VehicleState& anchor = demo.states.front();
  const std::span<const VehicleState> future(demo.states.data() + 1,
                                             static_cast<size_t>(T));
  ChannelStack onehots = rasterize_trajectory(future, anchor, spec);
  if (mode == SvfMode::kSpatioTemporal) return onehots;
  return collapse_discounted(onehots, gamma);
}

SvfStack learner_svf_from_costmap(const SpatioTemporalCostmap& costmap,
                                  const Demonstration& demo,
                                  const IrlConfig& cfg, uint64_t rollout_seed) {
  const int T = costmap.horizon;
  const GridSpec& spec = costmap.spec;
  const VehicleState& start = demo.states.front();
  const int K = cfg.learner_rollouts;

  std::vector<ChannelStack> stacks(K);
  std::vector<char> ok(K, 0);
  MppiConfig mppi = cfg.mppi;
  mppi.horizon = T;
  mppi.threads = 1;  // parallelism lives at the rollout level here

  parallel_for(K, cfg.threads, [&](int k) {
    MppiConfig kcfg = mppi;
    kcfg.seed = derive_seed(rollout_seed, static_cast<uint64_t>(k));
    // Each rollout optimizes from its own constant-control warm start drawn
    // at the noise scale. On map regions the solver is indifferent about,
    // the spread keeps E[mu] from collapsing onto the demonstration, which
    // is what supplies the longitudinal part of the (mu_D - E[mu]) signal.
    const CounterRng wrng(derive_seed(rollout_seed, 0x3a00u + k));
    Control base;
    base.accel = 2.0 * mppi.sigma_accel * (2.0 * wrng.uniform(0) - 1.0);
    base.steer = 2.0 * mppi.sigma_steer * (2.0 * wrng.uniform(1) - 1.0);
    base = clamp_control(base, cfg.vehicle);
    const std::vector<Control> warm(T, base);
    const TrajectoryPlan plan =
        solve(start, costmap, start, warm, kcfg, cfg.vehicle);
    if (!finite_states(plan.states)) return;
    stacks[k] = rasterize_trajectory(plan.states, start, spec);
    ok[k] = 1;
  });

  SvfStack avg(T, spec.height, spec.width);
  int valid = 0;
  for (int k = 0; k < K; ++k) {
    if (!ok[k]) continue;
    ++valid;
    auto& a = avg.data();
    const auto& s = stacks[k].data();
    for (size_t i = 0; i < a.size(); ++i) a[i] += s[i];
  }
  if (valid == 0) {
    throw std::runtime_error("all learner rollouts produced non-finite states");
  }
  if (valid < K) {
    std::fprintf(stderr, "learner_svf: skipped %d/%d non-finite rollouts\n",
                 K - valid, K);
  }
  for (double& x : avg.data()) x /= valid;
  if (cfg.mode == SvfMode::kNonTemporal) {
    // Average of collapsed stacks equals collapse of the average.
    return collapse_discounted(avg, cfg.gamma);
  }
  return avg;
}

SvfStack learner_svf(const RewardModel& model, const Demonstration& demo,
                     const IrlConfig& cfg, uint64_t rollout_seed) {
  const SpatioTemporalCostmap costmap = model.forward(demo.obs);
  return learner_svf_from_costmap(costmap, demo, cfg, rollout_seed);
}

ChannelStack medirl_gradient(const SvfStack& demo, const SvfStack& learner) {
  if (!demo.same_shape(learner)) {
    throw std::invalid_argument("SVF shapes do not match");
  }
  ChannelStack g(demo.channels(), demo.height(), demo.width());
  const auto& d = demo.data();
  const auto& l = learner.data();
  auto& out = g.data();
  for (size_t i = 0; i < out.size(); ++i) out[i] = l[i] - d[i];
  return g;
}

ChannelStack zeroing_gradient(const SvfStack& demo, const SvfStack& learner,
                              const SpatioTemporalCostmap& costmap,
                              double c_zero) {
  if (!demo.same_shape(learner) || !demo.same_shape(costmap.maps)) {
    throw std::invalid_argument("shapes do not match");
  }
  ChannelStack g(demo.channels(), demo.height(), demo.width());
  const auto& d = demo.data();
  const auto& l = learner.data();
  const auto& j = costmap.maps.data();
  auto& out = g.data();
  // Squared-error-to-zero supervision on R, normalized per timestep map so
  // the label term and the visitation matching carry comparable weight
  // through the shared parameters: with the default c_zero = T/(W*H), the
  // per-stack gradient mass of each term is the same order. The raw per-cell
  // sum swamps the matching term ~15:1 and saturates the model.
  const double scale = 2.0 * c_zero / demo.channels();
  for (size_t i = 0; i < out.size(); ++i) {
    if (d[i] + l[i] > 0.0) continue;  // visited by either: no zeroing label
    out[i] = scale * (1.0 - j[i]);
  }
  return g;
}

TrainResult train(std::span<const Demonstration> dataset, RewardModel& model,
                  const IrlConfig& cfg,
                  const std::function<void(const EpochMetrics&)>& on_epoch) {
  if (dataset.empty()) {
    throw std::invalid_argument("empty demonstration dataset");
  }
  const int T = model.horizon();
  for (size_t i = 0; i < dataset.size(); ++i) {
    if (static_cast<int>(dataset[i].states.size()) != T + 1) {
      throw std::invalid_argument("demonstration " + std::to_string(i) +
                                  " length does not match model horizon");
    }
  }
  const GridSpec& spec = model.grid_spec();
  const double c_zero = cfg.zeroing_weight(T, spec);
  AdamOptimizer adam(cfg.adam);
  TrainResult result;

  std::vector<int> order(dataset.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    shuffle_indices(order, derive_seed(cfg.seed, 0x5u + epoch));
    EpochMetrics em;
    em.epoch = epoch;

    for (size_t step = 0; step < order.size(); ++step) {
      const int sample = order[step];
      const Demonstration& demo = dataset[sample];
      const SpatioTemporalCostmap costmap = model.forward(demo.obs);
      const SvfStack mu_d = demo_svf(demo, spec, cfg.mode, cfg.gamma);
      const uint64_t rseed = derive_seed(
          cfg.seed, (static_cast<uint64_t>(epoch) << 20) ^ sample);
      const SvfStack mu_e =
          learner_svf_from_costmap(costmap, demo, cfg, rseed);

      ChannelStack grad_r = medirl_gradient(mu_d, mu_e);
      const ChannelStack zero_r =
          zeroing_gradient(mu_d, mu_e, costmap, c_zero);
      {
        auto& g = grad_r.data();
        const auto& z = zero_r.data();
        for (size_t i = 0; i < g.size(); ++i) g[i] += z[i];
      }
      // Reward gradient -> costmap gradient (R = 1 - J).
      ChannelStack grad_j = grad_r;
      for (double& x : grad_j.data()) x = -x;

      // Diagnostics before the update.
      {
        const auto& d = mu_d.data();
        const auto& l = mu_e.data();
        const auto& j = costmap.maps.data();
        double ld = 0.0, lz = 0.0, overlap = 0.0;
        for (size_t i = 0; i < j.size(); ++i) {
          const double r = 1.0 - j[i];
          ld += (d[i] - l[i]) * r;
          if (d[i] + l[i] <= 0.0) lz += r * r;
          overlap += std::min(d[i], l[i]);
        }
        lz *= c_zero / T;
        if (!std::isfinite(ld) || !std::isfinite(lz)) {
          throw std::runtime_error("non-finite loss at sample " +
                                   std::to_string(sample));
        }
        em.ld_proxy += ld;
        em.l_zero += lz;
        em.svf_overlap += overlap / T;
      }

      std::vector<double> grad;
      try {
        grad = model.backward(demo.obs, grad_j);
        adam.step(model, grad);
      } catch (const std::runtime_error& e) {
        throw std::runtime_error(std::string(e.what()) + " (sample " +
                                 std::to_string(sample) + ")");
      }
      double gn = 0.0;
      for (double g : grad) gn += g * g;
      em.grad_norm += std::sqrt(gn);
    }

    const double inv_n = 1.0 / static_cast<double>(order.size());
    em.ld_proxy *= inv_n;
    em.l_zero *= inv_n;
    em.svf_overlap *= inv_n;
    em.grad_norm *= inv_n;
    result.metrics.push_back(em);
    if (on_epoch) on_epoch(em);
  }
  return result;
}

}  // namespace gstz
