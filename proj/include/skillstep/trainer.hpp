#pragma once

#include <chrono>
#include <cmath>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "skillstep/checkpoint.hpp"
#include "skillstep/config.hpp"
#include "skillstep/metrics.hpp"
#include "skillstep/policy.hpp"
#include "skillstep/rollout.hpp"

namespace skillstep {

struct EvalReport {
  int episodes = 0;
  float mean = 0.0f;
  float stdev = 0.0f;
  bool no_data = true;
  std::vector<float> scores;
};

/// Goal-conditioned episode driver. `policy(s, g, t)` supplies the action at
/// step t; episodes start at the anchor cell and end on success or horizon.
template <typename Policy>
EvalReport eval_policy(const MazeSpec& spec, const EnvConfig& env_cfg,
                       const ShiftConfig& shift, int episodes, uint64_t seed,
                       Policy&& policy) {
  shift.validate();
  EvalReport rep;
  rep.episodes = episodes;
  if (episodes == 0) return rep;
  std::mt19937 rng(static_cast<uint32_t>(derive_seed(seed, 0x09a1)));
  std::uniform_int_distribution<size_t> pick(0, shift.eval_cells.size() - 1);
  const Vec2 start = spec.cell_center(spec.free_cells().front());
  for (int ep = 0; ep < episodes; ++ep) {
    const Goal goal{spec.cell_center(shift.eval_cells[pick(rng)])};
    EnvState s = reset(spec, start);
    bool done = false;
    for (int t = 0; t < env_cfg.horizon && !done; ++t) {
      const Vec2 a = policy(s, goal, t);
      s = step(spec, s, a);
      done = reward(s, goal, env_cfg) >= 1.0f;
    }
    rep.scores.push_back(normalized_score(s, goal));
  }
  double acc = 0.0;
  for (float v : rep.scores) acc += v;
  rep.mean = static_cast<float>(acc / rep.scores.size());
  double var = 0.0;
  for (float v : rep.scores) var += (v - rep.mean) * (v - rep.mean);
  rep.stdev = static_cast<float>(std::sqrt(var / rep.scores.size()));
  rep.no_data = false;
  return rep;
}

/// Mean/std normalized score of the trained hierarchy over eval-region goals,
/// acting deterministically (mean skill).
inline EvalReport eval_zeroshot(const ModelBundle& b, const MazeSpec& spec,
                                const EnvConfig& env_cfg, const ShiftConfig& shift,
                                int episodes, uint64_t seed) {
  ActState actor;
  return eval_policy(spec, env_cfg, shift, episodes, seed,
                     [&](const EnvState& s, const Goal& g, int t) {
                       if (t == 0) actor = ActState{};
                       return act(b, s, g, actor, nullptr);
                     });
}

/// Oracle controller for the eval protocol: replans a PD waypoint rollout at
/// episode start and replays its actions.
class ScriptedController {
 public:
  ScriptedController(const MazeSpec& spec, const EnvConfig& cfg)
      : spec_(&spec), cfg_(cfg) {}

  Vec2 operator()(const EnvState& s, const Goal& g, int t) {
    if (t == 0) plan_ = expert_rollout_from(*spec_, cfg_, s, g).traj.actions;
    if (t < static_cast<int>(plan_.size())) return plan_[static_cast<size_t>(t)];
    return Vec2{0.0f, 0.0f};
  }

 private:
  const MazeSpec* spec_;
  EnvConfig cfg_;
  std::vector<Vec2> plan_;
};

/// Mean posterior-mean action reconstruction error over held-out slices.
inline float heldout_reconstruction(const ModelBundle& b, const DatasetStore& heldout,
                                    int n_slices, uint64_t seed) {
  std::mt19937 rng(static_cast<uint32_t>(derive_seed(seed, 0x4e1d)));
  double acc = 0.0;
  for (int i = 0; i < n_slices; ++i)
    acc += skill_reconstruction_error(
        b, sample_subtrajectory(heldout, b.cfg.skill_horizon, rng));
  return static_cast<float>(acc / std::max(1, n_slices));
}

/// Mean jump-vs-chained dynamics gap over held-out slices.
inline float heldout_composition_gap(const ModelBundle& b, const DatasetStore& heldout,
                                     int n_slices, uint64_t seed) {
  std::mt19937 rng(static_cast<uint32_t>(derive_seed(seed, 0xc09a)));
  double acc = 0.0;
  for (int i = 0; i < n_slices; ++i)
    acc += composition_gap(b, sample_subtrajectory(heldout, b.cfg.skill_horizon, rng));
  return static_cast<float>(acc / std::max(1, n_slices));
}

struct BatchStats {
  float skill = 0.0f;
  float prior = 0.0f;
  float model = 0.0f;
  float sg = 0.0f;
  float total = 0.0f;
};

/// One joint gradient step on a sampled batch. Returns the batch-mean loss
/// components (weighted total included).
inline BatchStats train_batch(const TrainConfig& cfg, ModelBundle& b, DatasetStore& store,
                              std::mt19937& data_rng, std::mt19937& noise_rng,
                              std::mt19937& goal_rng) {
  const int H = cfg.skill_horizon;
  auto offline = b.offline_sets();
  for (ParamSet* set : offline) set->zero_grad();
  std::normal_distribution<float> n01(0.0f, 1.0f);
  BatchStats stats;
  for (int i = 0; i < cfg.batch_size; ++i) {
    const SampleRef ref = sample_ref(store, H, data_rng);
    const SubTrajectory sub = make_subtrajectory(store, ref, H);
    const Goal g = relabel_goal(store.trajectories[static_cast<size_t>(ref.traj)],
                                ref.offset, cfg.relabel_mode(), H, goal_rng);
    const SampleInputs in = make_inputs(b, sub, g);
    Tensor enc_noise({cfg.z_dim});
    Tensor zhat_noise({cfg.z_dim});
    for (int d = 0; d < cfg.z_dim; ++d) enc_noise.at(d) = n01(noise_rng);
    for (int d = 0; d < cfg.z_dim; ++d) zhat_noise.at(d) = n01(noise_rng);

    Tape tp;
    const SkillLossTerms sk = skill_loss(tp, b, in, enc_noise, cfg.beta);
    const VarId pr = prior_loss(tp, b, in);
    const ModelLossTerms ml = model_loss(tp, b, in, sk.posterior, sk.z);
    const SgLossTerms sg = sg_loss(tp, b, in, sk.posterior, zhat_noise, cfg.use_consistency());
    VarId total = tp.scale(sk.total, cfg.weights.skill);
    total = tp.add(total, tp.scale(pr, cfg.weights.prior));
    total = tp.add(total, tp.scale(ml.total, cfg.weights.model));
    total = tp.add(total, tp.scale(sg.total, cfg.weights.sg));
    tp.backward(total, 1.0f / static_cast<float>(cfg.batch_size));

    stats.skill += tp.scalar_value(sk.total);
    stats.prior += tp.scalar_value(pr);
    stats.model += tp.scalar_value(ml.total);
    stats.sg += tp.scalar_value(sg.total);
    stats.total += tp.scalar_value(total);
  }
  const float inv = 1.0f / static_cast<float>(cfg.batch_size);
  stats.skill *= inv;
  stats.prior *= inv;
  stats.model *= inv;
  stats.sg *= inv;
  stats.total *= inv;
  clip_global_norm(offline, cfg.grad_clip);
  for (ParamSet* set : offline) adam_step(*set, cfg.lr);
  align_targets(b, cfg.ema_rate);
  return stats;
}

struct TrainResult {
  std::vector<MetricsRecord> metrics;
  std::vector<int> coverage;  // entry 0 = expert-only, then one per iteration
  float initial_epoch_loss = 0.0f;
  float final_epoch_loss = 0.0f;
  float heldout_recon_init = 0.0f;
  float heldout_recon_final = 0.0f;
  float heldout_gap_init = 0.0f;
  float heldout_gap_final = 0.0f;
  std::vector<EvalReport> iteration_evals;
  std::string final_checkpoint;
};

inline std::string checkpoint_path(const std::string& out_dir, int iteration) {
  return out_dir + "/checkpoint_iter_" + std::to_string(iteration) + ".ckpt";
}
inline std::string dataset_path(const std::string& out_dir, int iteration) {
  return out_dir + "/dataset_iter_" + std::to_string(iteration) + ".bin";
}

/// Iterative offline phase: epochs of joint updates, then model-guided
/// rollouts appended to the store, repeated. Checkpoints, dataset snapshots
/// and metrics land in out_dir. `resume_iteration` > 0 continues a previous
/// run whose checkpoint/dataset snapshots were already loaded by the caller;
/// the per-iteration seed streams make the result identical to an
/// uninterrupted run.
inline TrainResult train_offline(const TrainConfig& cfg, ModelBundle& b,
                                 DatasetStore& store, const std::string& out_dir,
                                 int resume_iteration = 0) {
  cfg.validate();
  const MazeSpec spec = cfg.maze();
  const EnvConfig env_cfg = cfg.env_config();
  const RolloutConfig roll_cfg = cfg.rollout_config();
  const ShiftConfig eval_shift = make_shift_config(spec, ShiftLevel::kNone);
  const uint64_t config_hash = cfg.hash(spec);
  std::filesystem::create_directories(out_dir);

  const DatasetStore heldout = generate_expert_dataset(
      spec, make_shift_config(spec, ShiftLevel::kNone), 32,
      derive_seed(cfg.seed, 0x4e1d0), env_cfg, cfg.skill_horizon);
  constexpr int kHeldoutSlices = 64;

  TrainResult res;
  res.heldout_recon_init = heldout_reconstruction(b, heldout, kHeldoutSlices, cfg.seed);
  res.heldout_gap_init = heldout_composition_gap(b, heldout, kHeldoutSlices, cfg.seed);
  if (resume_iteration == 0)
    res.coverage.push_back(goal_coverage(store, cfg.coverage_bin));

  const auto t0 = std::chrono::steady_clock::now();
  auto elapsed = [&] {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  };

  for (int iter = resume_iteration + 1; iter <= cfg.iterations; ++iter) {
    std::mt19937 data_rng(static_cast<uint32_t>(
        derive_seed(cfg.seed, 0xda7a0, static_cast<uint64_t>(iter))));
    std::mt19937 noise_rng(static_cast<uint32_t>(
        derive_seed(cfg.seed, 0x015e0, static_cast<uint64_t>(iter))));
    std::mt19937 goal_rng(static_cast<uint32_t>(
        derive_seed(cfg.seed, 0x90a10, static_cast<uint64_t>(iter))));

    for (int epoch = 1; epoch <= cfg.epochs_per_iteration; ++epoch) {
      BatchStats acc;
      for (int batch = 0; batch < cfg.batches_per_epoch; ++batch) {
        const BatchStats s = train_batch(cfg, b, store, data_rng, noise_rng, goal_rng);
        if (!std::isfinite(s.total)) {
          save_checkpoint(b, iter, config_hash, out_dir + "/diagnostic.ckpt");
          throw DataError("train_offline: non-finite loss at iteration " +
                          std::to_string(iter) + " epoch " + std::to_string(epoch) +
                          " batch " + std::to_string(batch) +
                          "; diagnostic checkpoint written");
        }
        acc.skill += s.skill;
        acc.prior += s.prior;
        acc.model += s.model;
        acc.sg += s.sg;
        acc.total += s.total;
      }
      const float inv = 1.0f / static_cast<float>(cfg.batches_per_epoch);
      MetricsRecord row;
      row.iteration = iter;
      row.epoch = epoch;
      row.skill_loss = acc.skill * inv;
      row.prior_loss = acc.prior * inv;
      row.model_loss = acc.model * inv;
      row.sg_loss = acc.sg * inv;
      row.total_loss = acc.total * inv;
      row.goal_coverage = res.coverage.empty() ? 0 : res.coverage.back();
      row.wall_clock_s = elapsed();
      res.metrics.push_back(row);
      if (iter == resume_iteration + 1 && epoch == 1 && resume_iteration == 0)
        res.initial_epoch_loss = row.total_loss;
      res.final_epoch_loss = row.total_loss;
    }

    const EvalReport ev =
        eval_zeroshot(b, spec, env_cfg, eval_shift, cfg.eval_episodes,
                      derive_seed(cfg.seed, 0x0ea1, static_cast<uint64_t>(iter)));
    res.iteration_evals.push_back(ev);
    run_iteration_rollouts(b, store, spec, roll_cfg, iter);
    res.coverage.push_back(goal_coverage(store, cfg.coverage_bin));

    MetricsRecord row;
    row.iteration = iter;
    row.epoch = 0;  // iteration summary
    if (!res.metrics.empty()) {
      const MetricsRecord& last = res.metrics.back();
      row.skill_loss = last.skill_loss;
      row.prior_loss = last.prior_loss;
      row.model_loss = last.model_loss;
      row.sg_loss = last.sg_loss;
      row.total_loss = last.total_loss;
    }
    row.goal_coverage = res.coverage.back();
    if (!ev.no_data) {
      row.score_mean = ev.mean;
      row.score_std = ev.stdev;
    }
    row.wall_clock_s = elapsed();
    res.metrics.push_back(row);

    save_checkpoint(b, iter, config_hash, checkpoint_path(out_dir, iter));
    save_dataset(store, dataset_path(out_dir, iter));
    emit_metrics(res.metrics, out_dir + "/metrics.csv");
  }

  res.heldout_recon_final = heldout_reconstruction(b, heldout, kHeldoutSlices, cfg.seed);
  res.heldout_gap_final = heldout_composition_gap(b, heldout, kHeldoutSlices, cfg.seed);
  res.final_checkpoint = checkpoint_path(out_dir, cfg.iterations);
  return res;
}

/// Expert dataset for a config (training-region starts and goals).
inline DatasetStore build_expert_dataset(const TrainConfig& cfg) {
  const MazeSpec spec = cfg.maze();
  return generate_expert_dataset(spec, make_shift_config(spec, ShiftLevel::kNone),
                                 cfg.expert_trajectories, derive_seed(cfg.seed, 0xda7a),
                                 cfg.env_config(), cfg.skill_horizon);
}

}  // namespace skillstep
