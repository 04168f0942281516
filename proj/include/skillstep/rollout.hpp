#pragma once

#include <random>
#include <string>
#include <vector>

#include "skillstep/bundle.hpp"
#include "skillstep/dataset.hpp"

namespace skillstep {

struct RolloutConfig {
  int branches = 16;
  int skills = 3;  // K: skills chained per rollout
  bool decode = true;
  uint64_t seed = 0;
  float max_clamped_fraction = 0.2f;

  void validate() const {
    if (branches < 0 || skills < 0)
      throw ConfigError("rollout: counts must be >= 0");
    if (max_clamped_fraction < 0.0f || max_clamped_fraction > 1.0f)
      throw ConfigError("rollout: clamp fraction must lie in [0, 1]");
  }
};

struct BranchRef {
  int traj = 0;
  int offset = 0;
};

/// n uniform (trajectory, offset) branch points among trajectories born at or
/// before `max_born`. Every stored state is a valid branch point.
inline std::vector<BranchRef> select_branching_states(const DatasetStore& store, int n,
                                                      uint64_t seed, int max_born) {
  if (store.trajectories.empty())
    throw DataError("select_branching_states: empty store");
  std::vector<int> eligible;
  for (int i = 0; i < store.size(); ++i)
    if (store.trajectories[static_cast<size_t>(i)].iteration_born <= max_born)
      eligible.push_back(i);
  if (eligible.empty())
    throw DataError("select_branching_states: no eligible trajectories");
  std::mt19937 rng(static_cast<uint32_t>(seed));
  std::uniform_int_distribution<size_t> pick(0, eligible.size() - 1);
  std::vector<BranchRef> out;
  out.reserve(static_cast<size_t>(std::max(0, n)));
  for (int i = 0; i < n; ++i) {
    const int traj = eligible[pick(rng)];
    std::uniform_int_distribution<int> off(
        0, store.trajectories[static_cast<size_t>(traj)].length() - 1);
    out.push_back({traj, off(rng)});
  }
  return out;
}

struct LatentRollout {
  std::vector<Tensor> latents;  // K*H + 1 entries unless truncated
  std::vector<Tensor> skills;   // one z per completed-or-started segment
  bool truncated = false;
  std::string truncation_reason;
};

/// Imagined rollout: sample a skill from the prior at each segment start and
/// advance H single-step latent transitions under it. Truncates at the last
/// finite latent.
inline LatentRollout latent_rollout(const ModelBundle& b, const EnvState& branch, int K,
                                    std::mt19937& rng) {
  LatentRollout out;
  Tensor h = b.encode(branch);
  out.latents.push_back(h.clone());
  std::normal_distribution<float> n01(0.0f, 1.0f);
  auto cat = [&](const Tensor& hh, const Tensor& z) {
    Tensor x({b.cfg.h_dim + b.cfg.z_dim});
    for (int i = 0; i < b.cfg.h_dim; ++i) x.at(i) = hh.at(i);
    for (int i = 0; i < b.cfg.z_dim; ++i) x.at(b.cfg.h_dim + i) = z.at(i);
    return x;
  };
  for (int j = 0; j < K; ++j) {
    Tensor noise({b.cfg.z_dim});
    for (int i = 0; i < noise.numel(); ++i) noise.at(i) = n01(rng);
    const Tensor z = b.prior_dist(h).sample(noise);
    out.skills.push_back(z.clone());
    for (int k = 0; k < b.cfg.skill_horizon; ++k) {
      const Tensor next = b.flat_dynamics.forward_data(cat(h, z));
      if (!next.all_finite()) {
        out.truncated = true;
        out.truncation_reason = "non-finite latent at skill " + std::to_string(j) +
                                " step " + std::to_string(k);
        return out;
      }
      h = next;
      out.latents.push_back(h.clone());
    }
  }
  return out;
}

struct DecodeStats {
  int clamped_states = 0;
  int total_states = 0;
};

/// Turn a latent rollout into a raw trajectory: decode each latent, clamp
/// decoded positions back into free space, and label actions with the
/// low-level policy under the active skill.
inline Trajectory decode_trajectory(const ModelBundle& b, const MazeSpec& spec,
                                    const LatentRollout& roll, DecodeStats* stats = nullptr) {
  Trajectory traj;
  traj.provenance = Provenance::kSynthetic;
  const int H = b.cfg.skill_horizon;
  for (size_t k = 0; k < roll.latents.size(); ++k) {
    EnvState s = b.decode(roll.latents[k]);
    bool clamped = false;
    s.pos = clamp_to_free(spec, s.pos, &clamped);
    for (int d = 0; d < 2; ++d)
      s.vel[static_cast<size_t>(d)] = std::min(
          spec.max_speed, std::max(-spec.max_speed, s.vel[static_cast<size_t>(d)]));
    if (stats) {
      ++stats->total_states;
      if (clamped) ++stats->clamped_states;
    }
    traj.states.push_back(s);
    if (k + 1 < roll.latents.size()) {
      const size_t seg = k / static_cast<size_t>(H);
      traj.actions.push_back(b.skill_action(s, roll.skills[seg]));
    }
  }
  return traj;
}

struct RolloutStats {
  int selected = 0;
  int appended = 0;
  int rejected = 0;
  int truncated = 0;
};

/// One iteration of model-guided augmentation. Trajectories born in the
/// current iteration are not branch sources; rejects imagined trajectories
/// with too many wall-clamped states.
inline RolloutStats run_iteration_rollouts(const ModelBundle& b, DatasetStore& store,
                                           const MazeSpec& spec, const RolloutConfig& cfg,
                                           int iteration) {
  cfg.validate();
  RolloutStats stats;
  if (cfg.branches == 0) return stats;
  const auto branches = select_branching_states(
      store, cfg.branches, derive_seed(cfg.seed, 0xb4a7c4, static_cast<uint64_t>(iteration)),
      iteration - 1);
  std::mt19937 rng(static_cast<uint32_t>(
      derive_seed(cfg.seed, 0x5011, static_cast<uint64_t>(iteration))));
  std::vector<Trajectory> fresh;
  for (const BranchRef& br : branches) {
    ++stats.selected;
    const EnvState s0 = store.trajectories[static_cast<size_t>(br.traj)]
                            .states[static_cast<size_t>(br.offset)];
    const LatentRollout roll = latent_rollout(b, s0, cfg.skills, rng);
    if (roll.truncated) ++stats.truncated;
    if (!cfg.decode || roll.latents.size() < 2) continue;
    DecodeStats ds;
    Trajectory traj = decode_trajectory(b, spec, roll, &ds);
    const float frac = ds.total_states > 0
                           ? static_cast<float>(ds.clamped_states) /
                                 static_cast<float>(ds.total_states)
                           : 0.0f;
    if (frac > cfg.max_clamped_fraction) {
      ++stats.rejected;
      continue;
    }
    fresh.push_back(std::move(traj));
  }
  const AppendResult res = append_synthetic(store, spec, std::move(fresh), iteration);
  stats.appended = res.appended;
  stats.rejected += res.rejected;
  return stats;
}

}  // namespace skillstep
