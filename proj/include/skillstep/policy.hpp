#pragma once

#include <cmath>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include "skillstep/latent.hpp"

namespace skillstep {

struct SgLossTerms {
  VarId bc = -1;           // ||hbar_{t+H} - f(h_t, g)||^2
  VarId consistency = -1;  // ||f(h_t, g) - SkillD(h_t, zhat)||^2
  VarId total = -1;
};

/// Skill-step goal loss: pull f toward the EMA-target latent H steps ahead,
/// and keep its output reachable by the skill its own inverse model infers.
/// With the direct-head ablation the loss is instead a KL pulling the direct
/// (h, g) -> z head toward the frozen posterior.
inline SgLossTerms sg_loss(Tape& tp, ModelBundle& b, const SampleInputs& in,
                           const DiagGaussianVar& posterior, const Tensor& zhat_noise,
                           bool use_consistency = true) {
  const int H = static_cast<int>(in.actions.size());
  SgLossTerms out;
  const VarId s0 = tp.leaf(in.states.front());
  const VarId h_bold = tp.detach(b.encoder.forward(tp, s0));
  const VarId g = tp.leaf(in.goal);

  if (!b.cfg.use_goal_generator) {
    const DiagGaussianVar direct = split_gaussian(
        tp, b.direct_head.forward(tp, tp.concat(h_bold, g)), b.cfg.z_dim);
    const DiagGaussianVar q_sg{tp.detach(posterior.mean), tp.detach(posterior.log_std)};
    out.bc = gaussian_kl(tp, direct, q_sg);
    out.total = out.bc;
    return out;
  }

  const VarId hbar_H = tp.leaf(b.target_encoder.forward_data(in.states[static_cast<size_t>(H)]));
  const VarId hhat = b.goal_generator.forward(tp, tp.concat(h_bold, g));
  out.bc = tp.sum(tp.square(tp.sub(hbar_H, hhat)));
  out.total = out.bc;
  if (use_consistency && b.cfg.use_skill_step_dynamics) {
    const DiagGaussianVar inv = split_gaussian(
        tp, b.inverse_skill.forward(tp, tp.concat(h_bold, hhat)), b.cfg.z_dim);
    const VarId zhat = reparameterize(tp, inv, zhat_noise);
    const VarId jump = b.skill_dynamics.forward(tp, tp.concat(h_bold, zhat));
    out.consistency = tp.sum(tp.square(tp.sub(hhat, jump)));
    out.total = tp.add(out.bc, out.consistency);
  }
  return out;
}

struct SkillChoice {
  Tensor z;
  DiagGaussian dist;
  Tensor h;
};

/// High-level policy: encode, generate the skill-step goal, infer the skill.
/// `noise` is the reparameterization draw (zeros -> mean skill).
inline SkillChoice high_level_policy(const ModelBundle& b, const EnvState& s,
                                     const Goal& g, const Tensor& noise) {
  if (noise.numel() != b.cfg.z_dim)
    throw UsageError("high_level_policy: noise must have z_dim entries");
  SkillChoice out;
  out.h = b.encoder.forward_data(b.norm.state(s));
  const Tensor gn = b.norm.goal(g);
  auto cat = [](const Tensor& a, const Tensor& c) {
    Tensor x({a.numel() + c.numel()});
    for (int i = 0; i < a.numel(); ++i) x.at(i) = a.at(i);
    for (int i = 0; i < c.numel(); ++i) x.at(a.numel() + i) = c.at(i);
    return x;
  };
  if (b.cfg.use_goal_generator) {
    const Tensor hhat = b.goal_generator.forward_data(cat(out.h, gn));
    out.dist = split_gaussian_data(b.inverse_skill.forward_data(cat(out.h, hhat)),
                                   b.cfg.z_dim);
  } else {
    out.dist = split_gaussian_data(b.direct_head.forward_data(cat(out.h, gn)), b.cfg.z_dim);
  }
  out.z = out.dist.sample(noise);
  return out;
}

/// Rolling state for the hierarchical controller. The skill is refreshed on
/// steps where step_count % H == 0; refresh steps are recorded for the period
/// instrumentation.
struct ActState {
  Tensor z;
  int step_count = 0;
  std::vector<int> refresh_steps;
};

inline Vec2 act(const ModelBundle& b, const EnvState& s, const Goal& g, ActState& st,
                std::mt19937* rng = nullptr) {
  if (st.step_count % b.cfg.skill_horizon == 0) {
    Tensor noise = Tensor::zeros({b.cfg.z_dim});
    if (rng) {
      std::normal_distribution<float> n(0.0f, 1.0f);
      for (int i = 0; i < noise.numel(); ++i) noise.at(i) = n(*rng);
    }
    st.z = high_level_policy(b, s, g, noise).z;
    st.refresh_steps.push_back(st.step_count);
  }
  ++st.step_count;
  return b.skill_action(s, st.z);
}

// ---------------------------------------------------------------------------
// Few-shot adaptation
// ---------------------------------------------------------------------------

/// One executed skill: state at the segment start, the skill, the state H
/// steps later (or at episode end), accumulated sparse reward, termination
/// flag, and the episode goal.
struct SkillTransition {
  EnvState s;
  Tensor z;
  EnvState s_next;
  float reward = 0.0f;
  float done = 0.0f;
  Goal goal;
};

struct AdaptLossTerms {
  VarId value = -1;        // -Q(h, z_pi)
  VarId kl = -1;           // KL(pi_Z || prior)
  VarId consistency = -1;  // ||SkillD(h, z_pi) - f(h, g)||^2
  VarId total = -1;
};

/// Adaptation objective for one (state, goal). Requires every parameter set
/// except the tuned head to be frozen; gradients therefore reach only f (or
/// the direct head under that ablation).
inline AdaptLossTerms adapt_loss(Tape& tp, ModelBundle& b, const EnvState& s,
                                 const Goal& g, const Tensor& z_noise, float alpha,
                                 float consistency_weight) {
  const std::string tuned = b.cfg.use_goal_generator ? "goal_generator" : "direct_head";
  for (auto& [name, set] : b.module_sets()) {
    if (name == tuned) continue;
    for (auto& [pname, p] : *set)
      if (p.trainable)
        throw ConfigError("adapt_loss: parameter set '" + name +
                          "' must be frozen during adaptation");
  }
  AdaptLossTerms out;
  const VarId h = b.encoder.forward(tp, tp.leaf(b.norm.state(s)));
  const VarId gn = tp.leaf(b.norm.goal(g));
  DiagGaussianVar pi;
  VarId hhat = -1;
  if (b.cfg.use_goal_generator) {
    hhat = b.goal_generator.forward(tp, tp.concat(h, gn));
    pi = split_gaussian(tp, b.inverse_skill.forward(tp, tp.concat(h, hhat)), b.cfg.z_dim);
  } else {
    pi = split_gaussian(tp, b.direct_head.forward(tp, tp.concat(h, gn)), b.cfg.z_dim);
  }
  const VarId z_pi = reparameterize(tp, pi, z_noise);
  const VarId q_value = b.critic.forward(tp, tp.concat(h, z_pi));
  out.value = tp.scale(tp.sum(q_value), -1.0f);
  const DiagGaussianVar prior =
      split_gaussian(tp, b.prior.forward(tp, h), b.cfg.z_dim);
  out.kl = gaussian_kl(tp, pi, prior);
  out.total = tp.add(out.value, tp.scale(out.kl, alpha));
  if (b.cfg.use_goal_generator && b.cfg.use_skill_step_dynamics) {
    const VarId jump = b.skill_dynamics.forward(tp, tp.concat(h, z_pi));
    out.consistency = tp.sum(tp.square(tp.sub(jump, hhat)));
    out.total = tp.add(out.total, tp.scale(out.consistency, consistency_weight));
  }
  return out;
}

/// One TD regression step on the critic over a batch of skill transitions;
/// returns the mean squared TD error. Bootstrap skills come from the current
/// high-level policy's mean.
inline float critic_update(ModelBundle& b, const std::vector<SkillTransition>& batch,
                           float gamma_H, float lr, float target_rate) {
  if (batch.empty()) throw UsageError("critic_update: empty batch");
  const Tensor zero_noise = Tensor::zeros({b.cfg.z_dim});
  b.critic_p.zero_grad();
  double total = 0.0;
  for (const SkillTransition& tr : batch) {
    float y = tr.reward;
    if (tr.done < 0.5f) {
      const SkillChoice next = high_level_policy(b, tr.s_next, tr.goal, zero_noise);
      Tensor qin({b.cfg.h_dim + b.cfg.z_dim});
      for (int i = 0; i < b.cfg.h_dim; ++i) qin.at(i) = next.h.at(i);
      for (int i = 0; i < b.cfg.z_dim; ++i) qin.at(b.cfg.h_dim + i) = next.z.at(i);
      y += gamma_H * b.target_critic.forward_data(qin).at(0);
    }
    Tape tp;
    const VarId h = tp.leaf(b.encoder.forward_data(b.norm.state(tr.s)));
    const VarId z = tp.leaf(tr.z);
    const VarId q = b.critic.forward(tp, tp.concat(h, z));
    const VarId err = tp.add_const(tp.sum(q), -y);
    const VarId loss = tp.square(err);
    total += tp.scalar_value(loss);
    tp.backward(loss, 1.0f / static_cast<float>(batch.size()));
  }
  adam_step(b.critic_p, lr);
  ema_update(b.target_critic_p, b.critic_p, target_rate);
  return static_cast<float>(total / static_cast<double>(batch.size()));
}

inline void save_replay(const std::vector<SkillTransition>& replay, int z_dim,
                        const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("save_replay: cannot open " + path);
  os << "SKILLSTEP-REPLAY v1\n"
     << "count " << replay.size() << "\n"
     << "z_dim " << z_dim << "\n"
     << "end\n";
  for (const SkillTransition& tr : replay) {
    const float head[4] = {tr.s.pos[0], tr.s.pos[1], tr.s.vel[0], tr.s.vel[1]};
    detail::write_f32s(os, head, 4);
    detail::write_f32s(os, tr.z.data(), static_cast<size_t>(tr.z.numel()));
    const float tail[8] = {tr.s_next.pos[0], tr.s_next.pos[1], tr.s_next.vel[0],
                           tr.s_next.vel[1], tr.reward,        tr.done,
                           tr.goal.pos[0],   tr.goal.pos[1]};
    detail::write_f32s(os, tail, 8);
  }
  if (!os) throw DataError("save_replay: write failure on " + path);
}

struct AdaptConfig {
  int shots = 25;
  int updates_per_episode = 50;
  int batch_size = 32;
  float lr = 3e-4f;
  float alpha = 0.1f;
  float consistency_weight = 1.0f;
  float gamma = 0.99f;
  float target_rate = 0.05f;
  std::string replay_path;  // empty: no replay file
};

struct AdaptReport {
  int episodes = 0;
  int transitions = 0;
  std::vector<float> episode_scores;
};

/// Episode-by-episode few-shot adaptation: run one goal-conditioned episode
/// in the eval region, push its skill transitions into the replay, then take
/// critic and goal-generator gradient steps. Everything else stays frozen.
inline AdaptReport finetune_fewshot(ModelBundle& b, const MazeSpec& spec,
                                    const EnvConfig& env_cfg, const ShiftConfig& shift,
                                    const AdaptConfig& cfg, uint64_t seed) {
  shift.validate();
  ParamSet* tuned = b.cfg.use_goal_generator ? &b.goal_generator_p : &b.direct_head_p;
  for (auto& [name, set] : b.module_sets()) set->set_trainable(false);

  std::mt19937 episode_rng(static_cast<uint32_t>(derive_seed(seed, 0xe915)));
  std::mt19937 update_rng(static_cast<uint32_t>(derive_seed(seed, 0x0bda)));
  std::vector<SkillTransition> replay;
  AdaptReport report;
  const float gamma_H =
      std::pow(cfg.gamma, static_cast<float>(b.cfg.skill_horizon));
  const Vec2 start = spec.cell_center(spec.free_cells().front());

  for (int shot = 0; shot < cfg.shots; ++shot) {
    std::uniform_int_distribution<size_t> pick(0, shift.eval_cells.size() - 1);
    const Goal goal{spec.cell_center(shift.eval_cells[pick(episode_rng)])};
    EnvState s = reset(spec, start);
    ActState actor;
    EnvState seg_start = s;
    Tensor seg_z;
    float seg_reward = 0.0f;
    bool episode_done = false;
    float final_score = 0.0f;
    for (int t = 0; t < env_cfg.horizon && !episode_done; ++t) {
      const Vec2 a = act(b, s, goal, actor, &episode_rng);
      if (actor.refresh_steps.back() == t) {
        if (t > 0) {
          replay.push_back({seg_start, seg_z, s, seg_reward, 0.0f, goal});
          ++report.transitions;
        }
        seg_start = s;
        seg_z = actor.z.clone();
        seg_reward = 0.0f;
      }
      const EnvState next = step(spec, s, a);
      seg_reward += reward(next, goal, env_cfg);
      episode_done = reward(next, goal, env_cfg) >= 1.0f;
      s = next;
    }
    replay.push_back({seg_start, seg_z, s, seg_reward, episode_done ? 1.0f : 0.0f, goal});
    ++report.transitions;
    final_score = normalized_score(s, goal);
    report.episode_scores.push_back(final_score);
    ++report.episodes;

    for (int u = 0; u < cfg.updates_per_episode; ++u) {
      std::uniform_int_distribution<size_t> draw(0, replay.size() - 1);
      std::vector<SkillTransition> batch;
      const int bs = std::min<int>(cfg.batch_size, static_cast<int>(replay.size()));
      for (int i = 0; i < bs; ++i) batch.push_back(replay[draw(update_rng)]);

      b.critic_p.set_trainable(true);
      critic_update(b, batch, gamma_H, cfg.lr, cfg.target_rate);
      b.critic_p.set_trainable(false);

      tuned->set_trainable(true);
      tuned->zero_grad();
      std::normal_distribution<float> n(0.0f, 1.0f);
      for (const SkillTransition& tr : batch) {
        Tensor noise({b.cfg.z_dim});
        for (int i = 0; i < noise.numel(); ++i) noise.at(i) = n(update_rng);
        Tape tp;
        const auto terms =
            adapt_loss(tp, b, tr.s, tr.goal, noise, cfg.alpha, cfg.consistency_weight);
        tp.backward(terms.total, 1.0f / static_cast<float>(batch.size()));
      }
      adam_step(*tuned, cfg.lr);
      tuned->set_trainable(false);
    }
  }
  if (!cfg.replay_path.empty()) save_replay(replay, b.cfg.z_dim, cfg.replay_path);
  return report;
}

}  // namespace skillstep
