#pragma once

#include <random>
#include <string>
#include <utility>
#include <vector>

#include "skillstep/maze.hpp"
#include "skillstep/nn.hpp"

namespace skillstep {

/// Affine map between env coordinates and network inputs in roughly [-1, 1].
struct StateNorm {
  Vec2 center{0.0f, 0.0f};
  Vec2 pos_scale{1.0f, 1.0f};
  float vel_scale = 1.0f;

  static StateNorm from(const MazeSpec& spec) {
    StateNorm n;
    n.center = {spec.width() * 0.5f, spec.height() * 0.5f};
    n.pos_scale = {spec.width() * 0.5f, spec.height() * 0.5f};
    n.vel_scale = spec.max_speed;
    return n;
  }

  Tensor state(const EnvState& s) const {
    Tensor t({4});
    t.at(0) = (s.pos[0] - center[0]) / pos_scale[0];
    t.at(1) = (s.pos[1] - center[1]) / pos_scale[1];
    t.at(2) = s.vel[0] / vel_scale;
    t.at(3) = s.vel[1] / vel_scale;
    return t;
  }

  EnvState state_back(const Tensor& t) const {
    if (t.numel() != 4) throw UsageError("state_back: expected 4 values");
    EnvState s;
    s.pos = {t.at(0) * pos_scale[0] + center[0], t.at(1) * pos_scale[1] + center[1]};
    s.vel = {t.at(2) * vel_scale, t.at(3) * vel_scale};
    return s;
  }

  Tensor goal(const Goal& g) const {
    Tensor t({2});
    t.at(0) = (g.pos[0] - center[0]) / pos_scale[0];
    t.at(1) = (g.pos[1] - center[1]) / pos_scale[1];
    return t;
  }

  Goal goal_back(const Tensor& t) const {
    if (t.numel() != 2) throw UsageError("goal_back: expected 2 values");
    return Goal{{t.at(0) * pos_scale[0] + center[0], t.at(1) * pos_scale[1] + center[1]}};
  }
};

inline void copy_param_values(ParamSet& dst, const ParamSet& src) {
  auto di = dst.begin();
  auto si = src.begin();
  for (; di != dst.end() && si != src.end(); ++di, ++si) {
    if (!di->second.value.same_shape(si->second.value))
      throw ConfigError("copy_param_values: mismatched parameter sets");
    di->second.value = si->second.value.clone();
  }
  if (di != dst.end() || si != src.end())
    throw ConfigError("copy_param_values: mismatched parameter counts");
}

struct BundleConfig {
  int state_dim = 4;
  int action_dim = 2;
  int goal_dim = 2;
  int skill_horizon = 10;
  int z_dim = 8;
  int h_dim = 16;
  std::vector<int> hidden = {64, 64};
  // Widths for nets whose inputs or outputs live in latent space (encoder,
  // decoder, prior, dynamics, inverse model, goal generator, critic). Empty
  // means reuse `hidden`. The raw-space skill encoder and low-level policy
  // always use `hidden`.
  std::vector<int> latent_hidden = {};
  bool use_skill_step_dynamics = true;
  bool use_goal_generator = true;

  const std::vector<int>& latent_widths() const {
    return latent_hidden.empty() ? hidden : latent_hidden;
  }

  void validate() const {
    if (skill_horizon < 1) throw ConfigError("bundle: skill_horizon must be >= 1");
    if (z_dim < 1 || h_dim < 1) throw ConfigError("bundle: latent dims must be >= 1");
    for (int h : hidden)
      if (h < 1) throw ConfigError("bundle: hidden widths must be >= 1");
    for (int h : latent_hidden)
      if (h < 1) throw ConfigError("bundle: latent hidden widths must be >= 1");
  }
};

/// All networks of the agent. Each lives in its own parameter set so the
/// trainer can freeze, mirror, and checkpoint them independently. Target
/// copies start identical to their source and are never touched by
/// optimizers (trainable=false), only by exponential mirroring.
class ModelBundle {
 public:
  BundleConfig cfg;
  StateNorm norm;

  ParamSet skill_encoder_p;    // q: (s0, a[0:H)) -> z dist
  ParamSet skill_policy_p;     // low-level pi: (s, z) -> action
  ParamSet encoder_p;          // E: s -> h
  ParamSet target_encoder_p;   // EMA mirror of E
  ParamSet prior_p;            // p: h -> z dist
  ParamSet decoder_p;          // D: h -> s
  ParamSet flat_dynamics_p;    // P: (h, z) -> h'
  ParamSet skill_dynamics_p;   // H-step jump: (h, z) -> h_{+H}
  ParamSet inverse_skill_p;    // (h_t, h_{t+H}) -> z dist
  ParamSet goal_generator_p;   // f: (h, g) -> target h
  ParamSet direct_head_p;      // ablation: (h, g) -> z dist without f
  ParamSet critic_p;           // Q: (h, z) -> value
  ParamSet target_critic_p;    // EMA mirror of Q

 private:
  std::mt19937 init_rng_;  // declared before the nets; reseeded per module

 public:
  Mlp skill_encoder, skill_policy, encoder, target_encoder, prior, decoder,
      flat_dynamics, skill_dynamics, inverse_skill, goal_generator, direct_head,
      critic, target_critic;

  ModelBundle(const ModelBundle&) = delete;
  ModelBundle& operator=(const ModelBundle&) = delete;

  ModelBundle(BundleConfig c, const MazeSpec& spec, uint64_t seed)
      : cfg(validated(std::move(c))),
        norm(StateNorm::from(spec)),
        skill_encoder(skill_encoder_p, "skill_encoder",
                      {cfg.state_dim + cfg.skill_horizon * cfg.action_dim, 2 * cfg.z_dim,
                       cfg.hidden},
                      rng_for(seed, "skill_encoder")),
        skill_policy(skill_policy_p, "skill_policy",
                     {cfg.state_dim + cfg.z_dim, cfg.action_dim, cfg.hidden, true},
                     rng_for(seed, "skill_policy")),
        encoder(encoder_p, "encoder", {cfg.state_dim, cfg.h_dim, cfg.latent_widths()},
                rng_for(seed, "encoder")),
        target_encoder(target_encoder_p, "target_encoder",
                       {cfg.state_dim, cfg.h_dim, cfg.latent_widths()},
                       rng_for(seed, "encoder")),
        prior(prior_p, "prior", {cfg.h_dim, 2 * cfg.z_dim, cfg.latent_widths()},
              rng_for(seed, "prior")),
        decoder(decoder_p, "decoder", {cfg.h_dim, cfg.state_dim, cfg.latent_widths()},
                rng_for(seed, "decoder")),
        flat_dynamics(flat_dynamics_p, "flat_dynamics",
                      {cfg.h_dim + cfg.z_dim, cfg.h_dim, cfg.latent_widths()},
                      rng_for(seed, "flat_dynamics")),
        skill_dynamics(skill_dynamics_p, "skill_dynamics",
                       {cfg.h_dim + cfg.z_dim, cfg.h_dim, cfg.latent_widths()},
                       rng_for(seed, "skill_dynamics")),
        inverse_skill(inverse_skill_p, "inverse_skill",
                      {2 * cfg.h_dim, 2 * cfg.z_dim, cfg.latent_widths()},
                      rng_for(seed, "inverse_skill")),
        goal_generator(goal_generator_p, "goal_generator",
                       {cfg.h_dim + cfg.goal_dim, cfg.h_dim, cfg.latent_widths()},
                       rng_for(seed, "goal_generator")),
        direct_head(direct_head_p, "direct_head",
                    {cfg.h_dim + cfg.goal_dim, 2 * cfg.z_dim, cfg.latent_widths()},
                    rng_for(seed, "direct_head")),
        critic(critic_p, "critic", {cfg.h_dim + cfg.z_dim, 1, cfg.latent_widths()},
               rng_for(seed, "critic")),
        target_critic(target_critic_p, "target_critic",
                      {cfg.h_dim + cfg.z_dim, 1, cfg.latent_widths()},
                      rng_for(seed, "critic")) {
    // target nets start as exact copies of their source
    copy_param_values(target_encoder_p, encoder_p);
    copy_param_values(target_critic_p, critic_p);
    target_encoder_p.set_trainable(false);
    target_critic_p.set_trainable(false);
  }

  std::vector<std::pair<std::string, ParamSet*>> module_sets() {
    return {{"skill_encoder", &skill_encoder_p}, {"skill_policy", &skill_policy_p},
            {"encoder", &encoder_p},             {"target_encoder", &target_encoder_p},
            {"prior", &prior_p},                 {"decoder", &decoder_p},
            {"flat_dynamics", &flat_dynamics_p}, {"skill_dynamics", &skill_dynamics_p},
            {"inverse_skill", &inverse_skill_p}, {"goal_generator", &goal_generator_p},
            {"direct_head", &direct_head_p},     {"critic", &critic_p},
            {"target_critic", &target_critic_p}};
  }

  std::vector<std::pair<std::string, const ParamSet*>> module_sets() const {
    auto* self = const_cast<ModelBundle*>(this);
    std::vector<std::pair<std::string, const ParamSet*>> out;
    for (auto& [name, set] : self->module_sets()) out.emplace_back(name, set);
    return out;
  }

  /// Parameter sets updated during offline training (targets excluded).
  std::vector<ParamSet*> offline_sets() {
    std::vector<ParamSet*> out = {&skill_encoder_p, &skill_policy_p, &encoder_p,
                                  &prior_p,         &decoder_p,      &flat_dynamics_p,
                                  &inverse_skill_p};
    if (cfg.use_skill_step_dynamics) out.push_back(&skill_dynamics_p);
    if (cfg.use_goal_generator)
      out.push_back(&goal_generator_p);
    else
      out.push_back(&direct_head_p);
    return out;
  }

  // --- data-path conveniences (no tape) ---

  Tensor encode(const EnvState& s) const { return encoder.forward_data(norm.state(s)); }
  Tensor encode_target(const EnvState& s) const {
    return target_encoder.forward_data(norm.state(s));
  }
  DiagGaussian prior_dist(const Tensor& h) const {
    return split_gaussian_data(prior.forward_data(h), cfg.z_dim);
  }
  EnvState decode(const Tensor& h) const {
    return norm.state_back(decoder.forward_data(h));
  }
  /// Low-level action for (state, skill); output already tanh-bounded.
  Vec2 skill_action(const EnvState& s, const Tensor& z) const {
    Tensor in({cfg.state_dim + cfg.z_dim});
    const Tensor sn = norm.state(s);
    for (int i = 0; i < cfg.state_dim; ++i) in.at(i) = sn.at(i);
    for (int i = 0; i < cfg.z_dim; ++i) in.at(cfg.state_dim + i) = z.at(i);
    const Tensor out = skill_policy.forward_data(in);
    return {out.at(0) * 1.0f, out.at(1) * 1.0f};
  }

 private:
  static BundleConfig validated(BundleConfig c) {
    c.validate();
    return c;
  }
  std::mt19937& rng_for(uint64_t seed, const std::string& name) {
    init_rng_.seed(static_cast<uint32_t>(derive_seed(seed, fnv1a(name))));
    return init_rng_;
  }
};

inline void refresh_targets(ModelBundle& b, float rate) {
  ema_update(b.target_encoder_p, b.encoder_p, rate);
  ema_update(b.target_critic_p, b.critic_p, rate);
}

}  // namespace skillstep
