#pragma once

#include <vector>

#include "skillstep/bundle.hpp"
#include "skillstep/dataset.hpp"

namespace skillstep {

/// Per-sample network inputs: normalized states/actions of one H-step slice
/// plus the normalized goal attached to it.
struct SampleInputs {
  std::vector<Tensor> states;   // H+1 entries, each [state_dim]
  std::vector<Tensor> actions;  // H entries, each [action_dim]
  Tensor actions_flat;          // [H * action_dim]
  Tensor goal;                  // [goal_dim]
};

inline SampleInputs make_inputs(const ModelBundle& b, const SubTrajectory& sub,
                                const Goal& g) {
  const int H = sub.horizon();
  if (H != b.cfg.skill_horizon)
    throw UsageError("make_inputs: slice horizon does not match bundle");
  if (static_cast<int>(sub.states.size()) != H + 1)
    throw UsageError("make_inputs: slice must hold H+1 states");
  SampleInputs in;
  in.states.reserve(static_cast<size_t>(H) + 1);
  for (const EnvState& s : sub.states) in.states.push_back(b.norm.state(s));
  in.actions.reserve(static_cast<size_t>(H));
  in.actions_flat = Tensor({H * b.cfg.action_dim});
  for (int i = 0; i < H; ++i) {
    Tensor a({b.cfg.action_dim});
    for (int d = 0; d < b.cfg.action_dim; ++d) {
      a.at(d) = sub.actions[static_cast<size_t>(i)][static_cast<size_t>(d)];
      in.actions_flat.at(i * b.cfg.action_dim + d) = a.at(d);
    }
    in.actions.push_back(std::move(a));
  }
  in.goal = b.norm.goal(g);
  return in;
}

/// q(z | s_0, a_{0:H-1}) on the tape.
inline DiagGaussianVar skill_posterior(Tape& tp, ModelBundle& b, const SampleInputs& in) {
  const VarId s0 = tp.leaf(in.states.front());
  const VarId acts = tp.leaf(in.actions_flat);
  const VarId head = b.skill_encoder.forward(tp, tp.concat(s0, acts));
  return split_gaussian(tp, head, b.cfg.z_dim);
}

struct SkillLossTerms {
  VarId reconstruction = -1;  // sum_i ||pi_L(s_i, z) - a_i||^2
  VarId kl = -1;              // KL(q || N(0, I))
  VarId total = -1;           // reconstruction + beta * kl
  DiagGaussianVar posterior;
  VarId z = -1;
};

/// Skill autoencoding loss on one slice; `enc_noise` is the reparameterization
/// draw for z.
inline SkillLossTerms skill_loss(Tape& tp, ModelBundle& b, const SampleInputs& in,
                                 const Tensor& enc_noise, float beta) {
  SkillLossTerms out;
  out.posterior = skill_posterior(tp, b, in);
  out.z = reparameterize(tp, out.posterior, enc_noise);
  const int H = static_cast<int>(in.actions.size());
  VarId recon = tp.scalar(0.0f);
  for (int i = 0; i < H; ++i) {
    const VarId si = tp.leaf(in.states[static_cast<size_t>(i)]);
    const VarId pred = b.skill_policy.forward(tp, tp.concat(si, out.z));
    const VarId err = tp.sub(pred, tp.leaf(in.actions[static_cast<size_t>(i)]));
    recon = tp.add(recon, tp.sum(tp.square(err)));
  }
  out.reconstruction = recon;
  DiagGaussianVar unit{tp.leaf(Tensor::zeros({b.cfg.z_dim})),
                       tp.leaf(Tensor::zeros({b.cfg.z_dim}))};
  out.kl = gaussian_kl(tp, out.posterior, unit);
  out.total = tp.add(out.reconstruction, tp.scale(out.kl, beta));
  return out;
}

/// Mean squared action error of the posterior-mean skill on a slice; the
/// held-out reconstruction diagnostic.
inline float skill_reconstruction_error(const ModelBundle& b, const SubTrajectory& sub) {
  const SampleInputs in = make_inputs(b, sub, phi(sub.states.back()));
  Tensor qin({b.cfg.state_dim + b.cfg.skill_horizon * b.cfg.action_dim});
  for (int i = 0; i < b.cfg.state_dim; ++i) qin.at(i) = in.states.front().at(i);
  for (int i = 0; i < in.actions_flat.numel(); ++i)
    qin.at(b.cfg.state_dim + i) = in.actions_flat.at(i);
  const DiagGaussian q = split_gaussian_data(b.skill_encoder.forward_data(qin), b.cfg.z_dim);
  double acc = 0.0;
  int n = 0;
  for (size_t i = 0; i < in.actions.size(); ++i) {
    Tensor pin({b.cfg.state_dim + b.cfg.z_dim});
    for (int d = 0; d < b.cfg.state_dim; ++d) pin.at(d) = in.states[i].at(d);
    for (int d = 0; d < b.cfg.z_dim; ++d) pin.at(b.cfg.state_dim + d) = q.mean.at(d);
    const Tensor pred = b.skill_policy.forward_data(pin);
    for (int d = 0; d < b.cfg.action_dim; ++d) {
      const double e = static_cast<double>(pred.at(d)) - in.actions[i].at(d);
      acc += e * e;
      ++n;
    }
  }
  return static_cast<float>(acc / std::max(1, n));
}

}  // namespace skillstep
