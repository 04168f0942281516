#pragma once

#include <vector>

#include "skillstep/skill.hpp"

namespace skillstep {

/// Skill-prior regression: KL(p(z | sg(E(s_t))) || sg(q)). Gradient reaches
/// only the prior net.
inline VarId prior_loss(Tape& tp, ModelBundle& b, const SampleInputs& in) {
  const VarId s0 = tp.leaf(in.states.front());
  const VarId h_bold = tp.detach(b.encoder.forward(tp, s0));
  const DiagGaussianVar p =
      split_gaussian(tp, b.prior.forward(tp, h_bold), b.cfg.z_dim);
  const DiagGaussianVar q = skill_posterior(tp, b, in);
  const DiagGaussianVar q_sg{tp.detach(q.mean), tp.detach(q.log_std)};
  return gaussian_kl(tp, p, q_sg);
}

struct ModelLossTerms {
  VarId reconstruction = -1;  // sum_k ||D(h_k) - s_k||^2, k = 0..H-1
  VarId flat = -1;            // sum_k ||P(h_k, z) - hbar_{k+1}||^2
  VarId skill_step = -1;      // ||SkillD(h_0, z) - hbar_H||^2 (when enabled)
  VarId inverse_kl = -1;      // KL(sg(q) || Pinv(sg(h_0), sg(h_H)))
  VarId total = -1;
};

/// Joint latent-model loss on one slice. `z` must be the reparameterized
/// posterior sample from the same tape (gradients flow into the skill encoder
/// through the dynamics terms but not through the inverse-KL term).
inline ModelLossTerms model_loss(Tape& tp, ModelBundle& b, const SampleInputs& in,
                                 const DiagGaussianVar& posterior, VarId z) {
  const int H = static_cast<int>(in.actions.size());
  ModelLossTerms out;

  std::vector<VarId> h(static_cast<size_t>(H) + 1, -1);
  for (int k = 0; k <= H; ++k)
    h[static_cast<size_t>(k)] =
        b.encoder.forward(tp, tp.leaf(in.states[static_cast<size_t>(k)]));
  // EMA-target latents are constants on the tape
  std::vector<VarId> hbar(static_cast<size_t>(H) + 1, -1);
  for (int k = 1; k <= H; ++k)
    hbar[static_cast<size_t>(k)] =
        tp.leaf(b.target_encoder.forward_data(in.states[static_cast<size_t>(k)]));

  VarId recon = tp.scalar(0.0f);
  VarId flat = tp.scalar(0.0f);
  for (int k = 0; k < H; ++k) {
    const VarId dec = b.decoder.forward(tp, h[static_cast<size_t>(k)]);
    const VarId derr = tp.sub(dec, tp.leaf(in.states[static_cast<size_t>(k)]));
    recon = tp.add(recon, tp.sum(tp.square(derr)));
    const VarId pin = tp.concat(h[static_cast<size_t>(k)], z);
    const VarId pred = b.flat_dynamics.forward(tp, pin);
    const VarId ferr = tp.sub(pred, hbar[static_cast<size_t>(k) + 1]);
    flat = tp.add(flat, tp.sum(tp.square(ferr)));
  }
  out.reconstruction = recon;
  out.flat = flat;

  VarId total = tp.add(recon, flat);
  if (b.cfg.use_skill_step_dynamics) {
    const VarId jump = b.skill_dynamics.forward(tp, tp.concat(h[0], z));
    const VarId jerr = tp.sub(jump, hbar[static_cast<size_t>(H)]);
    out.skill_step = tp.sum(tp.square(jerr));
    total = tp.add(total, out.skill_step);
  }

  const VarId h0_sg = tp.detach(h[0]);
  const VarId hH_sg = tp.detach(h[static_cast<size_t>(H)]);
  const DiagGaussianVar inv = split_gaussian(
      tp, b.inverse_skill.forward(tp, tp.concat(h0_sg, hH_sg)), b.cfg.z_dim);
  const DiagGaussianVar q_sg{tp.detach(posterior.mean), tp.detach(posterior.log_std)};
  out.inverse_kl = gaussian_kl(tp, q_sg, inv);
  out.total = tp.add(total, out.inverse_kl);
  return out;
}

inline void align_targets(ModelBundle& b, float rate) {
  ema_update(b.target_encoder_p, b.encoder_p, rate);
}

/// Mean discrepancy between the H-step jump net and H chained flat steps on a
/// slice, using the posterior-mean skill. Tracks how well the two dynamics
/// agree.
inline float composition_gap(const ModelBundle& b, const SubTrajectory& sub) {
  const SampleInputs in = make_inputs(b, sub, phi(sub.states.back()));
  Tensor qin({b.cfg.state_dim + b.cfg.skill_horizon * b.cfg.action_dim});
  for (int i = 0; i < b.cfg.state_dim; ++i) qin.at(i) = in.states.front().at(i);
  for (int i = 0; i < in.actions_flat.numel(); ++i)
    qin.at(b.cfg.state_dim + i) = in.actions_flat.at(i);
  const DiagGaussian q = split_gaussian_data(b.skill_encoder.forward_data(qin), b.cfg.z_dim);

  Tensor h = b.encoder.forward_data(in.states.front());
  Tensor chained = h.clone();
  auto with_z = [&](const Tensor& hh) {
    Tensor x({b.cfg.h_dim + b.cfg.z_dim});
    for (int i = 0; i < b.cfg.h_dim; ++i) x.at(i) = hh.at(i);
    for (int i = 0; i < b.cfg.z_dim; ++i) x.at(b.cfg.h_dim + i) = q.mean.at(i);
    return x;
  };
  for (int k = 0; k < b.cfg.skill_horizon; ++k)
    chained = b.flat_dynamics.forward_data(with_z(chained));
  const Tensor jump = b.skill_dynamics.forward_data(with_z(h));
  double acc = 0.0;
  for (int i = 0; i < b.cfg.h_dim; ++i) {
    const double d = static_cast<double>(jump.at(i)) - chained.at(i);
    acc += d * d;
  }
  return static_cast<float>(std::sqrt(acc / b.cfg.h_dim));
}

}  // namespace skillstep
