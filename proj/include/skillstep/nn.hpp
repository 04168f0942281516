#pragma once

#include <cmath>
#include <deque>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "skillstep/tape.hpp"

namespace skillstep {

/// Ordered collection of named parameters. Insertion order is the canonical
/// ordering used by the optimizer, EMA updates and checkpoints, so it must
/// be identical across runs (it is: modules build their parameters in a
/// fixed sequence).
class ParamSet {
 public:
  ParamTensor& add(const std::string& name, Tensor init) {
    if (find(name)) throw ConfigError("ParamSet: duplicate parameter " + name);
    items_.emplace_back(name, ParamTensor(std::move(init)));
    return items_.back().second;
  }

  ParamTensor* find(const std::string& name) {
    for (auto& [n, p] : items_)
      if (n == name) return &p;
    return nullptr;
  }

  const ParamTensor* find(const std::string& name) const {
    for (const auto& [n, p] : items_)
      if (n == name) return &p;
    return nullptr;
  }

  size_t size() const { return items_.size(); }
  auto begin() { return items_.begin(); }
  auto end() { return items_.end(); }
  auto begin() const { return items_.begin(); }
  auto end() const { return items_.end(); }

  void zero_grad() {
    for (auto& [n, p] : items_) p.grad.fill(0.0f);
  }

  void set_trainable(bool t) {
    for (auto& [n, p] : items_) p.trainable = t;
  }

  bool any_nonzero_grad() const {
    for (const auto& [n, p] : items_)
      for (int i = 0; i < p.grad.numel(); ++i)
        if (p.grad.at(i) != 0.0f) return true;
    return false;
  }

  bool all_finite() const {
    for (const auto& [n, p] : items_)
      if (!p.value.all_finite() || !p.grad.all_finite()) return false;
    return true;
  }

  size_t numel() const {
    size_t n = 0;
    for (const auto& [nm, p] : items_) n += static_cast<size_t>(p.value.numel());
    return n;
  }

 private:
  // deque: element addresses are stable under push_back, modules keep
  // raw pointers into it.
  std::deque<std::pair<std::string, ParamTensor>> items_;
};

/// Standard Adam. Frozen tensors are skipped entirely so their value,
/// moments and step count stay bit-identical.
inline void adam_step(ParamSet& params, float lr, float beta1 = 0.9f,
                      float beta2 = 0.999f, float eps = 1e-8f) {
  for (auto& [name, p] : params) {
    if (!p.trainable) continue;
    if (!p.grad.same_shape(p.value))
      throw ConfigError("adam_step: grad/value shape mismatch for " + name);
    p.adam_step += 1;
    const float b1t = 1.0f - std::pow(beta1, static_cast<float>(p.adam_step));
    const float b2t = 1.0f - std::pow(beta2, static_cast<float>(p.adam_step));
    float* v = p.value.data();
    float* g = p.grad.data();
    float* m = p.adam_m.data();
    float* s = p.adam_v.data();
    for (int i = 0; i < p.value.numel(); ++i) {
      m[i] = beta1 * m[i] + (1.0f - beta1) * g[i];
      s[i] = beta2 * s[i] + (1.0f - beta2) * g[i] * g[i];
      const float mhat = m[i] / b1t;
      const float shat = s[i] / b2t;
      v[i] -= lr * mhat / (std::sqrt(shat) + eps);
    }
  }
}

/// target <- (1 - rate) * target + rate * source, elementwise over matching
/// parameter names.
inline void ema_update(ParamSet& target, const ParamSet& source, float rate) {
  if (target.size() != source.size())
    throw ConfigError("ema_update: parameter set size mismatch");
  auto ti = target.begin();
  auto si = source.begin();
  for (; ti != target.end(); ++ti, ++si) {
    if (!ti->second.value.same_shape(si->second.value))
      throw ConfigError("ema_update: structure mismatch at " + ti->first);
    float* t = ti->second.value.data();
    const float* s = si->second.value.data();
    for (int i = 0; i < ti->second.value.numel(); ++i)
      t[i] = (1.0f - rate) * t[i] + rate * s[i];
  }
}

/// Global-norm gradient clipping across several parameter sets. Returns the
/// pre-clip norm.
inline float clip_global_norm(std::vector<ParamSet*> sets, float max_norm) {
  double sq = 0.0;
  for (ParamSet* ps : sets)
    for (auto& [n, p] : *ps) {
      if (!p.trainable) continue;
      const float* g = p.grad.data();
      for (int i = 0; i < p.grad.numel(); ++i) sq += static_cast<double>(g[i]) * g[i];
    }
  const float norm = static_cast<float>(std::sqrt(sq));
  if (norm > max_norm && norm > 0.0f) {
    const float s = max_norm / norm;
    for (ParamSet* ps : sets)
      for (auto& [n, p] : *ps) {
        if (!p.trainable) continue;
        float* g = p.grad.data();
        for (int i = 0; i < p.grad.numel(); ++i) g[i] *= s;
      }
  }
  return norm;
}

/// Diagonal Gaussian as plain data (mean, log-std).
struct DiagGaussian {
  Tensor mean;
  Tensor log_std;

  int dim() const { return mean.numel(); }

  Tensor sample(const Tensor& noise) const {
    if (noise.numel() != dim()) throw UsageError("DiagGaussian::sample: noise dim mismatch");
    Tensor out = mean.clone();
    for (int i = 0; i < dim(); ++i)
      out.at(i) += std::exp(log_std.at(i)) * noise.at(i);
    return out;
  }
};

/// Closed-form KL(q || p) for diagonal Gaussians, evaluated on plain data.
inline float gaussian_kl(const DiagGaussian& q, const DiagGaussian& p) {
  if (q.dim() != p.dim()) throw UsageError("gaussian_kl: dimension mismatch");
  float acc = 0.0f;
  for (int i = 0; i < q.dim(); ++i) {
    const float lq = q.log_std.at(i), lp = p.log_std.at(i);
    const float dm = q.mean.at(i) - p.mean.at(i);
    acc += lp - lq + 0.5f * std::exp(2.0f * (lq - lp)) +
           0.5f * dm * dm * std::exp(-2.0f * lp) - 0.5f;
  }
  return acc;
}

/// mean + exp(log_std) * noise, on plain data.
inline Tensor reparameterize(const DiagGaussian& d, const Tensor& noise) {
  return d.sample(noise);
}

/// Diagonal Gaussian on the tape (differentiable head output).
struct DiagGaussianVar {
  VarId mean = -1;
  VarId log_std = -1;
};

/// Differentiable closed-form KL(q || p) built from tape ops. Either side
/// may carry gradients.
inline VarId gaussian_kl(Tape& t, const DiagGaussianVar& q, const DiagGaussianVar& p) {
  if (t.value(q.mean).numel() != t.value(p.mean).numel())
    throw UsageError("gaussian_kl: dimension mismatch");
  VarId dl = t.sub(q.log_std, p.log_std);                       // lq - lp
  VarId t1 = t.scale(dl, -1.0f);                                // lp - lq
  VarId t2 = t.scale(t.exp_(t.scale(dl, 2.0f)), 0.5f);          // 0.5 e^{2(lq-lp)}
  VarId dm2 = t.square(t.sub(q.mean, p.mean));
  VarId t3 = t.scale(t.mul(dm2, t.exp_(t.scale(p.log_std, -2.0f))), 0.5f);
  VarId body = t.add_const(t.add(t.add(t1, t2), t3), -0.5f);
  return t.sum(body);
}

inline VarId reparameterize(Tape& t, const DiagGaussianVar& d, const Tensor& noise) {
  if (noise.numel() != t.value(d.mean).numel())
    throw UsageError("reparameterize: noise dim mismatch");
  return t.add(d.mean, t.mul(t.exp_(d.log_std), t.leaf(noise)));
}

/// Detach a tape Gaussian into plain data.
inline DiagGaussian to_data(const Tape& t, const DiagGaussianVar& d) {
  return DiagGaussian{t.value(d.mean).clone(), t.value(d.log_std).clone()};
}

inline DiagGaussian standard_normal(int dim) {
  return DiagGaussian{Tensor::zeros({dim}), Tensor::zeros({dim})};
}

struct MlpSpec {
  int in = 0;
  int out = 0;
  std::vector<int> hidden;
  bool tanh_output = false;  // bound outputs to (-1, 1)
};

/// Multilayer perceptron with tanh hidden activations. Owns nothing: the
/// parameters live in the ParamSet passed at construction and the Mlp keeps
/// stable pointers to them.
class Mlp {
 public:
  Mlp() = default;

  Mlp(ParamSet& owner, const std::string& prefix, const MlpSpec& spec, std::mt19937& rng)
      : spec_(spec) {
    int in = spec.in;
    std::vector<int> outs = spec.hidden;
    outs.push_back(spec.out);
    for (size_t l = 0; l < outs.size(); ++l) {
      const int out = outs[l];
      Tensor w(std::vector<int>{out, in});
      // uniform(-1/sqrt(in), 1/sqrt(in)), same rule for biases
      const float bound = 1.0f / std::sqrt(static_cast<float>(in));
      w.fill_uniform(rng, bound);
      Tensor b(std::vector<int>{out});
      b.fill_uniform(rng, bound);
      const std::string ln = prefix + ".l" + std::to_string(l);
      layers_.push_back(Layer{&owner.add(ln + ".w", std::move(w)),
                              &owner.add(ln + ".b", std::move(b))});
      in = out;
    }
  }

  VarId forward(Tape& t, VarId x) const {
    if (t.value(x).numel() != spec_.in)
      throw ConfigError("Mlp: input width " + std::to_string(t.value(x).numel()) +
                        " != expected " + std::to_string(spec_.in));
    VarId h = x;
    for (size_t l = 0; l < layers_.size(); ++l) {
      h = t.add(t.matvec(t.param(*layers_[l].w), h), t.param(*layers_[l].b));
      const bool last = (l + 1 == layers_.size());
      if (!last || spec_.tanh_output) h = t.tanh_(h);
    }
    return h;
  }

  /// Forward on plain data, no tape. Used on hot non-differentiable paths
  /// (environment rollouts, target encoders).
  Tensor forward_data(const Tensor& x) const {
    if (x.numel() != spec_.in) throw ConfigError("Mlp: input width mismatch");
    std::vector<float> cur(x.data(), x.data() + x.numel());
    std::vector<float> next;
    for (size_t l = 0; l < layers_.size(); ++l) {
      const Tensor& W = layers_[l].w->value;
      const Tensor& B = layers_[l].b->value;
      const int m = W.dim(0), n = W.dim(1);
      next.assign(static_cast<size_t>(m), 0.0f);
      const float* pw = W.data();
      for (int i = 0; i < m; ++i) {
        float acc = B.at(i);
        const float* row = pw + static_cast<size_t>(i) * n;
        for (int j = 0; j < n; ++j) acc += row[j] * cur[static_cast<size_t>(j)];
        next[static_cast<size_t>(i)] = acc;
      }
      const bool last = (l + 1 == layers_.size());
      if (!last || spec_.tanh_output)
        for (float& v : next) v = std::tanh(v);
      cur.swap(next);
    }
    return Tensor::from(std::move(cur));
  }

  const MlpSpec& spec() const { return spec_; }

  size_t layer_count() const { return layers_.size(); }
  ParamTensor& weight(size_t l) { return *layers_[l].w; }
  ParamTensor& bias(size_t l) { return *layers_[l].b; }
  const ParamTensor& weight(size_t l) const { return *layers_[l].w; }
  const ParamTensor& bias(size_t l) const { return *layers_[l].b; }

 private:
  struct Layer {
    ParamTensor* w = nullptr;
    ParamTensor* b = nullptr;
  };
  MlpSpec spec_;
  std::vector<Layer> layers_;
};

constexpr float kLogStdLo = -3.0f;
constexpr float kLogStdHi = 2.0f;

/// Split a 2d-wide head output into a clamped diagonal Gaussian.
inline DiagGaussianVar split_gaussian(Tape& t, VarId head_out, int dim) {
  if (t.value(head_out).numel() != 2 * dim)
    throw ConfigError("split_gaussian: head width != 2*dim");
  DiagGaussianVar g;
  g.mean = t.slice(head_out, 0, dim);
  g.log_std = t.clamp(t.slice(head_out, dim, dim), kLogStdLo, kLogStdHi);
  return g;
}

/// Data-path version of split_gaussian.
inline DiagGaussian split_gaussian_data(const Tensor& head_out, int dim) {
  if (head_out.numel() != 2 * dim) throw ConfigError("split_gaussian: head width != 2*dim");
  Tensor mean({dim}), log_std({dim});
  for (int i = 0; i < dim; ++i) {
    mean.at(i) = head_out.at(i);
    log_std.at(i) = std::min(kLogStdHi, std::max(kLogStdLo, head_out.at(dim + i)));
  }
  return DiagGaussian{std::move(mean), std::move(log_std)};
}

}  // namespace skillstep
