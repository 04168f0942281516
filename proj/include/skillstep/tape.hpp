#pragma once

#include <cmath>
#include <unordered_map>
#include <vector>

#include "skillstep/tensor.hpp"

namespace skillstep {

/// A learnable tensor with its Adam state. `trainable == false` marks a
/// frozen parameter: it never accumulates gradient and adam_step skips it.
struct ParamTensor {
  Tensor value;
  Tensor grad;
  Tensor adam_m;
  Tensor adam_v;
  int64_t adam_step = 0;
  bool trainable = true;

  explicit ParamTensor(Tensor v = Tensor())
      : value(std::move(v)),
        grad(Tensor::zeros(value.shape())),
        adam_m(Tensor::zeros(value.shape())),
        adam_v(Tensor::zeros(value.shape())) {}
};

using VarId = int32_t;

/// Reverse-mode autodiff over a linear tape of tensor-granular operations.
/// One Tape instance records one forward pass; backward() walks the tape in
/// reverse and flushes parameter gradients into their ParamTensor.grad
/// buffers. Tapes are cheap to construct and meant to be per-sample.
///
/// Node recording order is the evaluation order, so backward is a single
/// reverse sweep with no explicit topological sort.
class Tape {
 public:
  Tape() { nodes_.reserve(256); }

  /// Constant input; never receives gradient.
  VarId leaf(Tensor v) { return push(Op::kLeaf, std::move(v), -1, -1, false); }

  VarId leaf(std::vector<float> v) { return leaf(Tensor::from(std::move(v))); }

  VarId scalar(float v) { return leaf(Tensor::from({v})); }

  /// Bind a parameter. Repeated binds of the same ParamTensor return the
  /// same node so one tape accumulates one gradient per parameter.
  VarId param(ParamTensor& p) {
    auto it = param_nodes_.find(&p);
    if (it != param_nodes_.end()) return it->second;
    VarId id = push(Op::kParam, p.value, -1, -1, p.trainable);
    nodes_[static_cast<size_t>(id)].bound = &p;
    param_nodes_.emplace(&p, id);
    return id;
  }

  VarId add(VarId a, VarId b) {
    check_same_shape(a, b, "add");
    Tensor out = val(a).clone();
    const float* pb = val(b).data();
    float* po = out.data();
    for (int i = 0; i < out.numel(); ++i) po[i] += pb[i];
    return push(Op::kAdd, std::move(out), a, b, grad_needed(a, b));
  }

  VarId sub(VarId a, VarId b) {
    check_same_shape(a, b, "sub");
    Tensor out = val(a).clone();
    const float* pb = val(b).data();
    float* po = out.data();
    for (int i = 0; i < out.numel(); ++i) po[i] -= pb[i];
    return push(Op::kSub, std::move(out), a, b, grad_needed(a, b));
  }

  VarId mul(VarId a, VarId b) {
    check_same_shape(a, b, "mul");
    Tensor out = val(a).clone();
    const float* pb = val(b).data();
    float* po = out.data();
    for (int i = 0; i < out.numel(); ++i) po[i] *= pb[i];
    return push(Op::kMul, std::move(out), a, b, grad_needed(a, b));
  }

  VarId scale(VarId a, float c) {
    Tensor out = val(a).clone();
    float* po = out.data();
    for (int i = 0; i < out.numel(); ++i) po[i] *= c;
    VarId id = push(Op::kScale, std::move(out), a, -1, grad_needed(a));
    nodes_[static_cast<size_t>(id)].c0 = c;
    return id;
  }

  VarId add_const(VarId a, float c) {
    Tensor out = val(a).clone();
    float* po = out.data();
    for (int i = 0; i < out.numel(); ++i) po[i] += c;
    return push(Op::kAddConst, std::move(out), a, -1, grad_needed(a));
  }

  /// y = W x with W of shape [m, n] and x of shape [n].
  VarId matvec(VarId w, VarId x) {
    const Tensor& W = val(w);
    const Tensor& X = val(x);
    if (W.rank() != 2 || X.rank() != 1 || W.dim(1) != X.dim(0))
      throw ConfigError("matvec: shape mismatch " + W.shape_str() + " * " + X.shape_str());
    const int m = W.dim(0), n = W.dim(1);
    Tensor out(std::vector<int>{m});
    const float* pw = W.data();
    const float* px = X.data();
    float* po = out.data();
    for (int i = 0; i < m; ++i) {
      const float* row = pw + static_cast<size_t>(i) * n;
      float acc = 0.0f;
      for (int j = 0; j < n; ++j) acc += row[j] * px[j];
      po[i] = acc;
    }
    return push(Op::kMatVec, std::move(out), w, x, grad_needed(w, x));
  }

  VarId tanh_(VarId a) {
    Tensor out = val(a).clone();
    float* po = out.data();
    for (int i = 0; i < out.numel(); ++i) po[i] = std::tanh(po[i]);
    return push(Op::kTanh, std::move(out), a, -1, grad_needed(a));
  }

  VarId exp_(VarId a) {
    Tensor out = val(a).clone();
    float* po = out.data();
    for (int i = 0; i < out.numel(); ++i) po[i] = std::exp(po[i]);
    return push(Op::kExp, std::move(out), a, -1, grad_needed(a));
  }

  VarId square(VarId a) {
    Tensor out = val(a).clone();
    float* po = out.data();
    for (int i = 0; i < out.numel(); ++i) po[i] *= po[i];
    return push(Op::kSquare, std::move(out), a, -1, grad_needed(a));
  }

  /// Reduce to a 1-element tensor.
  VarId sum(VarId a) {
    const Tensor& A = val(a);
    float acc = 0.0f;
    const float* pa = A.data();
    for (int i = 0; i < A.numel(); ++i) acc += pa[i];
    return push(Op::kSum, Tensor::from({acc}), a, -1, grad_needed(a));
  }

  VarId mean(VarId a) {
    int n = val(a).numel();
    if (n == 0) throw UsageError("mean of empty tensor");
    return scale(sum(a), 1.0f / static_cast<float>(n));
  }

  VarId concat(VarId a, VarId b) {
    const Tensor& A = val(a);
    const Tensor& B = val(b);
    if (A.rank() != 1 || B.rank() != 1) throw UsageError("concat expects vectors");
    Tensor out(std::vector<int>{A.numel() + B.numel()});
    std::memcpy(out.data(), A.data(), sizeof(float) * static_cast<size_t>(A.numel()));
    std::memcpy(out.data() + A.numel(), B.data(), sizeof(float) * static_cast<size_t>(B.numel()));
    return push(Op::kConcat, std::move(out), a, b, grad_needed(a, b));
  }

  VarId slice(VarId a, int off, int len) {
    const Tensor& A = val(a);
    if (A.rank() != 1 || off < 0 || len < 0 || off + len > A.numel())
      throw UsageError("slice out of range");
    Tensor out(std::vector<int>{len});
    std::memcpy(out.data(), A.data() + off, sizeof(float) * static_cast<size_t>(len));
    VarId id = push(Op::kSlice, std::move(out), a, -1, grad_needed(a));
    nodes_[static_cast<size_t>(id)].i0 = off;
    return id;
  }

  /// Elementwise clamp. Gradient passes where lo <= x <= hi.
  VarId clamp(VarId a, float lo, float hi) {
    Tensor out = val(a).clone();
    float* po = out.data();
    for (int i = 0; i < out.numel(); ++i) po[i] = std::min(hi, std::max(lo, po[i]));
    VarId id = push(Op::kClamp, std::move(out), a, -1, grad_needed(a));
    nodes_[static_cast<size_t>(id)].c0 = lo;
    nodes_[static_cast<size_t>(id)].c1 = hi;
    return id;
  }

  /// Stop-gradient: same value, no backward path.
  VarId detach(VarId a) { return push(Op::kLeaf, val(a).clone(), -1, -1, false); }

  const Tensor& value(VarId id) const { return nodes_[static_cast<size_t>(id)].val; }

  float scalar_value(VarId id) const {
    const Tensor& t = value(id);
    if (t.numel() != 1) throw UsageError("scalar_value on non-scalar");
    return t.at(0);
  }

  bool requires_grad(VarId id) const { return nodes_[static_cast<size_t>(id)].needs_grad; }

  /// Gradient of the last backward() with respect to a node; zeros if the
  /// node was unreachable.
  Tensor grad_of(VarId id) const {
    const Node& n = nodes_[static_cast<size_t>(id)];
    if (n.grad.numel() == n.val.numel() && n.grad.rank() == n.val.rank()) return n.grad;
    return Tensor::zeros(n.val.shape());
  }

  /// Reverse sweep from a scalar loss. Parameter gradients are accumulated
  /// (+=) into each bound ParamTensor.grad, scaled by seed_grad.
  void backward(VarId loss, float seed_grad = 1.0f) {
    Node& ln = nodes_[static_cast<size_t>(loss)];
    if (ln.val.numel() != 1) throw UsageError("backward: loss must be scalar");
    if (!ln.needs_grad) return;  // fully detached loss: all gradients zero
    ensure_grad(loss);
    ln.grad.at(0) += seed_grad;
    for (VarId id = loss; id >= 0; --id) {
      Node& n = nodes_[static_cast<size_t>(id)];
      if (!n.needs_grad || n.grad.numel() == 0) continue;
      backward_node(n);
    }
    for (auto& [p, id] : param_nodes_) {
      Node& n = nodes_[static_cast<size_t>(id)];
      if (!n.needs_grad || n.grad.numel() == 0) continue;
      float* pg = p->grad.data();
      const float* ng = n.grad.data();
      for (int i = 0; i < p->grad.numel(); ++i) pg[i] += ng[i];
    }
  }

  size_t size() const { return nodes_.size(); }

 private:
  enum class Op : uint8_t {
    kLeaf, kParam, kAdd, kSub, kMul, kScale, kAddConst,
    kMatVec, kTanh, kExp, kSquare, kSum, kConcat, kSlice, kClamp
  };

  struct Node {
    Op op;
    VarId a = -1, b = -1;
    bool needs_grad = false;
    float c0 = 0.0f, c1 = 0.0f;
    int i0 = 0;
    Tensor val;
    Tensor grad;  // empty until touched by backward
    ParamTensor* bound = nullptr;
  };

  const Tensor& val(VarId id) const { return nodes_[static_cast<size_t>(id)].val; }

  bool grad_needed(VarId a, VarId b = -1) const {
    bool g = a >= 0 && nodes_[static_cast<size_t>(a)].needs_grad;
    if (!g && b >= 0) g = nodes_[static_cast<size_t>(b)].needs_grad;
    return g;
  }

  void check_same_shape(VarId a, VarId b, const char* what) const {
    if (!val(a).same_shape(val(b)))
      throw ConfigError(std::string(what) + ": shape mismatch " + val(a).shape_str() +
                        " vs " + val(b).shape_str());
  }

  VarId push(Op op, Tensor v, VarId a, VarId b, bool needs_grad) {
    Node n;
    n.op = op;
    n.a = a;
    n.b = b;
    n.needs_grad = needs_grad;
    n.val = std::move(v);
    nodes_.push_back(std::move(n));
    return static_cast<VarId>(nodes_.size() - 1);
  }

  void ensure_grad(VarId id) {
    Node& n = nodes_[static_cast<size_t>(id)];
    if (n.grad.numel() != n.val.numel() || n.grad.rank() != n.val.rank())
      n.grad = Tensor::zeros(n.val.shape());
  }

  float* grad_ptr(VarId id) {
    ensure_grad(id);
    return nodes_[static_cast<size_t>(id)].grad.data();
  }

  void backward_node(Node& n) {
    const float* g = n.grad.data();
    const int ne = n.val.numel();
    auto needs = [&](VarId id) {
      return id >= 0 && nodes_[static_cast<size_t>(id)].needs_grad;
    };
    switch (n.op) {
      case Op::kLeaf:
      case Op::kParam:
        break;
      case Op::kAdd: {
        if (needs(n.a)) {
          float* ga = grad_ptr(n.a);
          for (int i = 0; i < ne; ++i) ga[i] += g[i];
        }
        if (needs(n.b)) {
          float* gb = grad_ptr(n.b);
          for (int i = 0; i < ne; ++i) gb[i] += g[i];
        }
        break;
      }
      case Op::kSub: {
        if (needs(n.a)) {
          float* ga = grad_ptr(n.a);
          for (int i = 0; i < ne; ++i) ga[i] += g[i];
        }
        if (needs(n.b)) {
          float* gb = grad_ptr(n.b);
          for (int i = 0; i < ne; ++i) gb[i] -= g[i];
        }
        break;
      }
      case Op::kMul: {
        if (needs(n.a)) {
          float* ga = grad_ptr(n.a);
          const float* vb = val(n.b).data();
          for (int i = 0; i < ne; ++i) ga[i] += g[i] * vb[i];
        }
        if (needs(n.b)) {
          float* gb = grad_ptr(n.b);
          const float* va = val(n.a).data();
          for (int i = 0; i < ne; ++i) gb[i] += g[i] * va[i];
        }
        break;
      }
      case Op::kScale: {
        if (needs(n.a)) {
          float* ga = grad_ptr(n.a);
          for (int i = 0; i < ne; ++i) ga[i] += g[i] * n.c0;
        }
        break;
      }
      case Op::kAddConst: {
        if (needs(n.a)) {
          float* ga = grad_ptr(n.a);
          for (int i = 0; i < ne; ++i) ga[i] += g[i];
        }
        break;
      }
      case Op::kMatVec: {
        const Tensor& W = val(n.a);
        const Tensor& X = val(n.b);
        const int m = W.dim(0), nn = W.dim(1);
        if (needs(n.a)) {
          float* gw = grad_ptr(n.a);
          const float* px = X.data();
          for (int i = 0; i < m; ++i) {
            float gi = g[i];
            float* row = gw + static_cast<size_t>(i) * nn;
            for (int j = 0; j < nn; ++j) row[j] += gi * px[j];
          }
        }
        if (needs(n.b)) {
          float* gx = grad_ptr(n.b);
          const float* pw = W.data();
          for (int i = 0; i < m; ++i) {
            float gi = g[i];
            const float* row = pw + static_cast<size_t>(i) * nn;
            for (int j = 0; j < nn; ++j) gx[j] += gi * row[j];
          }
        }
        break;
      }
      case Op::kTanh: {
        if (needs(n.a)) {
          float* ga = grad_ptr(n.a);
          const float* y = n.val.data();
          for (int i = 0; i < ne; ++i) ga[i] += g[i] * (1.0f - y[i] * y[i]);
        }
        break;
      }
      case Op::kExp: {
        if (needs(n.a)) {
          float* ga = grad_ptr(n.a);
          const float* y = n.val.data();
          for (int i = 0; i < ne; ++i) ga[i] += g[i] * y[i];
        }
        break;
      }
      case Op::kSquare: {
        if (needs(n.a)) {
          float* ga = grad_ptr(n.a);
          const float* va = val(n.a).data();
          for (int i = 0; i < ne; ++i) ga[i] += g[i] * 2.0f * va[i];
        }
        break;
      }
      case Op::kSum: {
        if (needs(n.a)) {
          float* ga = grad_ptr(n.a);
          const float g0 = g[0];
          const int na = val(n.a).numel();
          for (int i = 0; i < na; ++i) ga[i] += g0;
        }
        break;
      }
      case Op::kConcat: {
        const int na = val(n.a).numel();
        if (needs(n.a)) {
          float* ga = grad_ptr(n.a);
          for (int i = 0; i < na; ++i) ga[i] += g[i];
        }
        if (needs(n.b)) {
          float* gb = grad_ptr(n.b);
          const int nb = val(n.b).numel();
          for (int i = 0; i < nb; ++i) gb[i] += g[na + i];
        }
        break;
      }
      case Op::kSlice: {
        if (needs(n.a)) {
          float* ga = grad_ptr(n.a);
          for (int i = 0; i < ne; ++i) ga[n.i0 + i] += g[i];
        }
        break;
      }
      case Op::kClamp: {
        if (needs(n.a)) {
          float* ga = grad_ptr(n.a);
          const float* va = val(n.a).data();
          for (int i = 0; i < ne; ++i)
            if (va[i] >= n.c0 && va[i] <= n.c1) ga[i] += g[i];
        }
        break;
      }
    }
  }

  std::vector<Node> nodes_;
  std::unordered_map<ParamTensor*, VarId> param_nodes_;
};

}  // namespace skillstep
