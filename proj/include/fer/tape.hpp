#pragma once

#include <functional>
#include <memory>
#include <utility>
#include <vector>

#include "fer/activations.hpp"
#include "fer/layers.hpp"
#include "fer/tensor.hpp"

namespace fer {

/// Reverse-mode tape. Nodes are appended in forward order, so walking the
/// tape backwards is already a topological order. Leaf nodes hold inputs and
/// parameters; gradients accumulate per node and untouched nodes keep exact
/// zeros. Single-owner: a tape is never shared across threads.
class GradTape {
 public:
  using BackFn = std::function<void(GradTape&, int)>;

  int leaf(Tensor value) {
    nodes_.push_back(Node{std::move(value), nullptr, Tensor(), {}, nullptr, false});
    return static_cast<int>(nodes_.size()) - 1;
  }

  /// Borrowing leaf for large parameters: the tensor must outlive the tape.
  int leaf_ref(const Tensor* value) {
    nodes_.push_back(Node{Tensor(), value, Tensor(), {}, nullptr, false});
    return static_cast<int>(nodes_.size()) - 1;
  }

  int record(Tensor value, std::vector<int> parents, BackFn fn) {
    nodes_.push_back(
        Node{std::move(value), nullptr, Tensor(), std::move(parents), std::move(fn), false});
    return static_cast<int>(nodes_.size()) - 1;
  }

  bool empty() const { return nodes_.empty(); }
  std::size_t size() const { return nodes_.size(); }

  const Tensor& value(int id) const {
    const Node& n = nodes_[static_cast<std::size_t>(id)];
    return n.external ? *n.external : n.value;
  }

  /// Gradient of the last backward() root wrt node id; zeros if the node
  /// never participated.
  const Tensor& grad(int id) { return grad_buffer(id); }

  Tensor& grad_buffer(int id) {
    Node& n = nodes_[static_cast<std::size_t>(id)];
    if (!n.touched) {
      n.grad = Tensor(value(id).shape());
      n.touched = true;
    }
    return n.grad;
  }

  /// Weight-gradient updates of the form grad[w] += x (outer) dy are queued
  /// and applied together at the end of backward(), one pass over the weight
  /// buffer per batch instead of one per sample.
  void defer_outer(int weight_leaf, int input_node, int output_node) {
    pending_.push_back({weight_leaf, input_node, output_node});
  }

  /// Accumulates gradients for every ancestor of root. Without an explicit
  /// seed the root must be a single-element tensor (a scalar loss).
  void backward(int root, Tensor seed = Tensor()) {
    if (nodes_.empty()) throw Error("backward on an empty tape");
    const Tensor& rv = value(root);
    if (seed.empty()) {
      if (rv.numel() != 1) {
        throw DimensionError(
            "backward without an upstream gradient requires a scalar root, got " +
            rv.shape_string());
      }
      seed = Tensor(rv.shape(), 1.0);
    }
    if (!seed.same_shape(rv)) {
      throw DimensionError("backward seed shape " + seed.shape_string() +
                           " does not match root " + rv.shape_string());
    }
    Tensor& rg = grad_buffer(root);
    for (std::size_t i = 0; i < seed.numel(); ++i) rg[i] += seed[i];
    for (int id = root; id >= 0; --id) {
      Node& n = nodes_[static_cast<std::size_t>(id)];
      if (n.touched && n.backward) n.backward(*this, id);
    }
    flush_pending();
  }

  void reset_grads() {
    pending_.clear();
    for (Node& n : nodes_) {
      n.grad = Tensor();
      n.touched = false;
    }
  }

 private:
  struct Node {
    Tensor value;
    const Tensor* external;
    Tensor grad;
    std::vector<int> parents;
    BackFn backward;
    bool touched;
  };
  struct PendingOuter {
    int weight_leaf;
    int input_node;
    int output_node;
  };

  void flush_pending() {
    // batched row-major accumulation, deterministic in queue order
    for (std::size_t start = 0; start < pending_.size(); ++start) {
      const int wleaf = pending_[start].weight_leaf;
      if (wleaf < 0) continue;
      const std::int64_t n = value(wleaf).dim(0);
      const std::int64_t m = value(wleaf).dim(1);
      Tensor& g = grad_buffer(wleaf);
      std::vector<const double*> xs, dys;
      for (std::size_t i = start; i < pending_.size(); ++i) {
        if (pending_[i].weight_leaf != wleaf) continue;
        xs.push_back(value(pending_[i].input_node).data());
        dys.push_back(nodes_[static_cast<std::size_t>(pending_[i].output_node)].grad.data());
        pending_[i].weight_leaf = -1;
      }
      double* gd = g.data();
      for (std::int64_t row = 0; row < n; ++row) {
        double* grow = gd + row * m;
        for (std::size_t b = 0; b < xs.size(); ++b) {
          const double xv = xs[b][row];
          const double* dy = dys[b];
          for (std::int64_t col = 0; col < m; ++col) grow[col] += xv * dy[col];
        }
      }
    }
    pending_.clear();
  }

  std::vector<Node> nodes_;
  std::vector<PendingOuter> pending_;
};

/// Tape-recorded counterparts of the layer primitives. Forward values come
/// from the plain functions in layers.hpp; each op only adds its pullback.
namespace tape {

inline int conv2d(GradTape& t, int input, int kernels, std::int64_t stride, Padding padding) {
  Tensor out = fer::conv2d(t.value(input), t.value(kernels), stride, padding);
  return t.record(std::move(out), {input, kernels},
                  [input, kernels, stride, padding](GradTape& g, int self) {
                    conv2d_backward(g.value(input), g.value(kernels), stride, padding,
                                    g.grad(self), &g.grad_buffer(input), &g.grad_buffer(kernels));
                  });
}

inline int max_pool2d(GradTape& t, int input) {
  auto argmax = std::make_shared<std::vector<std::int64_t>>();
  Tensor out = fer::max_pool2d(t.value(input), argmax.get());
  return t.record(std::move(out), {input}, [input, argmax](GradTape& g, int self) {
    Tensor gi = max_pool2d_backward(*argmax, g.value(input).shape(), g.grad(self));
    Tensor& dst = g.grad_buffer(input);
    for (std::size_t i = 0; i < gi.numel(); ++i) dst[i] += gi[i];
  });
}

/// Train-mode batch norm on the tape. Batch statistics used for the forward
/// pass land in *cache_out so the caller can fold them into running state.
inline int batch_norm(GradTape& t, int input, int gamma, int beta, BnCache* cache_out = nullptr) {
  auto cache = std::make_shared<BnCache>();
  BatchNormState dummy;  // train mode ignores running state
  dummy.running_mean = Tensor({t.value(gamma).dim(0)});
  dummy.running_var = Tensor({t.value(gamma).dim(0)}, 1.0);
  Tensor out = fer::batch_norm(t.value(input), t.value(gamma), t.value(beta), dummy, BnMode::kTrain,
                               cache.get(), /*update_state=*/false);
  if (cache_out) *cache_out = *cache;
  return t.record(std::move(out), {input, gamma, beta},
                  [input, gamma, beta, cache](GradTape& g, int self) {
                    batch_norm_backward(g.value(input), g.value(gamma), *cache, g.grad(self),
                                        &g.grad_buffer(input), &g.grad_buffer(gamma),
                                        &g.grad_buffer(beta));
                  });
}

inline int dense(GradTape& t, int input, int weights, int bias) {
  Tensor out = fer::dense(t.value(input), t.value(weights), t.value(bias));
  return t.record(std::move(out), {input, weights, bias},
                  [input, weights, bias](GradTape& g, int self) {
                    dense_backward(g.value(input), g.value(weights), g.grad(self),
                                   &g.grad_buffer(input), nullptr, &g.grad_buffer(bias));
                    g.defer_outer(weights, input, self);
                  });
}

/// Matrix product without bias, for recurrent maps.
inline int matvec(GradTape& t, int input, int weights) {
  const Tensor& w = t.value(weights);
  Tensor zero({w.dim(1)});
  Tensor out = fer::dense(t.value(input), w, zero);
  return t.record(std::move(out), {input, weights}, [input, weights](GradTape& g, int self) {
    dense_backward(g.value(input), g.value(weights), g.grad(self), &g.grad_buffer(input), nullptr,
                   nullptr);
    g.defer_outer(weights, input, self);
  });
}

inline int activation(GradTape& t, ActivationKind kind, int input) {
  Tensor out = fer::activate(kind, t.value(input));
  return t.record(std::move(out), {input}, [kind, input](GradTape& g, int self) {
    Tensor gi = activate_backward(kind, g.value(input), g.value(self), g.grad(self));
    Tensor& dst = g.grad_buffer(input);
    for (std::size_t i = 0; i < gi.numel(); ++i) dst[i] += gi[i];
  });
}

inline int add(GradTape& t, int a, int b) {
  const Tensor& ta = t.value(a);
  const Tensor& tb = t.value(b);
  if (!ta.same_shape(tb)) {
    throw DimensionError("add shape mismatch: " + ta.shape_string() + " vs " + tb.shape_string());
  }
  Tensor out = ta;
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] += tb[i];
  return t.record(std::move(out), {a, b}, [a, b](GradTape& g, int self) {
    const Tensor& u = g.grad(self);
    Tensor& ga = g.grad_buffer(a);
    Tensor& gb = g.grad_buffer(b);
    for (std::size_t i = 0; i < u.numel(); ++i) {
      ga[i] += u[i];
      gb[i] += u[i];
    }
  });
}

inline int concat(GradTape& t, int a, int b) {
  const Tensor& ta = t.value(a);
  const Tensor& tb = t.value(b);
  std::vector<double> joined(ta.values());
  joined.insert(joined.end(), tb.values().begin(), tb.values().end());
  const auto total = static_cast<std::int64_t>(joined.size());
  Tensor out({total}, std::move(joined));
  const std::size_t na = ta.numel();
  return t.record(std::move(out), {a, b}, [a, b, na](GradTape& g, int self) {
    const Tensor& u = g.grad(self);
    Tensor& ga = g.grad_buffer(a);
    Tensor& gb = g.grad_buffer(b);
    for (std::size_t i = 0; i < na; ++i) ga[i] += u[i];
    for (std::size_t i = na; i < u.numel(); ++i) gb[i - na] += u[i];
  });
}

inline int flatten(GradTape& t, int input) {
  const Tensor& v = t.value(input);
  Tensor out = v.reshaped({static_cast<std::int64_t>(v.numel())});
  return t.record(std::move(out), {input}, [input](GradTape& g, int self) {
    const Tensor& u = g.grad(self);
    Tensor& gi = g.grad_buffer(input);
    for (std::size_t i = 0; i < u.numel(); ++i) gi[i] += u[i];
  });
}

inline int sum(GradTape& t, int input) {
  const Tensor& v = t.value(input);
  double acc = 0.0;
  for (std::size_t i = 0; i < v.numel(); ++i) acc += v[i];
  return t.record(Tensor({1}, acc), {input}, [input](GradTape& g, int self) {
    const double u = g.grad(self)[0];
    Tensor& gi = g.grad_buffer(input);
    for (std::size_t i = 0; i < gi.numel(); ++i) gi[i] += u;
  });
}

inline int scale(GradTape& t, int input, double k) {
  Tensor out = t.value(input);
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] *= k;
  return t.record(std::move(out), {input}, [input, k](GradTape& g, int self) {
    const Tensor& u = g.grad(self);
    Tensor& gi = g.grad_buffer(input);
    for (std::size_t i = 0; i < u.numel(); ++i) gi[i] += k * u[i];
  });
}

/// Fused stable softmax + cross-entropy against a class index; the pullback
/// into the logits is p - onehot.
inline int softmax_xent(GradTape& t, int logits, int target) {
  const Tensor& z = t.value(logits);
  auto probs = std::make_shared<Tensor>(activate(ActivationKind::SOFTMAX_STANDARD, z));
  const double p = std::max((*probs)[static_cast<std::size_t>(target)], 1e-300);
  return t.record(Tensor({1}, -std::log(p)), {logits},
                  [logits, target, probs](GradTape& g, int self) {
                    const double u = g.grad(self)[0];
                    Tensor& gl = g.grad_buffer(logits);
                    for (std::size_t i = 0; i < probs->numel(); ++i) {
                      double d = (*probs)[i];
                      if (i == static_cast<std::size_t>(target)) d -= 1.0;
                      gl[i] += u * d;
                    }
                  });
}

}  // namespace tape
}  // namespace fer
