// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include "moetrack/tensor.hpp"

// The MoE replacement for one linear layer: a frozen shared expert (the
// pretrained weight slot), a router, one shared compression expert (d -> r)
// and N_e densely activated routed experts (r -> D). With routed weights at
// zero the layer reduces exactly to the shared expert, so a freshly
// initialized model equals its backbone.

namespace moetrack {

template <class T>
struct TMoEParams {
  Tensor<T> shared_w;                 // [d x D], frozen
  Tensor<T> shared_b;                 // [D], frozen
  Tensor<T> router_w;                 // [d x Ne]
  Tensor<T> router_b;                 // [Ne]
  Tensor<T> compress_w;               // [d x r], no bias
  std::vector<Tensor<T>> routed_w;    // Ne of [r x D], no bias, zero-init
  int d = 0, D = 0, ne = 0, r = 0;

  static TMoEParams init(int d, int D, int ne, int r, Rng& rng) {
    if (ne < 1 || r < 1 || r > d || r > D)
      throw std::invalid_argument("tmoe: need ne >= 1 and 1 <= r <= min(d, D)");
    TMoEParams p;
    p.d = d; p.D = D; p.ne = ne; p.r = r;
    p.shared_w = Tensor<T>::randn({d, D}, rng, T(0.02), false);
    p.shared_b = Tensor<T>::zeros({D}, false);
    p.router_w = Tensor<T>::randn({d, ne}, rng, T(0.02), true);
    p.router_b = Tensor<T>::zeros({ne}, true);
    const T bound = T(1) / std::sqrt(T(d));
    p.compress_w = Tensor<T>::uniform({d, r}, rng, -bound, bound, true);
    p.routed_w.reserve(static_cast<std::size_t>(ne));
    for (int i = 0; i < ne; ++i) p.routed_w.push_back(Tensor<T>::zeros({r, D}, true));
    return p;
  }

  void freeze_shared() {
    shared_w.set_requires_grad(false);
    shared_b.set_requires_grad(false);
  }

  std::vector<Tensor<T>*> trainable() {
    std::vector<Tensor<T>*> out = {&router_w, &router_b, &compress_w};
    for (auto& t : routed_w) out.push_back(&t);
    return out;
  }
};

// Per-token routing weights: softmax(x * router_w + router_b), rows sum to 1.
template <class T>
Tensor<T> router_weights(const Tensor<T>& x, const TMoEParams<T>& p) {
  return softmax(add_rowvec(matmul(x, p.router_w), p.router_b));
}

// y = shared(x) + sum_i W_i * routed_i(compress(x)); all experts contribute.
template <class T>
Tensor<T> tmoe_forward(const Tensor<T>& x, const TMoEParams<T>& p) {
  if (x.shape().size() != 2 || x.dim(1) != p.d)
    throw std::invalid_argument("tmoe_forward: input " + shape_str(x.shape()) +
                                " does not match d=" + std::to_string(p.d));
  Tensor<T> w = router_weights(x, p);
  Tensor<T> y = add_rowvec(matmul(x, p.shared_w), p.shared_b);
  Tensor<T> yc = matmul(x, p.compress_w);
  for (int i = 0; i < p.ne; ++i) {
    Tensor<T> yi = matmul(yc, p.routed_w[static_cast<std::size_t>(i)]);
    y = add(y, mul_rows(yi, slice_cols(w, i, 1)));
  }
  return y;
}

// The shared-expert path alone (the frozen backbone linear layer).
template <class T>
Tensor<T> shared_forward(const Tensor<T>& x, const TMoEParams<T>& p) {
  return add_rowvec(matmul(x, p.shared_w), p.shared_b);
}

}  // namespace moetrack
