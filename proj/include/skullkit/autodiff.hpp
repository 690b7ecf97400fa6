#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "skullkit/tensor.hpp"

namespace skullkit {

// Reverse-mode autodiff over a dynamically recorded graph. Every op returns a
// new node holding its value; backward() walks the graph once, accumulates
// gradients into the leaves, then frees the recording, so a second backward
// on the same graph raises NoTape.
struct Node {
  Tensor value;
  Tensor grad;  // allocated lazily; empty data means "no gradient yet"
  bool requires_grad = false;
  bool is_leaf = true;
  bool tape_consumed = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backprop;  // pulls from this node's grad into parents

  void ensure_grad() {
    if (grad.data.empty()) grad = Tensor(value.shape);
  }
  bool has_grad() const { return !grad.data.empty(); }
  void zero_grad() {
    grad = Tensor(value.shape);
  }
};

using Var = std::shared_ptr<Node>;

Var make_leaf(Tensor value, bool requires_grad = false);

// When grad mode is off, ops still compute values but record no graph.
// Used by validation/inference so the model tape stays untouched.
bool grad_enabled();
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
 private:
  bool previous_;
};

// x: (N, Cin, D, H, W); w: (Cout, Cin, k, k, k); b: (1, Cout, 1, 1, 1).
// Output spatial extent per axis: floor((D + 2p - k)/s) + 1.
Var conv3d(const Var& x, const Var& w, const Var& b, int stride, int padding);

// x: (N, Cin, D, H, W); w: (Cin, Cout, k, k, k); b: (1, Cout, 1, 1, 1).
// Output spatial extent per axis: (D - 1)*s - 2p + k + output_padding.
// Forward is exactly the adjoint of conv3d's input map for the same w.
Var conv_transpose3d(const Var& x, const Var& w, const Var& b, int stride, int padding,
                     int output_padding);

// alpha is a learnable 1-element tensor shared across the layer.
Var prelu(const Var& x, const Var& alpha);

// Per-voxel softmax across the channel axis, max-stabilized.
Var softmax_channels(const Var& x);

// Small generic ops (tests and loss plumbing).
Var add(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var sum_all(const Var& x);  // -> scalar-shaped (1,1,1,1,1)

// loss must be scalar-shaped. Populates grads of every requires_grad leaf
// reachable from it, then frees the tape.
void backward(const Var& loss);

}  // namespace skullkit
