#include "skullkit/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <unordered_set>

namespace skullkit {

namespace {

thread_local bool g_grad_enabled = true;

std::string shape_str(const std::array<int64_t, 5>& s) {
  std::string out = "(";
  for (int i = 0; i < 5; ++i) out += std::to_string(s[i]) + (i < 4 ? "," : ")");
  return out;
}

Var make_result(Tensor value, std::vector<Var> parents, std::function<void(Node&)> backprop) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  bool track = g_grad_enabled;
  bool any_requires = false;
  if (track)
    for (const auto& p : parents) any_requires |= p->requires_grad;
  if (track && any_requires) {
    node->requires_grad = true;
    node->is_leaf = false;
    node->parents = std::move(parents);
    node->backprop = std::move(backprop);
  }
  return node;
}

}  // namespace

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

Var make_leaf(Tensor value, bool requires_grad) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  node->requires_grad = requires_grad;
  return node;
}

// ---------------------------------------------------------------------------
// conv3d

Var conv3d(const Var& x, const Var& w, const Var& b, int stride, int padding) {
  const Tensor& xv = x->value;
  const Tensor& wv = w->value;
  const Tensor& bv = b->value;
  const int64_t N = xv.shape[0], Ci = xv.shape[1];
  const int64_t Co = wv.shape[0], k = wv.shape[2];
  if (wv.shape[1] != Ci || wv.shape[3] != k || wv.shape[4] != k)
    throw Error(ErrorCode::ShapeMismatch,
                "conv3d weight " + shape_str(wv.shape) + " does not match input " +
                    shape_str(xv.shape));
  if (bv.shape[1] != Co || bv.numel() != Co)
    throw Error(ErrorCode::ShapeMismatch, "conv3d bias must have one value per out channel");
  const int64_t s = stride, p = padding;
  std::array<int64_t, 3> in{xv.shape[2], xv.shape[3], xv.shape[4]};
  std::array<int64_t, 3> out{};
  for (int a = 0; a < 3; ++a) {
    int64_t span = in[a] + 2 * p - k;
    if (span < 0)
      throw Error(ErrorCode::ShapeMismatch,
                  "conv3d kernel larger than padded input on axis " + std::to_string(a));
    out[a] = span / s + 1;
  }

  Tensor y({N, Co, out[0], out[1], out[2]});
  for (int64_t n = 0; n < N; ++n)
    for (int64_t co = 0; co < Co; ++co) {
      const float bias = bv.data[static_cast<size_t>(co)];
      for (int64_t od = 0; od < out[0]; ++od)
        for (int64_t oh = 0; oh < out[1]; ++oh)
          for (int64_t ow = 0; ow < out[2]; ++ow) {
            double acc = bias;
            for (int64_t ci = 0; ci < Ci; ++ci)
              for (int64_t kd = 0; kd < k; ++kd) {
                int64_t id = od * s - p + kd;
                if (id < 0 || id >= in[0]) continue;
                for (int64_t kh = 0; kh < k; ++kh) {
                  int64_t ih = oh * s - p + kh;
                  if (ih < 0 || ih >= in[1]) continue;
                  for (int64_t kw = 0; kw < k; ++kw) {
                    int64_t iw = ow * s - p + kw;
                    if (iw < 0 || iw >= in[2]) continue;
                    acc += static_cast<double>(xv.at(n, ci, id, ih, iw)) *
                           wv.at(co, ci, kd, kh, kw);
                  }
                }
              }
            y.at(n, co, od, oh, ow) = static_cast<float>(acc);
          }
    }

  auto backprop = [stride, padding](Node& self) {
    const Var& x = self.parents[0];
    const Var& w = self.parents[1];
    const Var& b = self.parents[2];
    const Tensor& g = self.grad;
    const Tensor& xv = x->value;
    const Tensor& wv = w->value;
    const int64_t N = xv.shape[0], Ci = xv.shape[1];
    const int64_t Co = wv.shape[0], k = wv.shape[2];
    const int64_t s = stride, p = padding;
    std::array<int64_t, 3> in{xv.shape[2], xv.shape[3], xv.shape[4]};
    std::array<int64_t, 3> out{g.shape[2], g.shape[3], g.shape[4]};
    if (x->requires_grad) x->ensure_grad();
    if (w->requires_grad) w->ensure_grad();
    if (b->requires_grad) b->ensure_grad();

    for (int64_t n = 0; n < N; ++n)
      for (int64_t co = 0; co < Co; ++co)
        for (int64_t od = 0; od < out[0]; ++od)
          for (int64_t oh = 0; oh < out[1]; ++oh)
            for (int64_t ow = 0; ow < out[2]; ++ow) {
              float gv = g.at(n, co, od, oh, ow);
              if (gv == 0.f) continue;
              if (b->requires_grad) b->grad.data[static_cast<size_t>(co)] += gv;
              for (int64_t ci = 0; ci < Ci; ++ci)
                for (int64_t kd = 0; kd < k; ++kd) {
                  int64_t id = od * s - p + kd;
                  if (id < 0 || id >= in[0]) continue;
                  for (int64_t kh = 0; kh < k; ++kh) {
                    int64_t ih = oh * s - p + kh;
                    if (ih < 0 || ih >= in[1]) continue;
                    for (int64_t kw = 0; kw < k; ++kw) {
                      int64_t iw = ow * s - p + kw;
                      if (iw < 0 || iw >= in[2]) continue;
                      if (w->requires_grad)
                        w->grad.at(co, ci, kd, kh, kw) += gv * xv.at(n, ci, id, ih, iw);
                      if (x->requires_grad)
                        x->grad.at(n, ci, id, ih, iw) += gv * wv.at(co, ci, kd, kh, kw);
                    }
                  }
                }
            }
  };
  return make_result(std::move(y), {x, w, b}, backprop);
}

// ---------------------------------------------------------------------------
// conv_transpose3d

Var conv_transpose3d(const Var& x, const Var& w, const Var& b, int stride, int padding,
                     int output_padding) {
  const Tensor& xv = x->value;
  const Tensor& wv = w->value;
  const Tensor& bv = b->value;
  const int64_t N = xv.shape[0], Ci = xv.shape[1];
  const int64_t Co = wv.shape[1], k = wv.shape[2];
  if (wv.shape[0] != Ci || wv.shape[3] != k || wv.shape[4] != k)
    throw Error(ErrorCode::ShapeMismatch,
                "conv_transpose3d weight " + shape_str(wv.shape) + " does not match input " +
                    shape_str(xv.shape));
  if (bv.shape[1] != Co || bv.numel() != Co)
    throw Error(ErrorCode::ShapeMismatch, "conv_transpose3d bias must match out channels");
  if (output_padding < 0 || output_padding >= stride)
    throw Error(ErrorCode::ShapeMismatch, "output_padding must lie in [0, stride)");
  const int64_t s = stride, p = padding;
  std::array<int64_t, 3> in{xv.shape[2], xv.shape[3], xv.shape[4]};
  std::array<int64_t, 3> out{};
  for (int a = 0; a < 3; ++a) {
    out[a] = (in[a] - 1) * s - 2 * p + k + output_padding;
    if (out[a] < 1)
      throw Error(ErrorCode::ShapeMismatch,
                  "conv_transpose3d output collapses on axis " + std::to_string(a));
  }

  Tensor y({N, Co, out[0], out[1], out[2]});
  for (int64_t n = 0; n < N; ++n) {
    for (int64_t co = 0; co < Co; ++co) {
      const float bias = bv.data[static_cast<size_t>(co)];
      for (int64_t i = 0; i < out[0] * out[1] * out[2]; ++i)
        y.data[static_cast<size_t>(y.index(n, co, 0, 0, 0) + i)] = bias;
    }
    // scatter in input order; each (od,oh,ow) is touched by a fixed set of
    // (input, kernel) pairs so the accumulation order is deterministic
    for (int64_t ci = 0; ci < Ci; ++ci)
      for (int64_t id = 0; id < in[0]; ++id)
        for (int64_t ih = 0; ih < in[1]; ++ih)
          for (int64_t iw = 0; iw < in[2]; ++iw) {
            float xval = xv.at(n, ci, id, ih, iw);
            if (xval == 0.f) continue;
            for (int64_t co = 0; co < Co; ++co)
              for (int64_t kd = 0; kd < k; ++kd) {
                int64_t od = id * s - p + kd;
                if (od < 0 || od >= out[0]) continue;
                for (int64_t kh = 0; kh < k; ++kh) {
                  int64_t oh = ih * s - p + kh;
                  if (oh < 0 || oh >= out[1]) continue;
                  for (int64_t kw = 0; kw < k; ++kw) {
                    int64_t ow = iw * s - p + kw;
                    if (ow < 0 || ow >= out[2]) continue;
                    y.at(n, co, od, oh, ow) += xval * wv.at(ci, co, kd, kh, kw);
                  }
                }
              }
          }
  }

  auto backprop = [stride, padding](Node& self) {
    const Var& x = self.parents[0];
    const Var& w = self.parents[1];
    const Var& b = self.parents[2];
    const Tensor& g = self.grad;
    const Tensor& xv = x->value;
    const Tensor& wv = w->value;
    const int64_t N = xv.shape[0], Ci = xv.shape[1];
    const int64_t Co = wv.shape[1], k = wv.shape[2];
    const int64_t s = stride, p = padding;
    std::array<int64_t, 3> in{xv.shape[2], xv.shape[3], xv.shape[4]};
    std::array<int64_t, 3> out{g.shape[2], g.shape[3], g.shape[4]};
    if (x->requires_grad) x->ensure_grad();
    if (w->requires_grad) w->ensure_grad();
    if (b->requires_grad) b->ensure_grad();

    if (b->requires_grad)
      for (int64_t n = 0; n < N; ++n)
        for (int64_t co = 0; co < Co; ++co) {
          double acc = 0.0;
          for (int64_t i = 0; i < out[0] * out[1] * out[2]; ++i)
            acc += g.data[static_cast<size_t>(g.index(n, co, 0, 0, 0) + i)];
          b->grad.data[static_cast<size_t>(co)] += static_cast<float>(acc);
        }

    for (int64_t n = 0; n < N; ++n)
      for (int64_t ci = 0; ci < Ci; ++ci)
        for (int64_t id = 0; id < in[0]; ++id)
          for (int64_t ih = 0; ih < in[1]; ++ih)
            for (int64_t iw = 0; iw < in[2]; ++iw) {
              float xval = xv.at(n, ci, id, ih, iw);
              double gx = 0.0;
              for (int64_t co = 0; co < Co; ++co)
                for (int64_t kd = 0; kd < k; ++kd) {
                  int64_t od = id * s - p + kd;
                  if (od < 0 || od >= out[0]) continue;
                  for (int64_t kh = 0; kh < k; ++kh) {
                    int64_t oh = ih * s - p + kh;
                    if (oh < 0 || oh >= out[1]) continue;
                    for (int64_t kw = 0; kw < k; ++kw) {
                      int64_t ow = iw * s - p + kw;
                      if (ow < 0 || ow >= out[2]) continue;
                      float gv = g.at(n, co, od, oh, ow);
                      if (x->requires_grad) gx += static_cast<double>(gv) * wv.at(ci, co, kd, kh, kw);
                      if (w->requires_grad) w->grad.at(ci, co, kd, kh, kw) += gv * xval;
                    }
                  }
                }
              if (x->requires_grad) x->grad.at(n, ci, id, ih, iw) += static_cast<float>(gx);
            }
  };
  return make_result(std::move(y), {x, w, b}, backprop);
}

// ---------------------------------------------------------------------------
// prelu

Var prelu(const Var& x, const Var& alpha) {
  if (alpha->value.numel() != 1)
    throw Error(ErrorCode::ShapeMismatch, "prelu alpha must be a single learnable scalar");
  const Tensor& xv = x->value;
  const float a = alpha->value.data[0];
  Tensor y(xv.shape);
  const size_t n = xv.data.size();
  for (size_t i = 0; i < n; ++i) {
    float v = xv.data[i];
    y.data[i] = v > 0.f ? v : a * v;
  }

  auto backprop = [](Node& self) {
    const Var& x = self.parents[0];
    const Var& alpha = self.parents[1];
    const float a = alpha->value.data[0];
    const Tensor& g = self.grad;
    const Tensor& xv = x->value;
    if (x->requires_grad) x->ensure_grad();
    if (alpha->requires_grad) alpha->ensure_grad();
    double da = 0.0;
    const size_t n = xv.data.size();
    for (size_t i = 0; i < n; ++i) {
      float v = xv.data[i];
      float gv = g.data[i];
      if (x->requires_grad) x->grad.data[i] += v > 0.f ? gv : a * gv;
      if (v <= 0.f) da += static_cast<double>(gv) * v;
    }
    if (alpha->requires_grad) alpha->grad.data[0] += static_cast<float>(da);
  };
  return make_result(std::move(y), {x, alpha}, backprop);
}

// ---------------------------------------------------------------------------
// softmax over channels

Var softmax_channels(const Var& x) {
  const Tensor& xv = x->value;
  const int64_t N = xv.shape[0], C = xv.shape[1];
  const int64_t V = xv.shape[2] * xv.shape[3] * xv.shape[4];
  if (C < 1) throw Error(ErrorCode::ShapeMismatch, "softmax needs at least one channel");
  Tensor y(xv.shape);
  for (int64_t n = 0; n < N; ++n)
    for (int64_t v = 0; v < V; ++v) {
      float maxv = -std::numeric_limits<float>::infinity();
      for (int64_t c = 0; c < C; ++c)
        maxv = std::max(maxv, xv.data[static_cast<size_t>((n * C + c) * V + v)]);
      double denom = 0.0;
      for (int64_t c = 0; c < C; ++c) {
        float e = std::exp(xv.data[static_cast<size_t>((n * C + c) * V + v)] - maxv);
        y.data[static_cast<size_t>((n * C + c) * V + v)] = e;
        denom += e;
      }
      for (int64_t c = 0; c < C; ++c)
        y.data[static_cast<size_t>((n * C + c) * V + v)] =
            static_cast<float>(y.data[static_cast<size_t>((n * C + c) * V + v)] / denom);
    }

  // dL/dx_c = p_c * (g_c - sum_j p_j g_j); needs the output, so capture it
  Tensor p = y;
  auto backprop = [p = std::move(p)](Node& self) {
    const Var& x = self.parents[0];
    if (!x->requires_grad) return;
    x->ensure_grad();
    const Tensor& g = self.grad;
    const int64_t N = p.shape[0], C = p.shape[1];
    const int64_t V = p.shape[2] * p.shape[3] * p.shape[4];
    for (int64_t n = 0; n < N; ++n)
      for (int64_t v = 0; v < V; ++v) {
        double dot = 0.0;
        for (int64_t c = 0; c < C; ++c) {
          size_t i = static_cast<size_t>((n * C + c) * V + v);
          dot += static_cast<double>(p.data[i]) * g.data[i];
        }
        for (int64_t c = 0; c < C; ++c) {
          size_t i = static_cast<size_t>((n * C + c) * V + v);
          x->grad.data[i] += static_cast<float>(p.data[i] * (g.data[i] - dot));
        }
      }
  };
  return make_result(std::move(y), {x}, backprop);
}

// ---------------------------------------------------------------------------
// generic helpers

Var add(const Var& a, const Var& b) {
  if (a->value.shape != b->value.shape)
    throw Error(ErrorCode::ShapeMismatch, "add operands differ in shape");
  Tensor y(a->value.shape);
  for (size_t i = 0; i < y.data.size(); ++i) y.data[i] = a->value.data[i] + b->value.data[i];
  auto backprop = [](Node& self) {
    for (const auto& p : self.parents) {
      if (!p->requires_grad) continue;
      p->ensure_grad();
      for (size_t i = 0; i < self.grad.data.size(); ++i) p->grad.data[i] += self.grad.data[i];
    }
  };
  return make_result(std::move(y), {a, b}, backprop);
}

Var mul(const Var& a, const Var& b) {
  if (a->value.shape != b->value.shape)
    throw Error(ErrorCode::ShapeMismatch, "mul operands differ in shape");
  Tensor y(a->value.shape);
  for (size_t i = 0; i < y.data.size(); ++i) y.data[i] = a->value.data[i] * b->value.data[i];
  auto backprop = [](Node& self) {
    const Var& a = self.parents[0];
    const Var& b = self.parents[1];
    if (a->requires_grad) {
      a->ensure_grad();
      for (size_t i = 0; i < self.grad.data.size(); ++i)
        a->grad.data[i] += self.grad.data[i] * b->value.data[i];
    }
    if (b->requires_grad) {
      b->ensure_grad();
      for (size_t i = 0; i < self.grad.data.size(); ++i)
        b->grad.data[i] += self.grad.data[i] * a->value.data[i];
    }
  };
  return make_result(std::move(y), {a, b}, backprop);
}

Var sum_all(const Var& x) {
  double acc = 0.0;
  for (float v : x->value.data) acc += v;
  Tensor y = Tensor::scalar(static_cast<float>(acc));
  auto backprop = [](Node& self) {
    const Var& x = self.parents[0];
    if (!x->requires_grad) return;
    x->ensure_grad();
    float g = self.grad.data[0];
    for (size_t i = 0; i < x->grad.data.size(); ++i) x->grad.data[i] += g;
  };
  return make_result(std::move(y), {x}, backprop);
}

// ---------------------------------------------------------------------------
// backward

void backward(const Var& loss) {
  if (loss->value.numel() != 1)
    throw Error(ErrorCode::ShapeMismatch, "backward needs a scalar loss");
  if (loss->is_leaf || loss->tape_consumed || !loss->backprop)
    throw Error(ErrorCode::NoTape, "no recorded tape; run a fresh forward pass first");

  // iterative post-order topological sort
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, size_t>> stack;
  stack.emplace_back(loss.get(), 0);
  visited.insert(loss.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* parent = node->parents[next++].get();
      if (!parent->is_leaf && !visited.count(parent)) {
        visited.insert(parent);
        stack.emplace_back(parent, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  loss->ensure_grad();
  loss->grad.data[0] = 1.f;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* node = *it;
    if (node->backprop && node->has_grad()) node->backprop(*node);
  }
  // free the tape
  for (Node* node : order) {
    node->backprop = nullptr;
    node->parents.clear();
    node->tape_consumed = true;
  }
}

}  // namespace skullkit
