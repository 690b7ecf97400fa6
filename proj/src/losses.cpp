#include "skullkit/losses.hpp"

#include <cmath>
#include <string>

namespace skullkit {

namespace {
constexpr double kSmoothNumerator = 1e-5;
constexpr double kSmoothDenominator = 1e-5;

Var make_loss_node(Tensor value, std::vector<Var> parents, std::function<void(Node&)> backprop) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  bool any = false;
  for (const auto& p : parents) any |= p->requires_grad;
  if (grad_enabled() && any) {
    node->requires_grad = true;
    node->is_leaf = false;
    node->parents = std::move(parents);
    node->backprop = std::move(backprop);
  }
  return node;
}
}  // namespace

Var dice_loss(const Var& logits, const Tensor& target) {
  if (logits->value.shape != target.shape)
    throw Error(ErrorCode::ShapeMismatch, "dice_loss logits and target shapes differ");

  Var p = softmax_channels(logits);
  const Tensor& pv = p->value;
  const int64_t N = pv.shape[0], C = pv.shape[1];
  const int64_t V = pv.shape[2] * pv.shape[3] * pv.shape[4];

  // per (n, c): intersection and the two mass terms
  std::vector<double> sum_pg(static_cast<size_t>(N * C), 0.0);
  std::vector<double> sum_p(static_cast<size_t>(N * C), 0.0);
  std::vector<double> sum_g(static_cast<size_t>(N * C), 0.0);
  for (int64_t n = 0; n < N; ++n)
    for (int64_t c = 0; c < C; ++c) {
      size_t nc = static_cast<size_t>(n * C + c);
      size_t base = static_cast<size_t>((n * C + c) * V);
      double spg = 0.0, sp = 0.0, sg = 0.0;
      for (int64_t v = 0; v < V; ++v) {
        double pd = pv.data[base + static_cast<size_t>(v)];
        double gd = target.data[base + static_cast<size_t>(v)];
        spg += pd * gd;
        sp += pd;
        sg += gd;
      }
      sum_pg[nc] = spg;
      sum_p[nc] = sp;
      sum_g[nc] = sg;
    }

  double mean_dice = 0.0;
  for (size_t nc = 0; nc < sum_pg.size(); ++nc)
    mean_dice += (2.0 * sum_pg[nc] + kSmoothNumerator) /
                 (sum_p[nc] + sum_g[nc] + kSmoothDenominator);
  mean_dice /= static_cast<double>(N * C);

  Tensor loss = Tensor::scalar(static_cast<float>(1.0 - mean_dice));

  Tensor target_copy = target;
  auto backprop = [sum_pg, sum_p, sum_g, target_copy = std::move(target_copy)](Node& self) {
    const Var& p = self.parents[0];
    if (!p->requires_grad) return;
    p->ensure_grad();
    const Tensor& pv = p->value;
    const int64_t N = pv.shape[0], C = pv.shape[1];
    const int64_t V = pv.shape[2] * pv.shape[3] * pv.shape[4];
    const float gscale = self.grad.data[0];
    const double inv_nc = 1.0 / static_cast<double>(N * C);
    for (int64_t n = 0; n < N; ++n)
      for (int64_t c = 0; c < C; ++c) {
        size_t nc = static_cast<size_t>(n * C + c);
        size_t base = static_cast<size_t>((n * C + c) * V);
        double num = 2.0 * sum_pg[nc] + kSmoothNumerator;
        double den = sum_p[nc] + sum_g[nc] + kSmoothDenominator;
        double den2 = den * den;
        for (int64_t v = 0; v < V; ++v) {
          double gd = target_copy.data[base + static_cast<size_t>(v)];
          // d dice / d p_v = (2 g_v * den - num) / den^2; loss flips the sign
          double d = -(2.0 * gd * den - num) / den2 * inv_nc;
          p->grad.data[base + static_cast<size_t>(v)] += static_cast<float>(d * gscale);
        }
      }
  };
  return make_loss_node(std::move(loss), {p}, backprop);
}

double dice_metric(const Volume& pred, const Volume& truth) {
  if (pred.dims != truth.dims)
    throw Error(ErrorCode::DimsMismatch, "dice_metric volumes have different dims");
  if (pred.dtype != Dtype::U8 || truth.dtype != Dtype::U8)
    throw Error(ErrorCode::NotBinary, "dice_metric expects binary U8 volumes");
  int64_t inter = 0, a = 0, b = 0;
  int64_t n = pred.numel();
  for (int64_t i = 0; i < n; ++i) {
    bool pa = pred.u8[i] != 0;
    bool pb = truth.u8[i] != 0;
    inter += (pa && pb);
    a += pa;
    b += pb;
  }
  if (a + b == 0) return 1.0;
  return 2.0 * static_cast<double>(inter) / static_cast<double>(a + b);
}

}  // namespace skullkit
