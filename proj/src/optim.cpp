#include "skullkit/optim.hpp"

#include <cmath>
#include <string>

namespace skullkit {

void AdamConfig::validate() const {
  if (!(lr > 0.f)) throw Error(ErrorCode::InvalidConfig, "Adam lr must be > 0");
  if (beta1 < 0.f || beta1 >= 1.f || beta2 < 0.f || beta2 >= 1.f)
    throw Error(ErrorCode::InvalidConfig, "Adam betas must lie in [0, 1)");
  if (!(eps > 0.f)) throw Error(ErrorCode::InvalidConfig, "Adam eps must be > 0");
}

AdamState AdamState::for_parameters(const std::vector<Var>& params) {
  AdamState s;
  s.m.reserve(params.size());
  s.v.reserve(params.size());
  for (const auto& p : params) {
    s.m.emplace_back(p->value.data.size(), 0.f);
    s.v.emplace_back(p->value.data.size(), 0.f);
  }
  return s;
}

void adam_step(std::vector<Var>& params, AdamState& state, const AdamConfig& config) {
  config.validate();
  if (state.m.size() != params.size() || state.v.size() != params.size())
    throw Error(ErrorCode::InvalidConfig, "Adam state does not match parameter list");

  state.step += 1;
  const double t = static_cast<double>(state.step);
  const double bc1 = 1.0 - std::pow(static_cast<double>(config.beta1), t);
  const double bc2 = 1.0 - std::pow(static_cast<double>(config.beta2), t);

  for (size_t i = 0; i < params.size(); ++i) {
    Var& p = params[i];
    if (!p->requires_grad) continue;
    if (!p->has_grad())
      throw Error(ErrorCode::MissingGrad, "parameter " + std::to_string(i) +
                                              " has no gradient; run backward first");
    auto& m = state.m[i];
    auto& v = state.v[i];
    auto& w = p->value.data;
    const auto& g = p->grad.data;
    for (size_t j = 0; j < w.size(); ++j) {
      m[j] = config.beta1 * m[j] + (1.f - config.beta1) * g[j];
      v[j] = config.beta2 * v[j] + (1.f - config.beta2) * g[j] * g[j];
      double mhat = static_cast<double>(m[j]) / bc1;
      double vhat = static_cast<double>(v[j]) / bc2;
      w[j] = static_cast<float>(w[j] - static_cast<double>(config.lr) * mhat /
                                            (std::sqrt(vhat) + config.eps));
    }
  }
}

}  // namespace skullkit
