#include "aiwdn/optim.hpp"

#include <cmath>
#include <stdexcept>

namespace aiwdn::ad {

void AdamState::init(const std::vector<Tensor*>& params) {
  m.clear();
  v.clear();
  for (const Tensor* p : params) {
    m.emplace_back(p->numel(), 0.0);
    v.emplace_back(p->numel(), 0.0);
  }
  timestep = 0;
}

bool adam_step(const std::vector<Tensor*>& params, AdamState& state, const AdamConfig& cfg) {
  if (state.m.size() != params.size()) state.init(params);
  for (const Tensor* p : params) {
    if (p->grad.size() != p->numel())
      throw std::invalid_argument("adam_step: parameter missing gradient buffer");
    for (double g : p->grad)
      if (!std::isfinite(g)) return false;
  }

  state.timestep += 1;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.timestep));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.timestep));
  for (std::size_t k = 0; k < params.size(); ++k) {
    Tensor& p = *params[k];
    auto& m = state.m[k];
    auto& v = state.v[k];
    for (std::size_t i = 0; i < p.data.size(); ++i) {
      const double g = p.grad[i];
      m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g;
      v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g * g;
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      p.data[i] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
    }
  }
  return true;
}

}  // namespace aiwdn::ad
