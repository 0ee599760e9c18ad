#include "kdla/adam.hpp"

#include <cmath>

#include "kdla/errors.hpp"

namespace kdla {

AdamState AdamState::for_params(const MlpParams& params) {
  AdamState s;
  for (const auto& t : params.tensors()) {
    s.first.emplace_back(t.size(), 0.0);
    s.second.emplace_back(t.size(), 0.0);
  }
  return s;
}

void adam_step(MlpParams& params, const MlpParams& grads, AdamState& state, double lr) {
  if (!(lr > 0.0)) throw ConfigError("adam_step: learning rate must be positive");
  auto p = params.tensors();
  const auto g = grads.tensors();
  require_shape(p.size() == g.size() && p.size() == state.first.size(), "adam_step: parameter layout mismatch");
  for (std::size_t t = 0; t < g.size(); ++t) {
    require_shape(p[t].size() == g[t].size() && state.first[t].size() == g[t].size(),
                  "adam_step: tensor " + std::to_string(t) + " size mismatch");
    for (std::size_t i = 0; i < g[t].size(); ++i) {
      if (!std::isfinite(g[t][i])) {
        throw NumericalError("adam_step: non-finite gradient in tensor " + std::to_string(t) + " at entry " +
                             std::to_string(i) + " (step " + std::to_string(state.step + 1) + ")");
      }
    }
  }

  ++state.step;
  const double c1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  for (std::size_t t = 0; t < g.size(); ++t) {
    auto& m = state.first[t];
    auto& v = state.second[t];
    for (std::size_t i = 0; i < g[t].size(); ++i) {
      const double gi = g[t][i];
      m[i] = state.beta1 * m[i] + (1.0 - state.beta1) * gi;
      v[i] = state.beta2 * v[i] + (1.0 - state.beta2) * gi * gi;
      p[t][i] -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + state.eps);
    }
  }
}

double lr_drop_schedule(std::size_t epoch, std::size_t total, double lr_start, double lr_end) {
  return 2 * epoch < total ? lr_start : lr_end;
}

}  // namespace kdla
