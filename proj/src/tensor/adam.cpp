#include <cmath>

#include "odyn/optim.hpp"

namespace odyn::tensor {

AdamState AdamState::for_parameters(const std::vector<NamedTensor>& params) {
  AdamState state;
  for (const auto& p : params) {
    state.first.emplace_back(p.tensor.size(), real(0));
    state.second.emplace_back(p.tensor.size(), real(0));
  }
  return state;
}

void adam_step(std::vector<NamedTensor>& params, AdamState& state, const AdamOptions& options) {
  if (state.first.size() != params.size() || state.second.size() != params.size()) {
    throw ShapeError("adam_step: optimizer state holds " + std::to_string(state.first.size()) +
                     " moments for " + std::to_string(params.size()) + " parameters");
  }
  for (std::size_t k = 0; k < params.size(); ++k) {
    const auto& p = params[k];
    if (state.first[k].size() != p.tensor.size() || state.second[k].size() != p.tensor.size()) {
      throw ShapeError("adam_step: moments of '" + p.name + "' are not shaped like " +
                       to_string(p.tensor.shape()));
    }
    for (auto g : p.tensor.grad()) {
      if (!std::isfinite(g)) throw NumericError("adam_step: non-finite gradient in parameter '" + p.name + "'");
    }
  }
  state.step += 1;
  const double t = static_cast<double>(state.step);
  const real correction1 = static_cast<real>(1.0 - std::pow(static_cast<double>(options.beta1), t));
  const real correction2 = static_cast<real>(1.0 - std::pow(static_cast<double>(options.beta2), t));
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto& tensor = params[k].tensor;
    const auto grad = tensor.grad();
    auto values = tensor.values();
    auto& m = state.first[k];
    auto& v = state.second[k];
    for (std::size_t i = 0; i < values.size(); ++i) {
      const real g = grad.empty() ? real(0) : grad[i];
      m[i] = options.beta1 * m[i] + (real(1) - options.beta1) * g;
      v[i] = options.beta2 * v[i] + (real(1) - options.beta2) * g * g;
      const real m_hat = m[i] / correction1;
      const real v_hat = v[i] / correction2;
      values[i] -= options.learning_rate * m_hat / (std::sqrt(v_hat) + options.epsilon);
    }
  }
}

void zero_grad(std::vector<NamedTensor>& params) {
  for (auto& p : params) p.tensor.zero_grad();
}

}  // namespace odyn::tensor
