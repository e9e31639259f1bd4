#include "psim/optim.hpp"

#include <cmath>

#include "psim/error.hpp"

namespace psim {

void adam_step(std::span<Parameter* const> params, AdamState& state) {
  constexpr const char* kModule = "autodiff-core";
  if (state.first_moment.empty()) {
    for (const Parameter* p : params) {
      state.first_moment.push_back(Matrix::Zero(p->value.rows(), p->value.cols()));
      state.second_moment.push_back(Matrix::Zero(p->value.rows(), p->value.cols()));
    }
  }
  if (state.first_moment.size() != params.size()) {
    throw ArgumentError(kModule, "Adam state tracks a different parameter list");
  }
  for (const Parameter* p : params) {
    if (p->grad.rows() != p->value.rows() || p->grad.cols() != p->value.cols()) {
      throw ArgumentError(kModule, "parameter '" + p->name + "' has no gradient of matching shape");
    }
  }

  ++state.step;
  const double t = static_cast<double>(state.step);
  const double correction1 = 1.0 - std::pow(state.beta1, t);
  const double correction2 = 1.0 - std::pow(state.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    Parameter& p = *params[i];
    Matrix& m = state.first_moment[i];
    Matrix& v = state.second_moment[i];
    m = state.beta1 * m + (1.0 - state.beta1) * p.grad;
    v = state.beta2 * v + (1.0 - state.beta2) * p.grad.cwiseAbs2();
    p.value.array() -= state.learning_rate * (m.array() / correction1) /
                       ((v.array() / correction2).sqrt() + state.epsilon);
    p.zero_grad();
  }
}

}  // namespace psim
