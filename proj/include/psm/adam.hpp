#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>

#include "psm/mlp.hpp"

namespace psm {

class NonFiniteError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

template <typename Scalar = double>
struct AdamState {
  MlpParams<Scalar> first_moment;
  MlpParams<Scalar> second_moment;
  std::uint64_t step = 0;
  Scalar lr = Scalar(1e-3);
  Scalar beta1 = Scalar(0.9);
  Scalar beta2 = Scalar(0.999);
  Scalar eps_hat = Scalar(1e-8);

  static AdamState for_params(const MlpParams<Scalar>& params, Scalar lr = Scalar(1e-3)) {
    AdamState s;
    s.first_moment = MlpParams<Scalar>::zeros_like(params);
    s.second_moment = MlpParams<Scalar>::zeros_like(params);
    s.lr = lr;
    return s;
  }
};

// Bias-corrected Adam update in place. Rejects non-finite gradients before
// touching any state.
template <typename Scalar>
void adam_step(AdamState<Scalar>& state, MlpParams<Scalar>& params, const MlpParams<Scalar>& grads) {
  if (!(state.beta1 > 0 && state.beta1 < 1 && state.beta2 > 0 && state.beta2 < 1)) {
    throw std::invalid_argument("adam_step: betas must lie in (0, 1)");
  }
  if (!grads.all_finite()) throw NonFiniteError("adam_step: non-finite gradient");
  if (grads.weights.size() != params.weights.size()) throw ShapeError("adam_step: gradient shape mismatch");

  ++state.step;
  const Scalar c1 = Scalar(1) - std::pow(state.beta1, Scalar(state.step));
  const Scalar c2 = Scalar(1) - std::pow(state.beta2, Scalar(state.step));

  auto update = [&](auto& p, auto& m, auto& v, const auto& g) {
    if (p.rows() != g.rows() || p.cols() != g.cols()) throw ShapeError("adam_step: gradient shape mismatch");
    m = state.beta1 * m + (Scalar(1) - state.beta1) * g;
    v = state.beta2 * v + (Scalar(1) - state.beta2) * g.cwiseAbs2();
    p.array() -= state.lr * (m.array() / c1) / ((v.array() / c2).sqrt() + state.eps_hat);
  };
  for (std::size_t l = 0; l < params.weights.size(); ++l) {
    update(params.weights[l], state.first_moment.weights[l], state.second_moment.weights[l], grads.weights[l]);
    update(params.biases[l], state.first_moment.biases[l], state.second_moment.biases[l], grads.biases[l]);
  }
}

}  // namespace psm
