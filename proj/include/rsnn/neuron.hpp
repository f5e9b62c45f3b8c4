#pragma once

#include <cmath>
#include <stdexcept>
#include <string>

#include "rsnn/autograd.hpp"

namespace rsnn {

enum class ResetMode {
  kHardReset,  // leak = lambda * (1 - o_prev): decay while silent, wipe after a spike
  kLiteralH,   // leak = tau * exp(-o_prev / tau)
};

template <typename Scalar>
struct NeuronParams {
  Scalar v_th = Scalar(0.3);
  Scalar leak = Scalar(0.3);
  ResetMode reset_mode = ResetMode::kHardReset;
  Scalar tau = Scalar(0.3);
  Scalar surrogate_width = Scalar(1);

  void validate() const {
    if (!(leak > 0 && leak < 1)) throw std::invalid_argument("neuron: leak must lie in (0, 1)");
    if (!(v_th > 0)) throw std::invalid_argument("neuron: v_th must be positive");
    if (!(tau > 0)) throw std::invalid_argument("neuron: tau must be positive");
    if (!(surrogate_width > 0)) throw std::invalid_argument("neuron: surrogate width must be positive");
  }
};

/// Membrane potential and last emitted spikes of one layer.
template <typename Scalar>
struct NeuronState {
  Var<Scalar> u;
  Tensor<Scalar> o_prev;
};

/// Fresh state (u = 0, no prior spikes) registered on `tape`.
template <typename Scalar>
NeuronState<Scalar> initial_state(Tape<Scalar>& tape, const Shape& shape) {
  return {tape.constant(Tensor<Scalar>::zeros(shape)), Tensor<Scalar>::zeros(shape)};
}

/// Temporal memory retention given the previous spikes.
template <typename Scalar>
Tensor<Scalar> leak_factor(const Tensor<Scalar>& o_prev, const NeuronParams<Scalar>& params) {
  if (params.reset_mode == ResetMode::kHardReset)
    return Tensor<Scalar>(o_prev.shape(), params.leak * (Scalar(1) - o_prev.array()));
  return Tensor<Scalar>(o_prev.shape(), params.tau * (-o_prev.array() / params.tau).exp());
}

namespace detail {

// u_new = u * leak(o_prev) + a. The reset path is treated as a constant for
// differentiation; gradients reach earlier timesteps through u only.
template <typename Scalar>
Var<Scalar> integrate(const NeuronState<Scalar>& state, const Var<Scalar>& a, const NeuronParams<Scalar>& params) {
  if (!(a.shape() == state.u.shape()))
    throw std::invalid_argument("neuron step: input " + a.shape().to_string() + " vs state " +
                                state.u.shape().to_string());
  Tape<Scalar>& tape = a.tape();
  return add(mul(state.u, tape.constant(leak_factor(state.o_prev, params))), a);
}

}  // namespace detail

template <typename Scalar>
struct StepResult {
  NeuronState<Scalar> state;
  Var<Scalar> out;
};

/// One LIF update: integrate, then fire binary spikes through the surrogate.
template <typename Scalar>
StepResult<Scalar> lif_step(const NeuronState<Scalar>& state, const Var<Scalar>& a, const NeuronParams<Scalar>& params) {
  Var<Scalar> u = detail::integrate(state, a, params);
  Var<Scalar> o = spike(u, params.v_th, params.surrogate_width);
  return {{u, o.value()}, o};
}

/// One LIAF update: same membrane dynamics, analog ReLU output.
template <typename Scalar>
StepResult<Scalar> liaf_step(const NeuronState<Scalar>& state, const Var<Scalar>& a, const NeuronParams<Scalar>& params) {
  Var<Scalar> u = detail::integrate(state, a, params);
  return {{u, spike_forward(u.value(), params.v_th)}, relu(u)};
}

}  // namespace rsnn
