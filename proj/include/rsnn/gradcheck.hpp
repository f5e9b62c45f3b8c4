#pragma once

#include <algorithm>
#include <cmath>
#include <functional>

#include "rsnn/autograd.hpp"

namespace rsnn {

template <typename Scalar>
struct GradCheck {
  Scalar max_rel_error = 0;
  Tensor<Scalar> numeric;   // central differences
  Tensor<Scalar> analytic;  // tape gradient
};

/// Compares the tape gradient of `f` at `x` against central differences
///   (f(x + eps e_i) - f(x - eps e_i)) / (2 eps).
/// Relative error per coordinate is |g - n| / max(|g|, |n|, floor).
template <typename Scalar>
GradCheck<Scalar> finite_difference_check(const std::function<Var<Scalar>(Tape<Scalar>&, const Var<Scalar>&)>& f,
                                          const Tensor<Scalar>& x, Scalar eps, Scalar floor = Scalar(1e-6)) {
  if (!(eps > 0)) throw std::invalid_argument("finite_difference_check: eps must be positive");
  auto value_at = [&f](const Tensor<Scalar>& at) {
    Tape<Scalar> tape;
    const Var<Scalar> y = f(tape, tape.constant(at));
    if (y.value().size() != 1) throw std::invalid_argument("finite_difference_check: f must be scalar");
    return y.value()[0];
  };

  GradCheck<Scalar> out{Scalar(0), Tensor<Scalar>(x.shape()), Tensor<Scalar>(x.shape())};
  {
    Tape<Scalar> tape;
    const Var<Scalar> xv = tape.leaf(x, true);
    out.analytic = backward(f(tape, xv))[xv];
  }
  Tensor<Scalar> probe = x;
  for (Index i = 0; i < x.size(); ++i) {
    const Scalar orig = probe[i];
    probe[i] = orig + eps;
    const Scalar up = value_at(probe);
    probe[i] = orig - eps;
    const Scalar down = value_at(probe);
    probe[i] = orig;
    out.numeric[i] = (up - down) / (Scalar(2) * eps);
    const Scalar g = out.analytic[i], n = out.numeric[i];
    const Scalar denom = std::max({std::abs(g), std::abs(n), floor});
    out.max_rel_error = std::max(out.max_rel_error, std::abs(g - n) / denom);
  }
  return out;
}

}  // namespace rsnn
