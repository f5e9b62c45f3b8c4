#pragma once

#include <random>
#include <vector>

#include "rsnn/tensor.hpp"

namespace rsnn::testing {

template <typename Scalar = double>
Tensor<Scalar> from_vec(const Shape& shape, const std::vector<double>& v) {
  Tensor<Scalar> t(shape);
  for (Index i = 0; i < t.size(); ++i) t[i] = static_cast<Scalar>(v[static_cast<std::size_t>(i)]);
  return t;
}

template <typename Scalar>
std::vector<double> to_vec(const Tensor<Scalar>& t) {
  return std::vector<double>(t.data(), t.data() + t.size());
}

template <typename Scalar = double>
Tensor<Scalar> random_tensor(const Shape& shape, std::mt19937_64& rng, double lo = -1, double hi = 1) {
  std::uniform_real_distribution<double> d(lo, hi);
  Tensor<Scalar> t(shape);
  for (Index i = 0; i < t.size(); ++i) t[i] = static_cast<Scalar>(d(rng));
  return t;
}

}  // namespace rsnn::testing
