#pragma once

// Temporal event pruning: learnable global temporal embeddings score every
// timestep of a layer input, reconstruct the features through
// events-of-interest masks, and at inference zero out low-scoring frames.

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "rsnn/autograd.hpp"

namespace rsnn {

enum class Mode { kTrain, kInfer };

/// Learnable parameters of one pruning site.
template <typename Scalar>
struct EmbeddingBank {
  Tensor<Scalar> embeddings;  // (E, T)
  Tensor<Scalar> kernel;      // (k,) temporal weighting kernel

  Index count() const { return embeddings.shape()[0]; }
  Index steps() const { return embeddings.shape()[1]; }

  /// Embeddings uniform in [-1/sqrt(T), 1/sqrt(T)], kernel set to the k-tap average.
  template <typename Rng>
  static EmbeddingBank init(Index e, Index t, Rng& rng, Index k = 3) {
    if (e < 1 || t < 1) throw std::invalid_argument("EmbeddingBank: E and T must be positive");
    const double bound = 1.0 / std::sqrt(static_cast<double>(t));
    std::uniform_real_distribution<double> dist(-bound, bound);
    EmbeddingBank bank{Tensor<Scalar>(Shape{e, t}), Tensor<Scalar>::constant(Shape{k}, Scalar(1) / Scalar(k))};
    for (Index i = 0; i < bank.embeddings.size(); ++i) bank.embeddings[i] = static_cast<Scalar>(dist(rng));
    return bank;
  }
};

/// Tape handles for an EmbeddingBank during one pass.
template <typename Scalar>
struct BankVars {
  Var<Scalar> embeddings;
  Var<Scalar> kernel;
};

/// Per-timestep importance scores and the resulting keep mask.
struct PruneDecision {
  std::vector<double> scores;
  std::vector<int> keep;
  double s_th = 0;

  Index kept() const { return std::count(keep.begin(), keep.end(), 1); }
};

/// Softmax over time of the temporally convolved per-frame mean activity.
template <typename Scalar>
Var<Scalar> temporal_importance(const Var<Scalar>& x, const BankVars<Scalar>& bank) {
  if (x.shape().rank() < 1 || x.shape()[0] != bank.embeddings.shape()[1])
    throw std::invalid_argument("temporal_importance: input " + x.shape().to_string() + " vs embeddings " +
                                bank.embeddings.shape().to_string());
  return softmax(temporal_conv(mean_trailing(x), bank.kernel), 0);
}

/// b_hat[e, t] = w[t] * B[e, t].
template <typename Scalar>
Var<Scalar> weight_embeddings(const Var<Scalar>& embeddings, const Var<Scalar>& w) {
  return mul(embeddings, w);
}

/// sigmoid(b_hat (E, T) x x_flat (T, C*H*W)).
template <typename Scalar>
Var<Scalar> eoi_mask(const Var<Scalar>& b_hat, const Var<Scalar>& x) {
  const Index t = x.shape()[0];
  const Index width = x.value().size() / std::max<Index>(t, 1);
  if (b_hat.shape().rank() != 2 || b_hat.shape()[1] != t)
    throw std::invalid_argument("eoi_mask: weighted embeddings " + b_hat.shape().to_string() + " vs input " +
                                x.shape().to_string());
  return sigmoid(matmul(b_hat, reshape(x, Shape{t, width})));
}

/// x_hat[t, :] = sum_e m[e, :] * x_flat[t, :], reshaped to x's shape.
template <typename Scalar>
Var<Scalar> reconstruct(const Var<Scalar>& m, const Var<Scalar>& x) {
  const Index t = x.shape()[0];
  const Index width = x.value().size() / std::max<Index>(t, 1);
  if (m.shape().rank() != 2 || m.shape()[1] != width)
    throw std::invalid_argument("reconstruct: mask " + m.shape().to_string() + " vs input " + x.shape().to_string());
  return reshape(mul(reshape(x, Shape{t, width}), sum_leading(m)), x.shape());
}

/// Max over every non-temporal axis.
template <typename Scalar>
Tensor<Scalar> importance_scores(const Tensor<Scalar>& x_hat) {
  const Index t = x_hat.shape()[0];
  Tensor<Scalar> s(Shape{t});
  s.array() = detail::rows(x_hat, t).rowwise().maxCoeff();
  return s;
}

/// Keeps timestep t iff its min-max normalized score reaches s_th; constant scores keep everything.
template <typename Scalar>
Tensor<Scalar> prune_mask(const Tensor<Scalar>& s, Scalar s_th) {
  if (!(s_th >= 0 && s_th <= 1)) throw std::invalid_argument("prune_mask: s_th must lie in [0, 1]");
  Tensor<Scalar> keep = Tensor<Scalar>::constant(s.shape(), Scalar(1));
  if (s.size() == 0) return keep;
  const Scalar lo = s.array().minCoeff();
  const Scalar hi = s.array().maxCoeff();
  if (!(hi > lo)) return keep;
  keep.array() = (((s.array() - lo) / (hi - lo)) >= s_th).template cast<Scalar>();
  return keep;
}

template <typename Scalar>
struct RazorOutput {
  Var<Scalar> out;
  PruneDecision decision;
};

/// Full pruning site. Train mode returns the soft reconstruction with every
/// frame kept; infer mode zeroes the frames rejected by prune_mask.
template <typename Scalar>
RazorOutput<Scalar> razor_forward(const Var<Scalar>& x, const BankVars<Scalar>& bank, Scalar s_th, Mode mode) {
  const Var<Scalar> w = temporal_importance(x, bank);
  const Var<Scalar> m = eoi_mask(weight_embeddings(bank.embeddings, w), x);
  const Var<Scalar> x_hat = reconstruct(m, x);
  const Tensor<Scalar> scores = importance_scores(x_hat.value());

  RazorOutput<Scalar> result{x_hat, {}};
  result.decision.s_th = static_cast<double>(s_th);
  result.decision.scores.assign(scores.data(), scores.data() + scores.size());
  if (mode == Mode::kTrain) {
    result.decision.keep.assign(scores.size(), 1);
    return result;
  }
  const Tensor<Scalar> keep = prune_mask(scores, s_th);
  result.decision.keep.resize(keep.size());
  for (Index t = 0; t < keep.size(); ++t) result.decision.keep[t] = keep[t] > 0 ? 1 : 0;
  if (keep.array().minCoeff() < 1) result.out = scale_rows(x_hat, x.tape().constant(keep));
  return result;
}

}  // namespace rsnn
