#pragma once

// Tape-based reverse-mode differentiation over dense tensors.
//
// A Tape owns every value produced during one forward pass. Ops are free
// functions taking and returning Var handles; each op appends one node whose
// backward rule scatters the incoming adjoint into its parents. Nodes are
// appended after their inputs, so reverse insertion order is a valid reverse
// topological order.

#include <cmath>
#include <functional>
#include <limits>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "rsnn/tensor.hpp"

namespace rsnn {

template <typename Scalar>
class Tape;
template <typename Scalar>
class Gradients;

/// Handle to a node on a Tape. Cheap to copy; valid while the tape lives.
template <typename Scalar>
class Var {
 public:
  Var() = default;
  Var(Tape<Scalar>* tape, int id) : tape_(tape), id_(id) {}

  Tape<Scalar>& tape() const { return *tape_; }
  int id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

  const Tensor<Scalar>& value() const { return tape_->value(id_); }
  Shape shape() const { return value().shape(); }
  bool requires_grad() const { return tape_->requires_grad(id_); }

 private:
  Tape<Scalar>* tape_ = nullptr;
  int id_ = -1;
};

template <typename Scalar>
class Tape {
 public:
  using BackwardFn = std::function<void(const Tensor<Scalar>& grad_out, Gradients<Scalar>& grads)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var<Scalar> leaf(Tensor<Scalar> value, bool requires_grad = true) {
    check_finite(value, "leaf");
    nodes_.push_back({std::move(value), requires_grad, {}});
    return {this, static_cast<int>(nodes_.size()) - 1};
  }

  Var<Scalar> constant(Tensor<Scalar> value) { return leaf(std::move(value), false); }

  /// Appends an op result. The backward rule is kept only when some parent
  /// requires a gradient.
  Var<Scalar> record(Tensor<Scalar> value, std::initializer_list<Var<Scalar>> parents, BackwardFn backward,
                     const char* op) {
    check_finite(value, op);
    bool needs = false;
    for (const auto& p : parents) needs = needs || p.requires_grad();
    nodes_.push_back({std::move(value), needs, needs ? std::move(backward) : BackwardFn{}});
    return {this, static_cast<int>(nodes_.size()) - 1};
  }

  template <typename Range>
  Var<Scalar> record_many(Tensor<Scalar> value, const Range& parents, BackwardFn backward, const char* op) {
    check_finite(value, op);
    bool needs = false;
    for (const auto& p : parents) needs = needs || p.requires_grad();
    nodes_.push_back({std::move(value), needs, needs ? std::move(backward) : BackwardFn{}});
    return {this, static_cast<int>(nodes_.size()) - 1};
  }

  const Tensor<Scalar>& value(int id) const { return nodes_[id].value; }
  bool requires_grad(int id) const { return nodes_[id].requires_grad; }
  const BackwardFn& backward_fn(int id) const { return nodes_[id].backward; }
  int size() const { return static_cast<int>(nodes_.size()); }

 private:
  struct Node {
    Tensor<Scalar> value;
    bool requires_grad;
    BackwardFn backward;
  };

  static void check_finite(const Tensor<Scalar>& t, const char* op) {
    if (!t.all_finite()) throw std::domain_error(std::string("non-finite value produced by ") + op);
  }

  std::vector<Node> nodes_;
};

/// Adjoints for every node of one tape, filled by backward().
template <typename Scalar>
class Gradients {
 public:
  explicit Gradients(const Tape<Scalar>& tape)
      : tape_(&tape), grads_(tape.size()), present_(tape.size(), false) {}

  template <typename Derived>
  void accumulate(const Var<Scalar>& v, const Eigen::ArrayBase<Derived>& g) {
    const int id = v.id();
    if (!tape_->requires_grad(id)) return;
    if (!present_[id]) {
      grads_[id] = Tensor<Scalar>(tape_->value(id).shape(), g);
      present_[id] = true;
    } else {
      grads_[id].array() += g;
    }
  }

  /// Adds `g` into the contiguous range [offset, offset + g.size()) of v's adjoint.
  template <typename Derived>
  void accumulate_segment(const Var<Scalar>& v, Index offset, const Eigen::ArrayBase<Derived>& g) {
    const int id = v.id();
    if (!tape_->requires_grad(id)) return;
    if (!present_[id]) {
      grads_[id] = Tensor<Scalar>::zeros(tape_->value(id).shape());
      present_[id] = true;
    }
    grads_[id].array().segment(offset, g.size()) += g;
  }

  /// Gradient with respect to `v`; zeros when `v` did not influence the loss.
  Tensor<Scalar> operator[](const Var<Scalar>& v) const {
    if (present_[v.id()]) return grads_[v.id()];
    return Tensor<Scalar>::zeros(tape_->value(v.id()).shape());
  }

  bool has(int id) const { return present_[id]; }
  const Tensor<Scalar>& raw(int id) const { return grads_[id]; }

 private:
  const Tape<Scalar>* tape_;
  std::vector<Tensor<Scalar>> grads_;
  std::vector<bool> present_;
};

/// Reverse sweep from a scalar loss.
template <typename Scalar>
Gradients<Scalar> backward(const Var<Scalar>& loss) {
  if (loss.value().size() != 1)
    throw std::invalid_argument("backward: loss must be scalar, got shape " + loss.shape().to_string());
  const Tape<Scalar>& tape = loss.tape();
  Gradients<Scalar> grads(tape);
  grads.accumulate(loss, Tensor<Scalar>::Array::Ones(1));
  for (int id = loss.id(); id >= 0; --id) {
    if (!grads.has(id)) continue;
    const auto& fn = tape.backward_fn(id);
    if (fn) fn(grads.raw(id), grads);
  }
  return grads;
}

namespace detail {

template <typename Scalar>
using ArrayMap = Eigen::Map<const Eigen::Array<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

// Number of times `small` tiles along the leading axes of `big`.
inline Index leading_repeats(const Shape& big, const Shape& small, const char* op) {
  const int lead = big.rank() - small.rank();
  bool ok = lead >= 0;
  for (int i = 0; ok && i < small.rank(); ++i) ok = big[lead + i] == small[i];
  if (!ok)
    throw std::invalid_argument(std::string(op) + ": cannot broadcast " + small.to_string() + " onto " +
                                big.to_string());
  return big.numel() / std::max<Index>(small.numel(), 1);
}

template <typename Scalar>
ArrayMap<Scalar> rows(const Tensor<Scalar>& t, Index r) {
  return ArrayMap<Scalar>(t.data(), r, r == 0 ? 0 : t.size() / r);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Spike nonlinearity with rectangular surrogate.

template <typename Scalar>
Tensor<Scalar> spike_forward(const Tensor<Scalar>& u, Scalar v_th) {
  return Tensor<Scalar>(u.shape(), (u.array() >= v_th).template cast<Scalar>());
}

template <typename Scalar>
Tensor<Scalar> spike_backward(const Tensor<Scalar>& grad_out, const Tensor<Scalar>& u, Scalar v_th, Scalar width) {
  if (!(width > 0)) throw std::invalid_argument("spike_backward: width must be positive");
  const auto inside = ((u.array() - v_th).abs() < width / 2).template cast<Scalar>();
  return Tensor<Scalar>(u.shape(), grad_out.array() * inside / width);
}

template <typename Scalar>
Var<Scalar> spike(const Var<Scalar>& u, Scalar v_th, Scalar width = Scalar(1)) {
  return u.tape().record(
      spike_forward(u.value(), v_th), {u},
      [u, v_th, width](const Tensor<Scalar>& g, Gradients<Scalar>& grads) {
        grads.accumulate(u, spike_backward(g, u.value(), v_th, width).array());
      },
      "spike");
}

// ---------------------------------------------------------------------------
// Elementwise.

template <typename Scalar>
Var<Scalar> sigmoid(const Var<Scalar>& x) {
  Tensor<Scalar> y(x.shape(), Scalar(1) / (Scalar(1) + (-x.value().array()).exp()));
  Tape<Scalar>& tape = x.tape();
  const int out = tape.size();
  return tape.record(
      std::move(y), {x},
      [x, &tape, out](const Tensor<Scalar>& g, Gradients<Scalar>& grads) {
        const auto& y = tape.value(out).array();
        grads.accumulate(x, g.array() * y * (Scalar(1) - y));
      },
      "sigmoid");
}

template <typename Scalar>
Var<Scalar> relu(const Var<Scalar>& x) {
  return x.tape().record(
      Tensor<Scalar>(x.shape(), x.value().array().max(Scalar(0))), {x},
      [x](const Tensor<Scalar>& g, Gradients<Scalar>& grads) {
        grads.accumulate(x, g.array() * (x.value().array() > Scalar(0)).template cast<Scalar>());
      },
      "relu");
}

template <typename Scalar>
Var<Scalar> scale(const Var<Scalar>& x, Scalar s) {
  return x.tape().record(
      Tensor<Scalar>(x.shape(), x.value().array() * s), {x},
      [x, s](const Tensor<Scalar>& g, Gradients<Scalar>& grads) { grads.accumulate(x, g.array() * s); }, "scale");
}

/// a + b, where b equals a's shape or its trailing axes.
template <typename Scalar>
Var<Scalar> add(const Var<Scalar>& a, const Var<Scalar>& b) {
  const Index reps = detail::leading_repeats(a.shape(), b.shape(), "add");
  const Index n = b.value().size();
  Tensor<Scalar> y(a.shape());
  for (Index r = 0; r < reps; ++r) y.array().segment(r * n, n) = a.value().array().segment(r * n, n) + b.value().array();
  return a.tape().record(
      std::move(y), {a, b},
      [a, b, reps](const Tensor<Scalar>& g, Gradients<Scalar>& grads) {
        grads.accumulate(a, g.array());
        if (b.requires_grad()) grads.accumulate(b, detail::rows(g, reps).colwise().sum().transpose());
      },
      "add");
}

template <typename Scalar>
Var<Scalar> sub(const Var<Scalar>& a, const Var<Scalar>& b) {
  return add(a, scale(b, Scalar(-1)));
}

/// a * b elementwise, where b equals a's shape or its trailing axes.
template <typename Scalar>
Var<Scalar> mul(const Var<Scalar>& a, const Var<Scalar>& b) {
  const Index reps = detail::leading_repeats(a.shape(), b.shape(), "mul");
  const Index n = b.value().size();
  Tensor<Scalar> y(a.shape());
  for (Index r = 0; r < reps; ++r) y.array().segment(r * n, n) = a.value().array().segment(r * n, n) * b.value().array();
  return a.tape().record(
      std::move(y), {a, b},
      [a, b, reps, n](const Tensor<Scalar>& g, Gradients<Scalar>& grads) {
        if (a.requires_grad()) {
          typename Tensor<Scalar>::Array ga(g.size());
          for (Index r = 0; r < reps; ++r) ga.segment(r * n, n) = g.array().segment(r * n, n) * b.value().array();
          grads.accumulate(a, ga);
        }
        if (b.requires_grad()) {
          auto prod = (detail::rows(g, reps) * detail::rows(a.value(), reps)).eval();
          grads.accumulate(b, prod.colwise().sum().transpose());
        }
      },
      "mul");
}

template <typename Scalar>
Var<Scalar> operator+(const Var<Scalar>& a, const Var<Scalar>& b) { return add(a, b); }
template <typename Scalar>
Var<Scalar> operator-(const Var<Scalar>& a, const Var<Scalar>& b) { return sub(a, b); }
template <typename Scalar>
Var<Scalar> operator*(const Var<Scalar>& a, const Var<Scalar>& b) { return mul(a, b); }

/// x[t, ...] * v[t]: scales each leading-axis slice of x by one entry of v.
template <typename Scalar>
Var<Scalar> scale_rows(const Var<Scalar>& x, const Var<Scalar>& v) {
  const Index t = x.shape().rank() > 0 ? x.shape()[0] : 0;
  if (v.shape().rank() != 1 || v.shape()[0] != t)
    throw std::invalid_argument("scale_rows: " + v.shape().to_string() + " does not match leading axis of " +
                                x.shape().to_string());
  const Index n = t == 0 ? 0 : x.value().size() / t;
  Tensor<Scalar> y(x.shape());
  for (Index r = 0; r < t; ++r) y.array().segment(r * n, n) = x.value().array().segment(r * n, n) * v.value()[r];
  return x.tape().record(
      std::move(y), {x, v},
      [x, v, t, n](const Tensor<Scalar>& g, Gradients<Scalar>& grads) {
        if (x.requires_grad()) {
          typename Tensor<Scalar>::Array gx(g.size());
          for (Index r = 0; r < t; ++r) gx.segment(r * n, n) = g.array().segment(r * n, n) * v.value()[r];
          grads.accumulate(x, gx);
        }
        if (v.requires_grad()) {
          typename Tensor<Scalar>::Array gv(t);
          for (Index r = 0; r < t; ++r)
            gv[r] = (g.array().segment(r * n, n) * x.value().array().segment(r * n, n)).sum();
          grads.accumulate(v, gv);
        }
      },
      "scale_rows");
}

// ---------------------------------------------------------------------------
// Reductions and reshaping.

template <typename Scalar>
Var<Scalar> sum(const Var<Scalar>& x) {
  Tensor<Scalar> y(Shape{}, {x.value().array().sum()});
  return x.tape().record(
      std::move(y), {x},
      [x](const Tensor<Scalar>& g, Gradients<Scalar>& grads) {
        grads.accumulate(x, Tensor<Scalar>::Array::Constant(x.value().size(), g[0]));
      },
      "sum");
}

template <typename Scalar>
Var<Scalar> mean(const Var<Scalar>& x) {
  return scale(sum(x), Scalar(1) / static_cast<Scalar>(x.value().size()));
}

/// Sums over the leading axis: (N, ...) -> (...).
template <typename Scalar>
Var<Scalar> sum_leading(const Var<Scalar>& x) {
  const Index r = x.shape()[0];
  const Shape out_shape = x.shape().tail();
  Tensor<Scalar> y(out_shape, detail::rows(x.value(), r).colwise().sum().transpose());
  return x.tape().record(
      std::move(y), {x},
      [x, r](const Tensor<Scalar>& g, Gradients<Scalar>& grads) {
        grads.accumulate(x, g.array().replicate(r, 1));
      },
      "sum_leading");
}

/// Averages over every axis but the leading one: (T, ...) -> (T,).
template <typename Scalar>
Var<Scalar> mean_trailing(const Var<Scalar>& x) {
  const Index t = x.shape()[0];
  const Index n = x.value().size() / std::max<Index>(t, 1);
  Tensor<Scalar> y(Shape{t}, detail::rows(x.value(), t).rowwise().mean());
  return x.tape().record(
      std::move(y), {x},
      [x, t, n](const Tensor<Scalar>& g, Gradients<Scalar>& grads) {
        typename Tensor<Scalar>::Array gx(t * n);
        for (Index r = 0; r < t; ++r) gx.segment(r * n, n).setConstant(g[r] / static_cast<Scalar>(n));
        grads.accumulate(x, gx);
      },
      "mean_trailing");
}

template <typename Scalar>
Var<Scalar> reshape(const Var<Scalar>& x, const Shape& shape) {
  return x.tape().record(
      x.value().reshaped(shape), {x},
      [x](const Tensor<Scalar>& g, Gradients<Scalar>& grads) { grads.accumulate(x, g.array()); }, "reshape");
}

/// Leading-axis slice i: (N, ...) -> (...).
template <typename Scalar>
Var<Scalar> select(const Var<Scalar>& x, Index i) {
  const Index n = x.value().size() / x.shape()[0];
  return x.tape().record(
      x.value().slice(i), {x},
      [x, i, n](const Tensor<Scalar>& g, Gradients<Scalar>& grads) { grads.accumulate_segment(x, i * n, g.array()); },
      "select");
}

/// Stacks equally shaped vars along a new leading axis.
template <typename Scalar>
Var<Scalar> stack(const std::vector<Var<Scalar>>& xs) {
  if (xs.empty()) throw std::invalid_argument("stack: empty input");
  const Shape item = xs.front().shape();
  const Index n = item.numel();
  Tensor<Scalar> y(item.prepend(static_cast<Index>(xs.size())));
  for (std::size_t k = 0; k < xs.size(); ++k) {
    if (!(xs[k].shape() == item))
      throw std::invalid_argument("stack: shape " + xs[k].shape().to_string() + " differs from " + item.to_string());
    y.array().segment(static_cast<Index>(k) * n, n) = xs[k].value().array();
  }
  return xs.front().tape().record_many(
      std::move(y), xs,
      [xs, n](const Tensor<Scalar>& g, Gradients<Scalar>& grads) {
        for (std::size_t k = 0; k < xs.size(); ++k) grads.accumulate(xs[k], g.array().segment(static_cast<Index>(k) * n, n));
      },
      "stack");
}

// ---------------------------------------------------------------------------
// Softmax along an arbitrary axis.

template <typename Scalar>
Tensor<Scalar> softmax_values(const Tensor<Scalar>& x, int axis) {
  const Shape& s = x.shape();
  if (axis < 0 || axis >= s.rank()) throw std::invalid_argument("softmax: axis out of range for " + s.to_string());
  Index outer = 1, inner = 1;
  for (int i = 0; i < axis; ++i) outer *= s[i];
  for (int i = axis + 1; i < s.rank(); ++i) inner *= s[i];
  const Index len = s[axis];
  Tensor<Scalar> y(s);
  for (Index o = 0; o < outer; ++o) {
    for (Index in = 0; in < inner; ++in) {
      const Index base = o * len * inner + in;
      Scalar mx = -std::numeric_limits<Scalar>::infinity();
      for (Index k = 0; k < len; ++k) mx = std::max(mx, x[base + k * inner]);
      Scalar z = 0;
      for (Index k = 0; k < len; ++k) z += (y[base + k * inner] = std::exp(x[base + k * inner] - mx));
      for (Index k = 0; k < len; ++k) y[base + k * inner] /= z;
    }
  }
  return y;
}

template <typename Scalar>
Var<Scalar> softmax(const Var<Scalar>& x, int axis) {
  Tape<Scalar>& tape = x.tape();
  const int out = tape.size();
  return tape.record(
      softmax_values(x.value(), axis), {x},
      [x, axis, &tape, out](const Tensor<Scalar>& g, Gradients<Scalar>& grads) {
        const Tensor<Scalar>& y = tape.value(out);
        const Shape& s = y.shape();
        Index outer = 1, inner = 1;
        for (int i = 0; i < axis; ++i) outer *= s[i];
        for (int i = axis + 1; i < s.rank(); ++i) inner *= s[i];
        const Index len = s[axis];
        typename Tensor<Scalar>::Array gx(y.size());
        for (Index o = 0; o < outer; ++o) {
          for (Index in = 0; in < inner; ++in) {
            const Index base = o * len * inner + in;
            Scalar dot = 0;
            for (Index k = 0; k < len; ++k) dot += g[base + k * inner] * y[base + k * inner];
            for (Index k = 0; k < len; ++k) gx[base + k * inner] = y[base + k * inner] * (g[base + k * inner] - dot);
          }
        }
        grads.accumulate(x, gx);
      },
      "softmax");
}

// ---------------------------------------------------------------------------
// Linear algebra.

/// (m, k) x (k, n) -> (m, n).
template <typename Scalar>
Var<Scalar> matmul(const Var<Scalar>& a, const Var<Scalar>& b) {
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  if (sa.rank() != 2 || sb.rank() != 2 || sa[1] != sb[0])
    throw std::invalid_argument("matmul: incompatible shapes " + sa.to_string() + " and " + sb.to_string());
  const Index m = sa[0], k = sa[1], n = sb[1];
  Tensor<Scalar> y(Shape{m, n});
  y.matrix(m, n).noalias() = a.value().matrix(m, k) * b.value().matrix(k, n);
  return a.tape().record(
      std::move(y), {a, b},
      [a, b, m, k, n](const Tensor<Scalar>& g, Gradients<Scalar>& grads) {
        const auto gm = g.matrix(m, n);
        if (a.requires_grad()) {
          Tensor<Scalar> ga(Shape{m, k});
          ga.matrix(m, k).noalias() = gm * b.value().matrix(k, n).transpose();
          grads.accumulate(a, ga.array());
        }
        if (b.requires_grad()) {
          Tensor<Scalar> gb(Shape{k, n});
          gb.matrix(k, n).noalias() = a.value().matrix(m, k).transpose() * gm;
          grads.accumulate(b, gb.array());
        }
      },
      "matmul");
}

/// Fully connected map without bias: weight (out, in) applied to x flattened to (in,).
template <typename Scalar>
Var<Scalar> linear(const Var<Scalar>& weight, const Var<Scalar>& x) {
  const Index in = x.value().size();
  const Index out = weight.shape()[0];
  return reshape(matmul(weight, reshape(x, Shape{in, 1})), Shape{out});
}

struct Conv2dGeometry {
  Index c_in, h, w, c_out, kh, kw, stride, pad, h_out, w_out;

  Index macs() const { return c_out * c_in * kh * kw * h_out * w_out; }
};

inline Conv2dGeometry conv2d_geometry(const Shape& x, const Shape& k, Index stride, Index pad) {
  if (x.rank() != 3 || k.rank() != 4 || x[0] != k[1] || stride < 1 || pad < 0)
    throw std::invalid_argument("conv2d: input " + x.to_string() + " incompatible with kernel " + k.to_string());
  Conv2dGeometry g{x[0], x[1], x[2], k[0], k[2], k[3], stride, pad, 0, 0};
  g.h_out = (g.h + 2 * pad - g.kh) / stride + 1;
  g.w_out = (g.w + 2 * pad - g.kw) / stride + 1;
  if (g.h_out <= 0 || g.w_out <= 0)
    throw std::invalid_argument("conv2d: kernel " + k.to_string() + " larger than padded input " + x.to_string());
  return g;
}

namespace detail {

// Unfolds x (C, H, W) into columns (C*kh*kw, h_out*w_out).
template <typename Scalar>
typename Tensor<Scalar>::RowMatrix im2col(const Tensor<Scalar>& x, const Conv2dGeometry& g) {
  typename Tensor<Scalar>::RowMatrix cols = Tensor<Scalar>::RowMatrix::Zero(g.c_in * g.kh * g.kw, g.h_out * g.w_out);
  for (Index c = 0; c < g.c_in; ++c)
    for (Index i = 0; i < g.kh; ++i)
      for (Index j = 0; j < g.kw; ++j) {
        const Index row = (c * g.kh + i) * g.kw + j;
        for (Index oy = 0; oy < g.h_out; ++oy) {
          const Index y = oy * g.stride + i - g.pad;
          if (y < 0 || y >= g.h) continue;
          for (Index ox = 0; ox < g.w_out; ++ox) {
            const Index xx = ox * g.stride + j - g.pad;
            if (xx < 0 || xx >= g.w) continue;
            cols(row, oy * g.w_out + ox) = x[(c * g.h + y) * g.w + xx];
          }
        }
      }
  return cols;
}

template <typename Scalar>
typename Tensor<Scalar>::Array col2im(const typename Tensor<Scalar>::RowMatrix& cols, const Conv2dGeometry& g) {
  typename Tensor<Scalar>::Array x = Tensor<Scalar>::Array::Zero(g.c_in * g.h * g.w);
  for (Index c = 0; c < g.c_in; ++c)
    for (Index i = 0; i < g.kh; ++i)
      for (Index j = 0; j < g.kw; ++j) {
        const Index row = (c * g.kh + i) * g.kw + j;
        for (Index oy = 0; oy < g.h_out; ++oy) {
          const Index y = oy * g.stride + i - g.pad;
          if (y < 0 || y >= g.h) continue;
          for (Index ox = 0; ox < g.w_out; ++ox) {
            const Index xx = ox * g.stride + j - g.pad;
            if (xx < 0 || xx >= g.w) continue;
            x[(c * g.h + y) * g.w + xx] += cols(row, oy * g.w_out + ox);
          }
        }
      }
  return x;
}

}  // namespace detail

/// Cross-correlation of x (C_in, H, W) with kernel (C_out, C_in, kh, kw).
template <typename Scalar>
Var<Scalar> conv2d(const Var<Scalar>& x, const Var<Scalar>& kernel, Index stride = 1, Index pad = 0) {
  const Conv2dGeometry geo = conv2d_geometry(x.shape(), kernel.shape(), stride, pad);
  const Index patch = geo.c_in * geo.kh * geo.kw;
  const Index pixels = geo.h_out * geo.w_out;
  Tensor<Scalar> y(Shape{geo.c_out, geo.h_out, geo.w_out});
  y.matrix(geo.c_out, pixels).noalias() = kernel.value().matrix(geo.c_out, patch) * detail::im2col(x.value(), geo);
  return x.tape().record(
      std::move(y), {x, kernel},
      [x, kernel, geo, patch, pixels](const Tensor<Scalar>& g, Gradients<Scalar>& grads) {
        const auto gm = g.matrix(geo.c_out, pixels);
        if (kernel.requires_grad()) {
          Tensor<Scalar> gk(kernel.shape());
          gk.matrix(geo.c_out, patch).noalias() = gm * detail::im2col(x.value(), geo).transpose();
          grads.accumulate(kernel, gk.array());
        }
        if (x.requires_grad()) {
          typename Tensor<Scalar>::RowMatrix gcols = kernel.value().matrix(geo.c_out, patch).transpose() * gm;
          grads.accumulate(x, detail::col2im<Scalar>(gcols, geo));
        }
      },
      "conv2d");
}

/// Non-overlapping p x p average pooling of x (C, H, W); trailing rows/cols that do not fill a window are dropped.
template <typename Scalar>
Var<Scalar> avg_pool2d(const Var<Scalar>& x, Index p) {
  const Shape& s = x.shape();
  if (s.rank() != 3 || p < 1 || s[1] < p || s[2] < p)
    throw std::invalid_argument("avg_pool2d: window " + std::to_string(p) + " on " + s.to_string());
  const Index c = s[0], h = s[1], w = s[2], ho = h / p, wo = w / p;
  const Scalar inv = Scalar(1) / static_cast<Scalar>(p * p);
  Tensor<Scalar> y(Shape{c, ho, wo});
  for (Index ch = 0; ch < c; ++ch)
    for (Index i = 0; i < ho * p; ++i)
      for (Index j = 0; j < wo * p; ++j) y.at(ch, i / p, j / p) += x.value().at(ch, i, j) * inv;
  return x.tape().record(
      std::move(y), {x},
      [x, c, ho, wo, p, inv](const Tensor<Scalar>& g, Gradients<Scalar>& grads) {
        Tensor<Scalar> gx(x.shape());
        for (Index ch = 0; ch < c; ++ch)
          for (Index i = 0; i < ho * p; ++i)
            for (Index j = 0; j < wo * p; ++j) gx.at(ch, i, j) = g.at(ch, i / p, j / p) * inv;
        grads.accumulate(x, gx.array());
      },
      "avg_pool2d");
}

/// 1-D correlation of signal (T,) with an odd-length kernel (k,), edge-replicated so the output keeps length T.
template <typename Scalar>
Var<Scalar> temporal_conv(const Var<Scalar>& signal, const Var<Scalar>& kernel) {
  const Index t = signal.shape()[0];
  const Index k = kernel.shape()[0];
  if (signal.shape().rank() != 1 || kernel.shape().rank() != 1 || k % 2 == 0)
    throw std::invalid_argument("temporal_conv: signal " + signal.shape().to_string() + ", kernel " +
                                kernel.shape().to_string());
  const Index r = k / 2;
  auto src = [t](Index i) { return std::clamp<Index>(i, 0, t - 1); };
  Tensor<Scalar> y(Shape{t});
  for (Index i = 0; i < t; ++i)
    for (Index j = 0; j < k; ++j) y[i] += kernel.value()[j] * signal.value()[src(i + j - r)];
  return signal.tape().record(
      std::move(y), {signal, kernel},
      [signal, kernel, t, k, r, src](const Tensor<Scalar>& g, Gradients<Scalar>& grads) {
        typename Tensor<Scalar>::Array gs = Tensor<Scalar>::Array::Zero(t);
        typename Tensor<Scalar>::Array gk = Tensor<Scalar>::Array::Zero(k);
        for (Index i = 0; i < t; ++i)
          for (Index j = 0; j < k; ++j) {
            gs[src(i + j - r)] += kernel.value()[j] * g[i];
            gk[j] += signal.value()[src(i + j - r)] * g[i];
          }
        grads.accumulate(signal, gs);
        grads.accumulate(kernel, gk);
      },
      "temporal_conv");
}

}  // namespace rsnn
