#pragma once

// Brute-force reference implementations used only by tests. They work on
// plain std::vector<double> with explicit index arithmetic and share no code
// with the library's Eigen-backed kernels.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

namespace oracle {

using Vec = std::vector<double>;

/// out[co][oy][ox] = sum over ci, i, j of x[ci][oy*s+i-p][ox*s+j-p] * k[co][ci][i][j].
inline Vec conv2d(const Vec& x, int c_in, int h, int w, const Vec& k, int c_out, int kh, int kw, int stride, int pad,
                  int& h_out, int& w_out) {
  h_out = (h + 2 * pad - kh) / stride + 1;
  w_out = (w + 2 * pad - kw) / stride + 1;
  Vec out(static_cast<std::size_t>(c_out) * h_out * w_out, 0.0);
  for (int co = 0; co < c_out; ++co)
    for (int oy = 0; oy < h_out; ++oy)
      for (int ox = 0; ox < w_out; ++ox) {
        double acc = 0;
        for (int ci = 0; ci < c_in; ++ci)
          for (int i = 0; i < kh; ++i)
            for (int j = 0; j < kw; ++j) {
              const int y = oy * stride + i - pad;
              const int xx = ox * stride + j - pad;
              if (y < 0 || y >= h || xx < 0 || xx >= w) continue;
              acc += x[(ci * h + y) * w + xx] * k[((co * c_in + ci) * kh + i) * kw + j];
            }
        out[(co * h_out + oy) * w_out + ox] = acc;
      }
  return out;
}

inline double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

/// Piecewise-linear relaxation of the Heaviside step whose slope is the rectangular surrogate.
inline double relaxed_spike(double u, double v_th, double width) {
  return std::clamp((u - v_th) / width + 0.5, 0.0, 1.0);
}

/// sigmoid(A (E x T) * X (T x D)) with explicit triple loop.
inline Vec eoi_mask(const Vec& b_hat, const Vec& x, int e, int t, int d) {
  Vec m(static_cast<std::size_t>(e) * d);
  for (int i = 0; i < e; ++i)
    for (int j = 0; j < d; ++j) {
      double acc = 0;
      for (int k = 0; k < t; ++k) acc += b_hat[i * t + k] * x[k * d + j];
      m[i * d + j] = sigmoid(acc);
    }
  return m;
}

/// x_hat[t][j] = sum_e m[e][j] * x[t][j].
inline Vec reconstruct(const Vec& m, const Vec& x, int e, int t, int d) {
  Vec out(static_cast<std::size_t>(t) * d, 0.0);
  for (int k = 0; k < t; ++k)
    for (int i = 0; i < e; ++i)
      for (int j = 0; j < d; ++j) out[k * d + j] += m[i * d + j] * x[k * d + j];
  return out;
}

inline Vec exhaustive_max(const Vec& x, int t, int d) {
  Vec s(t);
  for (int k = 0; k < t; ++k) {
    double best = x[k * d];
    for (int j = 1; j < d; ++j)
      if (x[k * d + j] > best) best = x[k * d + j];
    s[k] = best;
  }
  return s;
}

/// P(lo <= N <= hi) for N ~ Poisson(mean), by direct summation of the pmf.
inline double poisson_interval(double mean, int lo, int hi) {
  double p = std::exp(-mean);  // pmf(0)
  double total = 0;
  for (int n = 0; n <= hi; ++n) {
    if (n >= lo) total += p;
    p *= mean / (n + 1);
  }
  return total;
}

inline Vec random_vec(std::size_t n, std::mt19937_64& rng, double lo = -1, double hi = 1) {
  std::uniform_real_distribution<double> d(lo, hi);
  Vec v(n);
  for (auto& x : v) x = d(rng);
  return v;
}

}  // namespace oracle
