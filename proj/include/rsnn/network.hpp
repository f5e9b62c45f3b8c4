#pragma once

// Razor SNN: a spiking encoder, razor-guarded spiking backbone, and an analog
// (LIAF) readout head, trained with a rate-coded MSE loss and Adam.
//
// The forward pass is layer-major: a layer consumes the whole (T, ...) output
// sequence of its predecessor, which is what a pruning site needs to score
// every timestep before the synaptic op runs. For a feed-forward stack this
// is equivalent to the time-major order.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <exception>
#include <random>
#include <stdexcept>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "rsnn/autograd.hpp"
#include "rsnn/events.hpp"
#include "rsnn/neuron.hpp"
#include "rsnn/razor.hpp"

namespace rsnn {

enum class LayerKind { kConv, kDense };
enum class LiafMode { kLastOnly, kAll };

/// Which layers carry a pruning site. The readout head never does.
enum class RazorPlacement { kNone, kEncoder, kBackbone, kAll };

struct LayerSpec {
  LayerKind kind = LayerKind::kConv;
  Index out = 8;
  Index kernel = 3;
  Index stride = 1;
  Index pool = 1;  // average pooling window applied after the convolution
};

struct NetworkConfig {
  Index channels = 2;
  Index height = 16;
  Index width = 16;
  Index steps = 16;
  Index num_classes = 2;
  // Hidden layers; a dense LIAF head of width num_classes is appended.
  std::vector<LayerSpec> layers = {
      {LayerKind::kConv, 8, 3, 1, 1},
      {LayerKind::kConv, 16, 3, 2, 1},
      {LayerKind::kDense, 32, 0, 1, 1},
  };
  NeuronParams<double> neuron;
  LiafMode liaf_mode = LiafMode::kLastOnly;
  RazorPlacement placement = RazorPlacement::kBackbone;
  Index embeddings = 4;
  Index weighting_kernel = 3;
  double s_th = 0.4;
  double init_gain = 1.0;
  std::uint64_t seed = 1;
};

/// Resolved geometry and parameter slots of one layer.
struct LayerPlan {
  LayerSpec spec;
  Shape in;   // per-timestep input shape
  Shape out;  // per-timestep output shape
  Index pad = 0;
  std::int64_t macs_per_step = 0;
  bool razor = false;
  bool liaf = false;
  int weight_param = -1;
  int embeddings_param = -1;
  int kernel_param = -1;
};

/// Named parameter tensors in a fixed order.
template <typename Scalar>
struct ParameterSet {
  std::vector<std::string> names;
  std::vector<Tensor<Scalar>> tensors;

  std::size_t size() const { return tensors.size(); }

  int index_of(const std::string& name) const {
    auto it = std::find(names.begin(), names.end(), name);
    return it == names.end() ? -1 : static_cast<int>(it - names.begin());
  }

  void add(std::string name, Tensor<Scalar> t) {
    names.push_back(std::move(name));
    tensors.push_back(std::move(t));
  }

  ParameterSet zeros_like() const {
    ParameterSet z;
    for (std::size_t i = 0; i < size(); ++i) z.add(names[i], Tensor<Scalar>::zeros(tensors[i].shape()));
    return z;
  }

  std::size_t numel() const {
    std::size_t n = 0;
    for (const auto& t : tensors) n += static_cast<std::size_t>(t.size());
    return n;
  }

  template <typename To>
  ParameterSet<To> cast() const {
    ParameterSet<To> out;
    for (std::size_t i = 0; i < size(); ++i) out.add(names[i], tensors[i].template cast<To>());
    return out;
  }
};

class Network {
 public:
  explicit Network(NetworkConfig cfg) : cfg_(std::move(cfg)) { build(); }

  const NetworkConfig& config() const { return cfg_; }
  const std::vector<LayerPlan>& layers() const { return plan_; }
  const std::vector<std::string>& parameter_names() const { return names_; }
  const std::vector<Shape>& parameter_shapes() const { return shapes_; }

  /// Indices of layers that carry a pruning site, in forward order.
  std::vector<int> razor_layers() const {
    std::vector<int> out;
    for (std::size_t i = 0; i < plan_.size(); ++i)
      if (plan_[i].razor) out.push_back(static_cast<int>(i));
    return out;
  }

  /// Synaptic MACs of a pass with every timestep kept.
  std::int64_t full_macs() const {
    std::int64_t n = 0;
    for (const auto& l : plan_) n += l.macs_per_step * cfg_.steps;
    return n;
  }

  template <typename Scalar>
  ParameterSet<Scalar> init_parameters(std::uint64_t seed) const {
    std::mt19937_64 rng(seed);
    ParameterSet<Scalar> params;
    for (std::size_t i = 0; i < plan_.size(); ++i) {
      const LayerPlan& l = plan_[i];
      const Shape& ws = shapes_[l.weight_param];
      const Index fan_in = ws.numel() / ws[0];
      const double bound = cfg_.init_gain * std::sqrt(3.0 / static_cast<double>(fan_in));
      std::uniform_real_distribution<double> dist(-bound, bound);
      Tensor<Scalar> w(ws);
      for (Index k = 0; k < w.size(); ++k) w[k] = static_cast<Scalar>(dist(rng));
      params.add(names_[l.weight_param], std::move(w));
      if (l.razor) {
        auto bank = EmbeddingBank<Scalar>::init(cfg_.embeddings, cfg_.steps, rng, cfg_.weighting_kernel);
        params.add(names_[l.embeddings_param], std::move(bank.embeddings));
        params.add(names_[l.kernel_param], std::move(bank.kernel));
      }
    }
    return params;
  }

  /// Throws naming the first tensor whose name or shape disagrees with this network.
  template <typename Scalar>
  void check_parameters(const ParameterSet<Scalar>& params) const {
    const std::size_t n = std::min(params.size(), names_.size());
    for (std::size_t i = 0; i < n; ++i) {
      if (params.names[i] != names_[i])
        throw std::invalid_argument("unexpected tensor '" + params.names[i] + "' (expected '" + names_[i] + "')");
      if (!(params.tensors[i].shape() == shapes_[i]))
        throw std::invalid_argument("tensor '" + names_[i] + "' has shape " + params.tensors[i].shape().to_string() +
                                    ", expected " + shapes_[i].to_string());
    }
    if (params.size() < names_.size()) throw std::invalid_argument("missing tensor '" + names_[n] + "'");
    if (params.size() > names_.size()) throw std::invalid_argument("unexpected tensor '" + params.names[n] + "'");
  }

 private:
  void build() {
    const NetworkConfig& c = cfg_;
    if (c.channels < 1 || c.height < 1 || c.width < 1) throw std::invalid_argument("network: empty input geometry");
    if (c.steps < 1) throw std::invalid_argument("network: steps must be positive");
    if (c.num_classes < 1) throw std::invalid_argument("network: num_classes must be positive");
    if (c.embeddings < 1) throw std::invalid_argument("network: embeddings must be positive");
    if (c.weighting_kernel < 1 || c.weighting_kernel % 2 == 0)
      throw std::invalid_argument("network: weighting kernel must be odd");
    if (!(c.s_th >= 0 && c.s_th <= 1)) throw std::invalid_argument("network: s_th must lie in [0, 1]");
    c.neuron.validate();

    std::vector<LayerSpec> specs = c.layers;
    specs.push_back({LayerKind::kDense, c.num_classes, 0, 1, 1});
    Shape in{c.channels, c.height, c.width};
    const int n = static_cast<int>(specs.size());
    for (int i = 0; i < n; ++i) {
      LayerPlan l;
      l.spec = specs[i];
      l.in = in;
      const std::string prefix = "layer" + std::to_string(i) + ".";
      if (l.spec.out < 1) throw std::invalid_argument("network: " + prefix + " width must be positive");
      if (l.spec.kind == LayerKind::kConv) {
        if (in.rank() != 3) throw std::invalid_argument("network: conv " + prefix + " after a dense layer");
        if (l.spec.kernel < 1 || l.spec.stride < 1 || l.spec.pool < 1)
          throw std::invalid_argument("network: invalid conv spec at " + prefix);
        l.pad = l.spec.kernel / 2;
        const Shape ks{l.spec.out, in[0], l.spec.kernel, l.spec.kernel};
        const Conv2dGeometry g = conv2d_geometry(in, ks, l.spec.stride, l.pad);
        l.macs_per_step = g.macs();
        if (l.spec.pool > g.h_out || l.spec.pool > g.w_out)
          throw std::invalid_argument("network: pool window too large at " + prefix);
        l.out = Shape{l.spec.out, g.h_out / l.spec.pool, g.w_out / l.spec.pool};
        add_param(prefix + "weight", ks, l.weight_param);
      } else {
        const Index fan_in = in.numel();
        l.macs_per_step = l.spec.out * fan_in;
        l.out = Shape{l.spec.out};
        add_param(prefix + "weight", Shape{l.spec.out, fan_in}, l.weight_param);
      }
      const bool head = i == n - 1;
      const bool encoder = i == 0;
      switch (c.placement) {
        case RazorPlacement::kNone: l.razor = false; break;
        case RazorPlacement::kEncoder: l.razor = encoder && !head; break;
        case RazorPlacement::kBackbone: l.razor = !encoder && !head; break;
        case RazorPlacement::kAll: l.razor = !head; break;
      }
      l.liaf = head || c.liaf_mode == LiafMode::kAll;
      if (l.razor) {
        add_param(prefix + "embeddings", Shape{c.embeddings, c.steps}, l.embeddings_param);
        add_param(prefix + "kernel", Shape{c.weighting_kernel}, l.kernel_param);
      }
      plan_.push_back(l);
      in = l.out;
    }
  }

  void add_param(std::string name, Shape shape, int& slot) {
    slot = static_cast<int>(names_.size());
    names_.push_back(std::move(name));
    shapes_.push_back(shape);
  }

  NetworkConfig cfg_;
  std::vector<LayerPlan> plan_;
  std::vector<std::string> names_;
  std::vector<Shape> shapes_;
};

template <typename Scalar>
struct ForwardPass {
  Var<Scalar> logits;                      // (num_classes,) temporal mean of head outputs
  std::vector<PruneDecision> decisions;    // one per razor layer
  std::vector<std::int64_t> layer_macs;    // executed synaptic MACs per layer
  std::int64_t macs = 0;
  std::int64_t spikes = 0;                 // binary spikes emitted by LIF layers
};

/// Registers every parameter as a tape leaf.
template <typename Scalar>
std::vector<Var<Scalar>> bind_parameters(Tape<Scalar>& tape, const ParameterSet<Scalar>& params, bool requires_grad) {
  std::vector<Var<Scalar>> vars;
  vars.reserve(params.size());
  for (const auto& t : params.tensors) vars.push_back(tape.leaf(t, requires_grad));
  return vars;
}

/// One pass over a (T, C, H, W) frame tensor. Pruned timesteps skip the synaptic op
/// (zero input, leak still applied) and contribute no MACs.
template <typename Scalar>
ForwardPass<Scalar> network_forward(Tape<Scalar>& tape, const Network& net, const std::vector<Var<Scalar>>& params,
                                    const Tensor<Scalar>& frames, Mode mode, Scalar s_th) {
  const NetworkConfig& cfg = net.config();
  const Shape expected = Shape{cfg.channels, cfg.height, cfg.width}.prepend(cfg.steps);
  if (!(frames.shape() == expected))
    throw std::invalid_argument("network_forward: frames " + frames.shape().to_string() + ", expected " +
                                expected.to_string());
  const NeuronParams<Scalar> np{static_cast<Scalar>(cfg.neuron.v_th), static_cast<Scalar>(cfg.neuron.leak),
                                cfg.neuron.reset_mode, static_cast<Scalar>(cfg.neuron.tau),
                                static_cast<Scalar>(cfg.neuron.surrogate_width)};
  const Index steps = cfg.steps;

  ForwardPass<Scalar> pass;
  Var<Scalar> x = tape.constant(frames);
  for (const LayerPlan& l : net.layers()) {
    std::vector<int> keep(steps, 1);
    if (l.razor) {
      const BankVars<Scalar> bank{params[l.embeddings_param], params[l.kernel_param]};
      RazorOutput<Scalar> r = razor_forward(x, bank, s_th, mode);
      x = r.out;
      keep = r.decision.keep;
      pass.decisions.push_back(std::move(r.decision));
    }
    const Var<Scalar>& w = params[l.weight_param];
    NeuronState<Scalar> state = initial_state(tape, l.out);
    std::vector<Var<Scalar>> outs;
    outs.reserve(steps);
    std::int64_t macs = 0;
    for (Index t = 0; t < steps; ++t) {
      Var<Scalar> a;
      if (keep[t]) {
        const Var<Scalar> xt = select(x, t);
        if (l.spec.kind == LayerKind::kConv) {
          a = conv2d(xt, w, l.spec.stride, l.pad);
          if (l.spec.pool > 1) a = avg_pool2d(a, l.spec.pool);
        } else {
          a = linear(w, xt);
        }
        macs += l.macs_per_step;
      } else {
        a = tape.constant(Tensor<Scalar>::zeros(l.out));
      }
      StepResult<Scalar> step = l.liaf ? liaf_step(state, a, np) : lif_step(state, a, np);
      if (!l.liaf) pass.spikes += static_cast<std::int64_t>(step.out.value().array().sum());
      outs.push_back(step.out);
      state = std::move(step.state);
    }
    pass.layer_macs.push_back(macs);
    pass.macs += macs;
    x = stack(outs);
  }
  pass.logits = scale(sum_leading(x), Scalar(1) / static_cast<Scalar>(steps));
  return pass;
}

/// Mean squared error between rate-coded logits and the one-hot target.
template <typename Scalar>
Var<Scalar> rate_loss(const Var<Scalar>& logits, Index label) {
  const Index n = logits.value().size();
  if (label < 0 || label >= n)
    throw std::out_of_range("rate_loss: label " + std::to_string(label) + " outside [0, " + std::to_string(n) + ")");
  Tensor<Scalar> target(logits.shape());
  target[label] = Scalar(1);
  const Var<Scalar> diff = sub(logits, logits.tape().constant(std::move(target)));
  return mean(mul(diff, diff));
}

template <typename Scalar>
Index argmax(const Tensor<Scalar>& t) {
  Index best = 0;
  t.array().maxCoeff(&best);
  return best;
}

template <typename Scalar>
struct SampleGradient {
  Scalar loss = 0;
  Index prediction = 0;
  ParameterSet<Scalar> grads;
};

/// Train-mode forward and backward for one sample.
template <typename Scalar>
SampleGradient<Scalar> sample_gradient(const Network& net, const ParameterSet<Scalar>& params,
                                       const Tensor<Scalar>& frames, Index label) {
  Tape<Scalar> tape;
  const auto vars = bind_parameters(tape, params, true);
  const ForwardPass<Scalar> pass =
      network_forward(tape, net, vars, frames, Mode::kTrain, static_cast<Scalar>(net.config().s_th));
  const Var<Scalar> loss = rate_loss(pass.logits, label);
  const Gradients<Scalar> grads = backward(loss);
  SampleGradient<Scalar> out;
  out.loss = loss.value()[0];
  out.prediction = argmax(pass.logits.value());
  for (std::size_t i = 0; i < vars.size(); ++i) out.grads.add(params.names[i], grads[vars[i]]);
  return out;
}

// ---------------------------------------------------------------------------
// Optimization.

struct AdamOptions {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

template <typename Scalar>
struct TrainState {
  ParameterSet<Scalar> params;
  ParameterSet<Scalar> m;
  ParameterSet<Scalar> v;
  std::int64_t step = 0;
  std::int64_t epoch = 0;
  std::uint64_t seed = 0;

  static TrainState fresh(ParameterSet<Scalar> params, std::uint64_t seed) {
    TrainState s;
    s.m = params.zeros_like();
    s.v = params.zeros_like();
    s.params = std::move(params);
    s.seed = seed;
    return s;
  }
};

/// Bias-corrected Adam update in place.
template <typename Scalar>
void adam_step(TrainState<Scalar>& state, const ParameterSet<Scalar>& grads, const AdamOptions& opt) {
  for (std::size_t i = 0; i < state.params.size(); ++i) {
    const int gi = grads.index_of(state.params.names[i]);
    if (gi < 0) throw std::invalid_argument("adam_step: missing gradient for '" + state.params.names[i] + "'");
    if (!(grads.tensors[gi].shape() == state.params.tensors[i].shape()))
      throw std::invalid_argument("adam_step: gradient shape mismatch for '" + state.params.names[i] + "'");
  }
  ++state.step;
  const double bc1 = 1.0 - std::pow(opt.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(opt.beta2, static_cast<double>(state.step));
  const auto b1 = static_cast<Scalar>(opt.beta1), b2 = static_cast<Scalar>(opt.beta2);
  const auto step_size = static_cast<Scalar>(opt.lr / bc1);
  const auto inv_sqrt_bc2 = static_cast<Scalar>(1.0 / std::sqrt(bc2));
  const auto eps = static_cast<Scalar>(opt.eps);
  for (std::size_t i = 0; i < state.params.size(); ++i) {
    const auto& g = grads.tensors[grads.index_of(state.params.names[i])].array();
    auto& m = state.m.tensors[i].array();
    auto& v = state.v.tensors[i].array();
    m = b1 * m + (Scalar(1) - b1) * g;
    v = b2 * v + (Scalar(1) - b2) * g.square();
    state.params.tensors[i].array() -= step_size * m / (v.sqrt() * inv_sqrt_bc2 + eps);
  }
}

// ---------------------------------------------------------------------------
// Dataset loops.

struct Sample {
  FrameSequence frames;
  Index label = 0;
  std::string name;
};

/// Runs fn(i) for i in [0, n) on up to `threads` workers with a fixed index partition.
template <typename Fn>
void parallel_for(std::size_t n, int threads, Fn&& fn) {
  const std::size_t workers = std::min<std::size_t>(std::max(threads, 1), n);
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      try {
        for (std::size_t i = w; i < n; i += workers) fn(i);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

inline void check_sample(const Network& net, const Sample& s) {
  const NetworkConfig& c = net.config();
  const Shape expected = Shape{c.channels, c.height, c.width}.prepend(c.steps);
  if (!(s.frames.data.shape() == expected))
    throw std::invalid_argument("sample '" + s.name + "': frames " + s.frames.data.shape().to_string() +
                                " do not match network input " + expected.to_string());
  if (s.label < 0 || s.label >= c.num_classes)
    throw std::invalid_argument("sample '" + s.name + "': label " + std::to_string(s.label) + " out of range");
}

struct EpochStats {
  double mean_loss = 0;
  double accuracy = 0;
};

/// One shuffled pass with mean-over-batch gradients. Per-sample gradients are
/// reduced in sample order, so results do not depend on `threads`.
template <typename Scalar>
EpochStats train_epoch(const Network& net, TrainState<Scalar>& state, const std::vector<Sample>& dataset,
                       std::size_t batch_size, const AdamOptions& opt, int threads = 1) {
  if (dataset.empty()) throw std::invalid_argument("train_epoch: empty dataset");
  if (batch_size == 0) throw std::invalid_argument("train_epoch: batch size must be positive");
  for (const Sample& s : dataset) check_sample(net, s);

  std::vector<std::size_t> order(dataset.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::mt19937_64 rng(state.seed * 0x9E3779B97F4A7C15ULL + static_cast<std::uint64_t>(state.epoch));
  std::shuffle(order.begin(), order.end(), rng);

  double loss_sum = 0;
  std::size_t correct = 0;
  for (std::size_t begin = 0; begin < order.size(); begin += batch_size) {
    const std::size_t end = std::min(order.size(), begin + batch_size);
    std::vector<SampleGradient<Scalar>> results(end - begin);
    parallel_for(results.size(), threads, [&](std::size_t k) {
      const Sample& s = dataset[order[begin + k]];
      results[k] = sample_gradient(net, state.params, s.frames.data.template cast<Scalar>(), s.label);
    });
    ParameterSet<Scalar> total = state.params.zeros_like();
    for (std::size_t k = 0; k < results.size(); ++k) {
      for (std::size_t i = 0; i < total.size(); ++i) total.tensors[i].array() += results[k].grads.tensors[i].array();
      loss_sum += static_cast<double>(results[k].loss);
      correct += results[k].prediction == dataset[order[begin + k]].label ? 1 : 0;
    }
    const Scalar inv = Scalar(1) / static_cast<Scalar>(results.size());
    for (auto& t : total.tensors) t.array() *= inv;
    adam_step(state, total, opt);
  }
  ++state.epoch;
  return {loss_sum / static_cast<double>(dataset.size()),
          static_cast<double>(correct) / static_cast<double>(dataset.size())};
}

struct SampleResult {
  Index prediction = 0;
  std::int64_t macs = 0;
  std::vector<std::int64_t> layer_macs;
  std::vector<PruneDecision> decisions;
};

struct EvalResult {
  double accuracy = 0;
  double kept_fraction = 1;
  std::int64_t mac_total = 0;
  std::vector<SampleResult> samples;
};

/// Gradient-free forward of one sample.
template <typename Scalar>
SampleResult infer_sample(const Network& net, const ParameterSet<Scalar>& params, const Tensor<Scalar>& frames,
                          Mode mode, Scalar s_th) {
  Tape<Scalar> tape;
  const auto vars = bind_parameters(tape, params, false);
  ForwardPass<Scalar> pass = network_forward(tape, net, vars, frames, mode, s_th);
  return {argmax(pass.logits.value()), pass.macs, std::move(pass.layer_macs), std::move(pass.decisions)};
}

template <typename Scalar>
EvalResult evaluate(const Network& net, const ParameterSet<Scalar>& params, const std::vector<Sample>& dataset,
                    Mode mode, double s_th, int threads = 1) {
  if (dataset.empty()) throw std::invalid_argument("evaluate: empty dataset");
  for (const Sample& s : dataset) check_sample(net, s);
  EvalResult r;
  r.samples.resize(dataset.size());
  parallel_for(dataset.size(), threads, [&](std::size_t i) {
    r.samples[i] = infer_sample(net, params, dataset[i].frames.data.template cast<Scalar>(), mode,
                                static_cast<Scalar>(s_th));
  });
  std::size_t correct = 0;
  std::int64_t kept = 0, slots = 0;
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    const SampleResult& s = r.samples[i];
    correct += s.prediction == dataset[i].label ? 1 : 0;
    r.mac_total += s.macs;
    for (const auto& d : s.decisions) {
      kept += d.kept();
      slots += static_cast<std::int64_t>(d.keep.size());
    }
  }
  r.accuracy = static_cast<double>(correct) / static_cast<double>(dataset.size());
  r.kept_fraction = slots == 0 ? 1.0 : static_cast<double>(kept) / static_cast<double>(slots);
  return r;
}

struct KeepCount {
  int layer = 0;
  Index t = 0;
  std::int64_t kept = 0;
  std::int64_t total = 0;
};

/// Per-(layer, t) keep counts. `decisions[s][k]` is sample s at razor layer razor_layers[k].
inline std::vector<KeepCount> prune_statistics(const std::vector<std::vector<PruneDecision>>& decisions,
                                               const std::vector<int>& razor_layers) {
  std::vector<KeepCount> hist;
  if (decisions.empty()) return hist;
  for (std::size_t k = 0; k < razor_layers.size(); ++k) {
    const std::size_t steps = decisions.front().at(k).keep.size();
    for (std::size_t t = 0; t < steps; ++t) {
      KeepCount c{razor_layers[k], static_cast<Index>(t), 0, 0};
      for (const auto& sample : decisions) {
        c.kept += sample.at(k).keep.at(t);
        ++c.total;
      }
      hist.push_back(c);
    }
  }
  return hist;
}

}  // namespace rsnn
