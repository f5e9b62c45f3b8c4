// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "oracles.hpp"
#include "rsnn/checkpoint.hpp"
#include "rsnn/dataset.hpp"
#include "rsnn/events.hpp"
#include "rsnn/gradcheck.hpp"
#include "rsnn/network.hpp"

namespace {

using namespace rsnn;
using Clock = std::chrono::steady_clock;

constexpr double kGradTol = 1e-3;
constexpr double kGradSeconds = 60;
constexpr double kOracleTol = 1e-6;
constexpr double kDecayTol = 1e-6;
constexpr double kLearnAccuracy = 0.90;
constexpr double kLearnSeconds = 600;
constexpr double kAblationMarginPts = 1.0;
constexpr double kAblationKept = 0.7;
constexpr double kLogitTol = 1e-6;
constexpr double kNoiseRate = 8;
constexpr int kEpochs = 30;
constexpr std::size_t kBatch = 8;
constexpr double kSth = 0.4;

int failures = 0;
std::vector<std::pair<int, std::string>> summary;

void report(int id, bool pass, const std::string& name, const std::string& detail) {
  char head[64];
  std::snprintf(head, sizeof head, "criterion %d: %s  ", id, pass ? "PASS" : "FAIL");
  const std::string line = head + name + " (" + detail + ")";
  std::printf("%s\n", line.c_str());
  std::fflush(stdout);
  summary.emplace_back(id, line);
  if (!pass) ++failures;
}

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(const char* f, double a) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

template <typename Scalar>
Tensor<Scalar> from_vec(const Shape& shape, const oracle::Vec& v) {
  Tensor<Scalar> t(shape);
  for (Index i = 0; i < t.size(); ++i) t[i] = static_cast<Scalar>(v[static_cast<std::size_t>(i)]);
  return t;
}

// ---------------------------------------------------------------------------

void gradient_oracle() {
  const auto t0 = Clock::now();
  NetworkConfig c;
  c.channels = 2;
  c.height = 4;
  c.width = 4;
  c.steps = 4;
  c.layers = {{LayerKind::kConv, 2, 3, 1, 1}, {LayerKind::kDense, 6, 0, 1, 1}};
  c.liaf_mode = LiafMode::kAll;
  const Network net{c};

  std::mt19937_64 rng(2024);
  double worst = 0;
  std::size_t n_params = 0;
  for (int trial = 0; trial < 3; ++trial) {
    const auto params = net.init_parameters<double>(100 + trial);
    n_params = params.numel();
    Tensor<double> frames(Shape{c.steps, c.channels, c.height, c.width});
    std::poisson_distribution<int> counts(0.8);
    for (Index i = 0; i < frames.size(); ++i) frames[i] = counts(rng);
    const Index label = trial % 2;
    for (std::size_t p = 0; p < params.size(); ++p) {
      const std::function<Var<double>(Tape<double>&, const Var<double>&)> f = [&](Tape<double>& tape,
                                                                                  const Var<double>& v) {
        auto vars = bind_parameters(tape, params, false);
        vars[p] = v;
        return rate_loss(network_forward(tape, net, vars, frames, Mode::kTrain, kSth).logits, label);
      };
      worst = std::max(worst, finite_difference_check<double>(f, params.tensors[p], 1e-6).max_rel_error);
    }
  }
  const double secs = seconds_since(t0);
  report(1, worst <= kGradTol && n_params <= 500 && secs < kGradSeconds, "gradient oracle",
         "all-LIAF, T=4, " + std::to_string(n_params) + " params, 3 instances, max rel err " + fmt("%.3g", worst) +
             " <= " + fmt("%g", kGradTol) + ", " + fmt("%.2f", secs) + " s < " + fmt("%g", kGradSeconds) + " s");
}

void razor_oracles() {
  std::mt19937_64 rng(7);
  std::uniform_int_distribution<int> dim(1, 4);
  double err_mask = 0, err_rec = 0, err_max = 0;
  bool binary = true, monotone = true;
  for (int trial = 0; trial < 100; ++trial) {
    const int e = dim(rng), t = dim(rng) + 1, ch = dim(rng), h = dim(rng), w = dim(rng);
    const int d = ch * h * w;
    const auto bv = oracle::random_vec(static_cast<std::size_t>(e) * t, rng);
    const auto xv = oracle::random_vec(static_cast<std::size_t>(t) * d, rng);
    const auto mv = oracle::random_vec(static_cast<std::size_t>(e) * d, rng, 0, 1);
    const Shape xs{t, ch, h, w};

    Tape<float> tape;
    const Var<float> x = tape.constant(from_vec<float>(xs, xv));
    const Tensor<float> m = eoi_mask(tape.constant(from_vec<float>(Shape{e, t}, bv)), x).value();
    const auto m_ref = oracle::eoi_mask(bv, xv, e, t, d);
    for (Index i = 0; i < m.size(); ++i) err_mask = std::max(err_mask, std::abs(m[i] - m_ref[i]));

    const Tensor<float> x_hat = reconstruct(tape.constant(from_vec<float>(Shape{e, d}, mv)), x).value();
    const auto r_ref = oracle::reconstruct(mv, xv, e, t, d);
    for (Index i = 0; i < x_hat.size(); ++i) err_rec = std::max(err_rec, std::abs(x_hat[i] - r_ref[i]));

    const Tensor<float> s = importance_scores(x.value());
    const auto s_ref = oracle::exhaustive_max(xv, t, d);
    for (Index i = 0; i < s.size(); ++i) err_max = std::max(err_max, std::abs(s[i] - s_ref[i]));

    Tensor<float> prev = prune_mask(s, 0.0f);
    for (int k = 0; k <= 50; ++k) {
      const Tensor<float> cur = prune_mask(s, static_cast<float>(k) / 50);
      for (Index i = 0; i < cur.size(); ++i) {
        binary = binary && (cur[i] == 0.0f || cur[i] == 1.0f);
        monotone = monotone && cur[i] <= prev[i];
      }
      prev = cur;
    }
  }
  const bool pass = err_mask <= kOracleTol && err_rec <= kOracleTol && err_max <= kOracleTol && binary && monotone;
  report(2, pass, "razor math oracles",
         "100 random float32 instances: eoi_mask " + fmt("%.2g", err_mask) + ", reconstruct " + fmt("%.2g", err_rec) +
             ", importance_scores " + fmt("%.2g", err_max) + " (tol 1e-6); prune_mask binary=" +
             (binary ? "yes" : "no") + " monotone=" + (monotone ? "yes" : "no"));
}

void dynamics_invariants() {
  std::mt19937_64 rng(11);
  const NeuronParams<float> p;
  const Index n = 256;
  double decay_err = 0;
  std::int64_t reset_violations = 0, binary_violations = 0, checks = 0;
  for (int trial = 0; trial < 200; ++trial) {
    Tape<float> tape;
    std::uniform_real_distribution<double> below(-1.0, 0.29), any(-50.0, 50.0), in(-2.0, 2.0);
    Tensor<float> u0(Shape{n});
    for (Index i = 0; i < n; ++i) u0[i] = static_cast<float>(below(rng));
    NeuronState<float> s{tape.constant(u0), Tensor<float>(Shape{n})};
    const Var<float> zero = tape.constant(Tensor<float>(Shape{n}));
    for (int k = 1; k <= 10; ++k) {
      s = lif_step(s, zero, p).state;
      for (Index i = 0; i < n; ++i)
        decay_err = std::max(decay_err, std::abs(s.u.value()[i] - u0[i] * std::pow(0.3, k)));
    }

    Tensor<float> u(Shape{n}), o_prev(Shape{n}), a(Shape{n});
    std::bernoulli_distribution coin(0.5);
    for (Index i = 0; i < n; ++i) {
      u[i] = static_cast<float>(trial % 10 == 0 ? any(rng) * 1e6 : any(rng));
      o_prev[i] = coin(rng) ? 1.0f : 0.0f;
      a[i] = static_cast<float>(in(rng));
    }
    for (bool liaf : {false, true}) {
      const NeuronState<float> st{tape.constant(u), o_prev};
      const auto r = liaf ? liaf_step(st, tape.constant(a), p) : lif_step(st, tape.constant(a), p);
      const Tensor<float>& spikes = liaf ? r.state.o_prev : r.out.value();
      for (Index i = 0; i < n; ++i) {
        ++checks;
        if (o_prev[i] == 1.0f && r.state.u.value()[i] != a[i]) ++reset_violations;
        if (spikes[i] != 0.0f && spikes[i] != 1.0f) ++binary_violations;
      }
    }
  }
  const bool pass = decay_err <= kDecayTol && reset_violations == 0 && binary_violations == 0;
  report(3, pass, "dynamics invariants",
         "geometric decay max err " + fmt("%.2g", decay_err) + " over 10 steps (tol 1e-6); hard-reset violations " +
             std::to_string(reset_violations) + ", non-binary spikes " + std::to_string(binary_violations) + " of " +
             std::to_string(checks) + " randomized neurons");
}

// ---------------------------------------------------------------------------

struct Trained {
  Network net;
  ParameterSet<float> params;
  double seconds = 0;
};

Trained train_model(RazorPlacement placement, std::uint64_t seed, const std::vector<Sample>& train) {
  NetworkConfig c;
  c.placement = placement;
  c.seed = seed;
  Trained t{Network(c), {}, 0};
  const auto t0 = Clock::now();
  auto state = TrainState<float>::fresh(t.net.init_parameters<float>(seed), seed);
  for (int e = 0; e < kEpochs; ++e) train_epoch(t.net, state, train, kBatch, AdamOptions{});
  t.seconds = seconds_since(t0);
  t.params = std::move(state.params);
  return t;
}

struct TaskData {
  std::vector<Sample> train;
  std::vector<Sample> test;
};

TaskData task_data(std::uint64_t seed, double noise_rate) {
  SynthOptions train;
  train.samples_per_class = 128;
  train.seed = 100 + seed;
  SynthOptions test = train;
  test.samples_per_class = 64;
  test.seed = 200 + seed;
  FrameOptions frames;
  frames.noise_rate = noise_rate;
  frames.noise_seed = seed;
  TaskData d{synth_dataset(train, frames), {}};
  frames.noise_seed = 1000 + seed;
  d.test = synth_dataset(test, frames);
  return d;
}

void compute_accounting(const Trained& model, const std::vector<Sample>& test);
void determinism_and_formats(const Trained& model, const std::vector<Sample>& train, const std::vector<Sample>& test);

void synthetic_learning() {
  const auto t0 = Clock::now();
  const TaskData data = task_data(1, 0);
  const Trained vanilla = train_model(RazorPlacement::kNone, 1, data.train);
  const EvalResult ev = evaluate(vanilla.net, vanilla.params, data.test, Mode::kInfer, kSth);
  const Trained razor = train_model(RazorPlacement::kBackbone, 1, data.train);
  const EvalResult er = evaluate(razor.net, razor.params, data.test, Mode::kInfer, kSth);
  const double secs = seconds_since(t0);
  const bool pass = ev.accuracy >= kLearnAccuracy && er.accuracy >= kLearnAccuracy && secs <= kLearnSeconds;
  report(4, pass, "synthetic-task learning",
         "16x16, T=16, 256/128 samples, 30 epochs, 1 thread: vanilla " + fmt("%.4f", ev.accuracy) + ", razor " +
             fmt("%.4f", er.accuracy) + " (kept " + fmt("%.3f", er.kept_fraction) + ") >= 0.90; " +
             fmt("%.1f", secs) + " s <= 600 s");

  compute_accounting(razor, data.test);
  determinism_and_formats(razor, data.train, data.test);
}

void ablation_direction() {
  double base_sum = 0, razor_sum = 0, kept_sum = 0;
  std::string per_seed;
  const int seeds = 5;
  for (int seed = 1; seed <= seeds; ++seed) {
    const TaskData data = task_data(static_cast<std::uint64_t>(seed), kNoiseRate);
    const Trained base = train_model(RazorPlacement::kNone, seed, data.train);
    const Trained razor = train_model(RazorPlacement::kBackbone, seed, data.train);
    const EvalResult eb = evaluate(base.net, base.params, data.test, Mode::kInfer, kSth);
    const EvalResult er = evaluate(razor.net, razor.params, data.test, Mode::kInfer, kSth);
    base_sum += eb.accuracy;
    razor_sum += er.accuracy;
    kept_sum += er.kept_fraction;
    per_seed += (seed > 1 ? "; " : "") + std::string("s") + std::to_string(seed) + " " + fmt("%.4f", eb.accuracy) +
                "/" + fmt("%.4f", er.accuracy) + "/" + fmt("%.3f", er.kept_fraction);
    std::printf("  ablation seed %d: baseline %.4f razor %.4f kept %.4f\n", seed, eb.accuracy, er.accuracy,
                er.kept_fraction);
    std::fflush(stdout);
  }
  const double base = 100 * base_sum / seeds, razor = 100 * razor_sum / seeds, kept = kept_sum / seeds;
  const bool acc_ok = razor >= base - kAblationMarginPts;
  const bool kept_ok = kept <= kAblationKept;
  report(5, acc_ok && kept_ok, "ablation direction under noise",
         "noise 8/window, 5 seeds: mean baseline " + fmt("%.2f", base) + "%, razor " + fmt("%.2f", razor) +
             "% (need >= baseline - 1.0 pt: " + (acc_ok ? "ok" : "no") + "), mean kept_fraction " +
             fmt("%.4f", kept) + " at s_th 0.4 (need <= 0.7: " + (kept_ok ? "ok" : "no") + ")");
}

void compute_accounting(const Trained& model, const std::vector<Sample>& test) {
  const Network& net = model.net;
  const EvalResult r = evaluate(net, model.params, test, Mode::kInfer, kSth);
  const auto razor = net.razor_layers();
  const auto n = static_cast<std::int64_t>(test.size());
  const std::int64_t steps = net.config().steps;
  bool identity = true;
  std::int64_t razor_macs = 0, full_times_kept = 0, kept_total = 0;
  for (std::size_t k = 0; k < razor.size(); ++k) {
    const LayerPlan& l = net.layers()[razor[k]];
    std::int64_t macs = 0, kept = 0;
    for (const auto& s : r.samples) {
      macs += s.layer_macs[razor[k]];
      kept += s.decisions[k].kept();
    }
    const std::int64_t full = l.macs_per_step * steps * n;
    identity = identity && macs * (steps * n) == full * kept;
    razor_macs += macs * (steps * n);
    full_times_kept += full * kept;
    kept_total += kept;
  }
  identity = identity && razor_macs == full_times_kept;
  for (std::size_t i = 0; i < net.layers().size(); ++i) {
    if (net.layers()[i].razor) continue;
    std::int64_t macs = 0;
    for (const auto& s : r.samples) macs += s.layer_macs[i];
    identity = identity && macs == net.layers()[i].macs_per_step * steps * n;
  }

  double max_diff = 0;
  for (const Sample& s : test) {
    Tape<float> tape;
    const auto vars = bind_parameters(tape, model.params, false);
    const auto a = network_forward(tape, net, vars, s.frames.data, Mode::kTrain, 0.0f);
    const auto b = network_forward(tape, net, vars, s.frames.data, Mode::kInfer, 0.0f);
    max_diff = std::max(max_diff, static_cast<double>((a.logits.value().array() - b.logits.value().array()).abs().maxCoeff()));
  }
  const double f = static_cast<double>(kept_total) / static_cast<double>(razor.size() * steps * n);
  report(6, identity && max_diff <= kLogitTol, "compute accounting",
         "razor-layer MACs == full cost x kept fraction (f = " + fmt("%.4f", f) + ") as an exact integer identity: " +
             (identity ? "yes" : "no") + "; s_th=0 vs train logits max diff " + fmt("%.2g", max_diff) +
             " (tol 1e-6)");
}

std::string checkpoint_bytes(const ParameterSet<float>& p, std::uint64_t step) {
  std::ostringstream os(std::ios::binary);
  save_checkpoint(os, p, step);
  return os.str();
}

void determinism_and_formats(const Trained& model, const std::vector<Sample>& train, const std::vector<Sample>& test) {
  const std::vector<Sample> subset(train.begin(), train.begin() + 64);
  auto run = [&] {
    const Network net{NetworkConfig{}};
    auto state = TrainState<float>::fresh(net.init_parameters<float>(5), 5);
    for (int e = 0; e < 2; ++e) train_epoch(net, state, subset, kBatch, AdamOptions{});
    return checkpoint_bytes(state.params, static_cast<std::uint64_t>(state.step));
  };
  const bool same_bytes = run() == run();

  std::istringstream is(checkpoint_bytes(model.params, 1), std::ios::binary);
  const Checkpoint ck = load_checkpoint(is);
  const EvalResult before = evaluate(model.net, model.params, test, Mode::kInfer, kSth);
  const EvalResult after = evaluate(model.net, ck.params, test, Mode::kInfer, kSth);
  const bool round_trip = before.accuracy == after.accuracy && before.mac_total == after.mac_total &&
                          before.kept_fraction == after.kept_fraction;

  SynthOptions so;
  so.samples_per_class = 25;
  so.seed = 77;
  bool csv_ok = true;
  std::size_t streams = 0;
  for (const EventStream& s : synth_streams(so)) {
    const EventStream noisy = inject_noise(s, kNoiseRate, so.dt_us, 1234 + streams, so.steps);
    const EventStream back = parse_event_csv(format_event_csv(noisy));
    csv_ok = csv_ok && back.events == noisy.events && back.geometry == noisy.geometry && back.label == noisy.label;
    ++streams;
  }
  report(7, same_bytes && round_trip && csv_ok, "determinism and formats",
         std::string("repeat training -> identical checkpoint bytes: ") + (same_bytes ? "yes" : "no") +
             "; save/load/eval accuracy " + fmt("%.4f", before.accuracy) + " -> " + fmt("%.4f", after.accuracy) +
             (round_trip ? " (exact)" : " (differs)") + "; event CSV round-trip on " + std::to_string(streams) +
             " streams: " + (csv_ok ? "yes" : "no"));
}

}  // namespace

int main() {
  gradient_oracle();
  razor_oracles();
  dynamics_invariants();
  synthetic_learning();  // also reports criteria 6 and 7 on the trained model
  ablation_direction();
  std::sort(summary.begin(), summary.end());
  std::printf("\nsummary\n");
  for (const auto& [id, line] : summary) std::printf("%s\n", line.c_str());
  std::printf("%d of 7 criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
