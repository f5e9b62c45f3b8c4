#include "rsnn/cli.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "rsnn/checkpoint.hpp"

namespace rsnn {
namespace {

namespace fs = std::filesystem;

std::vector<Sample> load_samples(const RunConfig& cfg, const std::string& dir) {
  if (dir.empty()) throw ConfigError("no dataset directory configured");
  return load_dataset(dir, cfg.frame_options());
}

Network build_network(const RunConfig& cfg) {
  try {
    return Network(cfg.network);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
}

ParameterSet<float> load_parameters(const Network& net, const std::string& path) {
  Checkpoint ck = load_checkpoint(path);
  try {
    net.check_parameters(ck.params);
  } catch (const std::invalid_argument& e) {
    throw DataError(std::string("checkpoint incompatible with config: ") + e.what());
  }
  return std::move(ck.params);
}

EvalResult run_eval(const RunConfig& cfg, const std::string& checkpoint, const std::string& data) {
  const Network net = build_network(cfg);
  const ParameterSet<float> params = load_parameters(net, checkpoint);
  const auto samples = load_samples(cfg, data.empty() ? cfg.test_dir : data);
  try {
    return evaluate(net, params, samples, cfg.mode, cfg.network.s_th, cfg.threads);
  } catch (const std::invalid_argument& e) {
    throw DataError(e.what());
  }
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  os << text;
  if (!os) throw DataError("cannot write " + path.string());
}

}  // namespace

RunConfig resolve_config(const std::string& config_path, const Overrides& overrides) {
  RunConfig cfg;
  if (!config_path.empty()) apply_config_file(cfg, config_path);
  for (const auto& [key, value] : overrides) set_config_value(cfg, key, value);
  return cfg;
}

int cmd_synth(const std::string& out_dir, const SynthOptions& opt, std::ostream& out) {
  const std::size_t n = write_synthetic_dataset(out_dir, opt);
  out << "wrote " << n << " samples (" << opt.samples_per_class << " per class) to " << out_dir << '\n';
  return kExitOk;
}

int cmd_train(const RunConfig& cfg, const std::string& out_dir, std::ostream& out) {
  const Network net = build_network(cfg);
  const auto samples = load_samples(cfg, cfg.train_dir);
  TrainState<float> state =
      TrainState<float>::fresh(net.init_parameters<float>(cfg.network.seed), cfg.network.seed);

  std::ostringstream metrics;
  metrics << "epoch,loss,train_acc\n" << std::setprecision(9);
  EpochStats stats;
  for (int e = 0; e < cfg.epochs; ++e) {
    try {
      stats = train_epoch(net, state, samples, static_cast<std::size_t>(cfg.batch_size), cfg.adam, cfg.threads);
    } catch (const std::invalid_argument& ex) {
      throw DataError(ex.what());
    }
    metrics << e + 1 << ',' << stats.mean_loss << ',' << stats.accuracy << '\n';
  }

  const fs::path dir(out_dir);
  fs::create_directories(dir);
  save_checkpoint((dir / "checkpoint.rzsn").string(), state.params, static_cast<std::uint64_t>(state.step));
  write_text(dir / "metrics.csv", metrics.str());
  out << "trained " << cfg.epochs << " epochs on " << samples.size() << " samples";
  if (cfg.epochs > 0) out << ": loss=" << stats.mean_loss << " train_acc=" << stats.accuracy;
  out << "; wrote " << (dir / "checkpoint.rzsn").string() << '\n';
  return kExitOk;
}

int cmd_eval(const RunConfig& cfg, const std::string& checkpoint, const std::string& data,
             const std::string& decisions_csv, std::ostream& out) {
  const Network net = build_network(cfg);
  const EvalResult r = run_eval(cfg, checkpoint, data);
  if (!decisions_csv.empty()) {
    const auto layers = net.razor_layers();
    std::ostringstream os;
    os << "sample,layer,t,score,keep\n" << std::setprecision(9);
    for (std::size_t s = 0; s < r.samples.size(); ++s)
      for (std::size_t k = 0; k < layers.size(); ++k) {
        const PruneDecision& d = r.samples[s].decisions[k];
        for (std::size_t t = 0; t < d.keep.size(); ++t)
          os << s << ',' << layers[k] << ',' << t << ',' << d.scores[t] << ',' << d.keep[t] << '\n';
      }
    write_text(decisions_csv, os.str());
  }
  out << "accuracy,kept_fraction,mac_total\n"
      << std::setprecision(10) << r.accuracy << ',' << r.kept_fraction << ',' << r.mac_total << '\n';
  return kExitOk;
}

int cmd_stats(const RunConfig& cfg, const std::string& checkpoint, const std::string& data,
              const std::string& out_csv, std::ostream& out) {
  const Network net = build_network(cfg);
  const EvalResult r = run_eval(cfg, checkpoint, data);
  std::vector<std::vector<PruneDecision>> decisions;
  for (const auto& s : r.samples) decisions.push_back(s.decisions);
  const auto hist = prune_statistics(decisions, net.razor_layers());
  std::ostringstream os;
  os << "layer,t,kept,total\n";
  for (const KeepCount& c : hist) os << c.layer << ',' << c.t << ',' << c.kept << ',' << c.total << '\n';
  if (out_csv.empty()) throw ConfigError("stats: --out is required");
  write_text(out_csv, os.str());
  out << "wrote " << hist.size() << " rows to " << out_csv << '\n';
  return kExitOk;
}

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Razor SNN: spiking networks with temporal event pruning"};
  app.require_subcommand(1);

  std::string out_path;
  SynthOptions synth;
  auto* synth_cmd = app.add_subcommand("synth", "write a rotating-bar CW/CCW event dataset");
  synth_cmd->add_option("--out", out_path, "output directory")->required();
  synth_cmd->add_option("--height", synth.height)->check(CLI::Range(4, 1 << 16));
  synth_cmd->add_option("--width", synth.width)->check(CLI::Range(4, 1 << 16));
  synth_cmd->add_option("--steps", synth.steps)->check(CLI::Range(2, 1 << 20));
  synth_cmd->add_option("--samples-per-class", synth.samples_per_class)->check(CLI::NonNegativeNumber);
  synth_cmd->add_option("--events-per-step", synth.events_per_step)->check(CLI::NonNegativeNumber);
  synth_cmd->add_option("--dt-us", synth.dt_us)->check(CLI::PositiveNumber);
  synth_cmd->add_option("--seed", synth.seed);

  // Options shared by train / eval / stats.
  struct RunFlags {
    std::string config;
    std::vector<std::string> sets;
    std::string seed, s_th, epochs, mode;
    std::string checkpoint, data, decisions;
  };
  RunFlags flags;
  auto add_run_flags = [&](CLI::App* cmd) {
    cmd->add_option("--config", flags.config, "key = value config file");
    cmd->add_option("--set", flags.sets, "override any config key (key=value), repeatable");
    cmd->add_option("--seed", flags.seed);
    cmd->add_option("--s-th", flags.s_th, "razor ratio in [0, 1]");
    cmd->add_option("--epochs", flags.epochs);
    cmd->add_option("--mode", flags.mode)->check(CLI::IsMember({"train", "infer"}));
  };
  auto* train_cmd = app.add_subcommand("train", "train and write checkpoint.rzsn + metrics.csv");
  add_run_flags(train_cmd);
  train_cmd->add_option("--out", out_path, "output directory")->required();
  auto* eval_cmd = app.add_subcommand("eval", "print accuracy,kept_fraction,mac_total");
  add_run_flags(eval_cmd);
  eval_cmd->add_option("--checkpoint", flags.checkpoint)->required();
  eval_cmd->add_option("--data", flags.data, "dataset directory (default: test_dir)");
  eval_cmd->add_option("--decisions", flags.decisions, "write per-timestep prune decisions CSV");
  auto* stats_cmd = app.add_subcommand("stats", "write per-layer keep histogram CSV");
  add_run_flags(stats_cmd);
  stats_cmd->add_option("--checkpoint", flags.checkpoint)->required();
  stats_cmd->add_option("--data", flags.data, "dataset directory (default: test_dir)");
  stats_cmd->add_option("--out", out_path, "output CSV")->required();

  std::vector<std::string> argv_storage;
  argv_storage.push_back("razor_snn");
  argv_storage.insert(argv_storage.end(), args.begin(), args.end());
  std::vector<char*> argv;
  for (auto& a : argv_storage) argv.push_back(a.data());

  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (synth_cmd->parsed()) return cmd_synth(out_path, synth, out);

    Overrides overrides;
    for (const std::string& s : flags.sets) {
      const auto eq = s.find('=');
      if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + s + "'");
      overrides.emplace_back(s.substr(0, eq), s.substr(eq + 1));
    }
    if (!flags.seed.empty()) overrides.emplace_back("seed", flags.seed);
    if (!flags.s_th.empty()) overrides.emplace_back("s_th", flags.s_th);
    if (!flags.epochs.empty()) overrides.emplace_back("epochs", flags.epochs);
    if (!flags.mode.empty()) overrides.emplace_back("mode", flags.mode);
    const RunConfig cfg = resolve_config(flags.config, overrides);

    if (train_cmd->parsed()) return cmd_train(cfg, out_path, out);
    if (eval_cmd->parsed()) return cmd_eval(cfg, flags.checkpoint, flags.data, flags.decisions, out);
    return cmd_stats(cfg, flags.checkpoint, flags.data, out_path, out);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitData;
  }
}

}  // namespace rsnn
