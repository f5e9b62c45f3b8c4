#include "rsnn/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <sstream>

namespace rsnn {
namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

template <typename T>
T parse_number(std::string_view key, std::string_view v) {
  T out{};
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size() || v.empty())
    throw ConfigError("invalid value '" + std::string(v) + "' for " + std::string(key));
  return out;
}

std::string show(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

struct Field {
  std::string key;
  std::function<void(RunConfig&, std::string_view)> set;
  std::function<std::string(const RunConfig&)> get;
};

template <typename T, typename Access>
Field integer(std::string key, Access access, T min) {
  return {key,
          [key, access, min](RunConfig& c, std::string_view v) {
            const T n = parse_number<T>(key, v);
            if (n < min) throw ConfigError(key + " must be >= " + std::to_string(min));
            access(c) = n;
          },
          [access](const RunConfig& c) { return std::to_string(access(const_cast<RunConfig&>(c))); }};
}

template <typename Access>
Field real(std::string key, Access access) {
  return {key, [key, access](RunConfig& c, std::string_view v) { access(c) = parse_number<double>(key, v); },
          [access](const RunConfig& c) { return show(access(const_cast<RunConfig&>(c))); }};
}

template <typename Access>
Field text(std::string key, Access access) {
  return {key, [access](RunConfig& c, std::string_view v) { access(c) = std::string(v); },
          [access](const RunConfig& c) { return access(const_cast<RunConfig&>(c)); }};
}

template <typename E, typename Access>
Field choice(std::string key, Access access, std::vector<std::pair<std::string, E>> options) {
  return {key,
          [key, access, options](RunConfig& c, std::string_view v) {
            for (const auto& [name, value] : options)
              if (v == name) {
                access(c) = value;
                return;
              }
            throw ConfigError("invalid value '" + std::string(v) + "' for " + key);
          },
          [access, options](const RunConfig& c) {
            for (const auto& [name, value] : options)
              if (access(const_cast<RunConfig&>(c)) == value) return name;
            return std::string();
          }};
}

const std::vector<Field>& fields() {
  static const std::vector<Field> table = [] {
    std::vector<Field> f;
    f.push_back(text("train_dir", [](RunConfig& c) -> std::string& { return c.train_dir; }));
    f.push_back(text("test_dir", [](RunConfig& c) -> std::string& { return c.test_dir; }));
    f.push_back(integer<int>("epochs", [](RunConfig& c) -> int& { return c.epochs; }, 0));
    f.push_back(integer<int>("batch_size", [](RunConfig& c) -> int& { return c.batch_size; }, 1));
    f.push_back(real("lr", [](RunConfig& c) -> double& { return c.adam.lr; }));
    f.push_back(real("beta1", [](RunConfig& c) -> double& { return c.adam.beta1; }));
    f.push_back(real("beta2", [](RunConfig& c) -> double& { return c.adam.beta2; }));
    f.push_back(real("adam_eps", [](RunConfig& c) -> double& { return c.adam.eps; }));
    f.push_back(integer<std::uint64_t>("seed", [](RunConfig& c) -> std::uint64_t& { return c.network.seed; }, 0));
    f.push_back(real("s_th", [](RunConfig& c) -> double& { return c.network.s_th; }));
    f.push_back(choice<Mode>("mode", [](RunConfig& c) -> Mode& { return c.mode; },
                             {{"train", Mode::kTrain}, {"infer", Mode::kInfer}}));
    f.push_back(integer<int>("threads", [](RunConfig& c) -> int& { return c.threads; }, 1));
    f.push_back(integer<std::int64_t>("dt_us", [](RunConfig& c) -> std::int64_t& { return c.dt_us; }, 1));
    f.push_back(integer<Index>("steps", [](RunConfig& c) -> Index& { return c.network.steps; }, 1));
    f.push_back(integer<Index>("height", [](RunConfig& c) -> Index& { return c.network.height; }, 1));
    f.push_back(integer<Index>("width", [](RunConfig& c) -> Index& { return c.network.width; }, 1));
    f.push_back(integer<Index>("channels", [](RunConfig& c) -> Index& { return c.network.channels; }, 1));
    f.push_back(integer<Index>("num_classes", [](RunConfig& c) -> Index& { return c.network.num_classes; }, 1));
    f.push_back({"layers", [](RunConfig& c, std::string_view v) { c.network.layers = parse_layers(v); },
                 [](const RunConfig& c) { return format_layers(c.network.layers); }});
    f.push_back(real("v_th", [](RunConfig& c) -> double& { return c.network.neuron.v_th; }));
    f.push_back(real("leak", [](RunConfig& c) -> double& { return c.network.neuron.leak; }));
    f.push_back(choice<ResetMode>("reset_mode", [](RunConfig& c) -> ResetMode& { return c.network.neuron.reset_mode; },
                                  {{"hard_reset", ResetMode::kHardReset}, {"literal_h", ResetMode::kLiteralH}}));
    f.push_back(real("tau", [](RunConfig& c) -> double& { return c.network.neuron.tau; }));
    f.push_back(real("surrogate_width", [](RunConfig& c) -> double& { return c.network.neuron.surrogate_width; }));
    f.push_back(choice<LiafMode>("liaf_mode", [](RunConfig& c) -> LiafMode& { return c.network.liaf_mode; },
                                 {{"last_only", LiafMode::kLastOnly}, {"all", LiafMode::kAll}}));
    f.push_back(choice<RazorPlacement>(
        "razor_placement", [](RunConfig& c) -> RazorPlacement& { return c.network.placement; },
        {{"none", RazorPlacement::kNone},
         {"encoder", RazorPlacement::kEncoder},
         {"backbone", RazorPlacement::kBackbone},
         {"all", RazorPlacement::kAll}}));
    f.push_back(integer<Index>("embeddings", [](RunConfig& c) -> Index& { return c.network.embeddings; }, 1));
    f.push_back(
        integer<Index>("weighting_kernel", [](RunConfig& c) -> Index& { return c.network.weighting_kernel; }, 1));
    f.push_back(real("init_gain", [](RunConfig& c) -> double& { return c.network.init_gain; }));
    f.push_back(real("noise_rate", [](RunConfig& c) -> double& { return c.noise_rate; }));
    f.push_back(integer<std::uint64_t>("noise_seed", [](RunConfig& c) -> std::uint64_t& { return c.noise_seed; }, 0));
    return f;
  }();
  return table;
}

const Field& field(std::string_view key) {
  for (const Field& f : fields())
    if (f.key == key) return f;
  throw ConfigError("unknown config key '" + std::string(key) + "'");
}

}  // namespace

const std::vector<std::string>& config_keys() {
  static const std::vector<std::string> keys = [] {
    std::vector<std::string> k;
    for (const Field& f : fields()) k.push_back(f.key);
    return k;
  }();
  return keys;
}

void set_config_value(RunConfig& cfg, std::string_view key, std::string_view value) {
  field(trim(key)).set(cfg, trim(value));
}

std::string get_config_value(const RunConfig& cfg, std::string_view key) { return field(key).get(cfg); }

void apply_config_text(RunConfig& cfg, std::string_view text) {
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos)
      throw ConfigError("config line " + std::to_string(line_no) + ": expected 'key = value'");
    try {
      set_config_value(cfg, line.substr(0, eq), line.substr(eq + 1));
    } catch (const ConfigError& e) {
      throw ConfigError("config line " + std::to_string(line_no) + ": " + e.what());
    }
  }
}

void apply_config_file(RunConfig& cfg, const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot read config file " + path);
  std::ostringstream os;
  os << is.rdbuf();
  apply_config_text(cfg, os.str());
}

// Layer tokens, whitespace separated: conv:OUT:KERNEL:STRIDE[:POOL] or dense:OUT.
std::string format_layers(const std::vector<LayerSpec>& layers) {
  std::ostringstream os;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const LayerSpec& l = layers[i];
    if (i) os << ' ';
    if (l.kind == LayerKind::kConv) {
      os << "conv:" << l.out << ':' << l.kernel << ':' << l.stride;
      if (l.pool > 1) os << ':' << l.pool;
    } else {
      os << "dense:" << l.out;
    }
  }
  return os.str();
}

std::vector<LayerSpec> parse_layers(std::string_view text) {
  std::vector<LayerSpec> layers;
  std::istringstream is{std::string(text)};
  std::string token;
  while (is >> token) {
    std::vector<std::string_view> parts;
    std::string_view rest(token);
    for (std::size_t colon; (colon = rest.find(':')) != std::string_view::npos; rest.remove_prefix(colon + 1))
      parts.push_back(rest.substr(0, colon));
    parts.push_back(rest);
    LayerSpec l;
    if (parts[0] == "conv" && (parts.size() == 4 || parts.size() == 5)) {
      l.kind = LayerKind::kConv;
      l.out = parse_number<Index>("layers", parts[1]);
      l.kernel = parse_number<Index>("layers", parts[2]);
      l.stride = parse_number<Index>("layers", parts[3]);
      l.pool = parts.size() == 5 ? parse_number<Index>("layers", parts[4]) : 1;
      if (l.out < 1 || l.kernel < 1 || l.stride < 1 || l.pool < 1)
        throw ConfigError("layers: non-positive value in '" + token + "'");
    } else if (parts[0] == "dense" && parts.size() == 2) {
      l.kind = LayerKind::kDense;
      l.out = parse_number<Index>("layers", parts[1]);
      l.kernel = 0;
      if (l.out < 1) throw ConfigError("layers: non-positive width in '" + token + "'");
    } else {
      throw ConfigError("layers: cannot parse '" + token + "'");
    }
    layers.push_back(l);
  }
  return layers;
}

}  // namespace rsnn
