#pragma once

// Run configuration: plain `key = value` lines, `#` starts a comment.
// Precedence is defaults < file < command-line overrides.

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "rsnn/dataset.hpp"
#include "rsnn/errors.hpp"
#include "rsnn/network.hpp"

namespace rsnn {

struct RunConfig {
  NetworkConfig network;
  std::string train_dir;
  std::string test_dir;
  int epochs = 30;
  int batch_size = 8;
  AdamOptions adam;
  Mode mode = Mode::kInfer;
  int threads = 1;
  std::int64_t dt_us = 1000;
  double noise_rate = 0;
  std::uint64_t noise_seed = 0;

  FrameOptions frame_options() const { return {dt_us, network.steps, noise_rate, noise_seed}; }
};

/// Every recognized key, in canonical order.
const std::vector<std::string>& config_keys();

/// Sets one field from its textual value. Throws ConfigError on an unknown key or bad value.
void set_config_value(RunConfig& cfg, std::string_view key, std::string_view value);

/// Textual form of one field, parseable by set_config_value.
std::string get_config_value(const RunConfig& cfg, std::string_view key);

/// Applies `key = value` lines; errors cite the 1-based line number.
void apply_config_text(RunConfig& cfg, std::string_view text);
void apply_config_file(RunConfig& cfg, const std::string& path);

std::string format_layers(const std::vector<LayerSpec>& layers);
std::vector<LayerSpec> parse_layers(std::string_view text);

}  // namespace rsnn
