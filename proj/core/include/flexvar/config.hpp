#pragma once

#include <cstdint>
#include <string>

#include "flexvar/model.hpp"
#include "flexvar/tokenizer.hpp"
#include "flexvar/training.hpp"

namespace flexvar::cfg {

// Structured text configuration: `key = value` lines under `[section]`
// headers, `#` comments. Every key has a documented default; unknown sections
// or keys are hard errors. parse(serialize(x)) == x and serialize is a fixed
// point of the round trip.
struct RunConfig {
  // [data]
  int data_count = 512;        // synthetic corpus size
  std::uint64_t data_seed = 7; // corpus RNG seed
  int image_size = 64;         // square pixel size

  // [tokenizer]
  tok::TokenizerConfig tokenizer;

  // [model]
  model::ModelConfig model;  // mode serialized as gt|residual

  // [train]
  train::TrainConfig train;  // loss_log left to the CLI
};

RunConfig parse_config(const std::string& text, const std::string& origin = "config");
RunConfig load_config(const std::string& path);
std::string serialize_config(const RunConfig& cfg);

}  // namespace flexvar::cfg
