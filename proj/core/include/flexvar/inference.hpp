#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "flexvar/model.hpp"
#include "flexvar/rng.hpp"
#include "flexvar/scheduler.hpp"
#include "flexvar/tensor.hpp"
#include "flexvar/tokenizer.hpp"

namespace flexvar::infer {

struct SamplerConfig {
  float temperature = 1.0f;  // 0 means argmax
  int top_k = 0;             // 0 means full vocabulary
  float guidance = 1.5f;     // s in cond + s*(cond - uncond); 0 disables the null stream
  std::uint64_t seed = 0;
};

// Per-layer, per-head appended key/value rows for completed scales. Entries
// are append-only; cursor counts cached positions.
struct KVCache {
  struct Head {
    std::vector<float> k, v;  // cursor × head_dim, row-major
  };
  struct Layer {
    std::vector<Head> heads;
  };
  std::vector<Layer> layers;
  std::size_t cursor = 0;

  static KVCache make(int depth, int heads) {
    KVCache c;
    c.layers.resize(depth);
    for (auto& l : c.layers) l.heads.resize(heads);
    return c;
  }
};

// Runs the transformer on a block of new rows given cached prefixes; appends
// the block's keys/values. limits[i] is the absolute attention horizon of
// block row i (cached prefix included). Returns the block's logits.
Tensor<float> forward_append(const model::ModelParams<float>& params, KVCache& cache,
                             const Tensor<float>& block, const std::vector<std::size_t>& limits);

// Temperature / top-k categorical draw over one logit row. temperature == 0
// is an argmax with lowest-index tie break.
int sample_logits(const float* logits, int vocab, const SamplerConfig& cfg, Rng draw);

// Called after each scale is sampled and before it is committed; may
// overwrite tokens in place (teacher forcing).
using ForcingHook =
    std::function<void(std::size_t scale_index, sched::GridSize size, std::vector<int>& tokens)>;

struct GenerateResult {
  tok::TokenPyramid pyramid;
  Tensor<float> final_latent;  // dequantized last level (GT) or accumulation (residual)
  Tensor<float> image;
  bool pe_out_of_envelope = false;
};

struct GenerateOptions {
  bool use_kv_cache = true;
  ForcingHook forcing;
};

GenerateResult generate(const model::ModelParams<float>& params,
                        const tok::TokenizerParams<float>& tokenizer, int class_id,
                        const sched::ScaleSchedule& schedule, const SamplerConfig& sampler,
                        const GenerateOptions& options = {});

Tensor<float> decode_at_step(const tok::TokenizerParams<float>& tokenizer,
                             const tok::TokenPyramid& pyramid, std::size_t step);

struct KvEquivalenceReport {
  bool equal = false;
  std::string diff;  // empty when equal
};

KvEquivalenceReport kv_equivalence_check(const model::ModelParams<float>& params,
                                         const tok::TokenizerParams<float>& tokenizer,
                                         int class_id, const sched::ScaleSchedule& schedule,
                                         const SamplerConfig& sampler);

}  // namespace flexvar::infer
