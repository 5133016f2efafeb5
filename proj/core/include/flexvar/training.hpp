#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <unordered_map>
#include <vector>

#include "flexvar/errors.hpp"
#include "flexvar/model.hpp"
#include "flexvar/tape.hpp"
#include "flexvar/tokenizer.hpp"

namespace flexvar::train {

struct Dataset {
  std::vector<Tensor<float>> images;  // 3×H×W in [0,1]
  std::vector<int> labels;
};

// ---- AdamW ----

struct AdamWConfig {
  float lr = 1e-4f;
  float beta1 = 0.9f;
  float beta2 = 0.95f;
  float eps = 1e-8f;
  float weight_decay = 0.05f;
};

struct OptimState {
  struct Moments {
    Tensor<float> m, v;
  };
  std::unordered_map<std::string, Moments> moments;
  long step = 0;  // strictly increasing, bumped once per optimizer_step
};

// Bias-corrected moment update with decoupled weight decay. Throws
// NumericError on non-finite gradients.
void adamw_update(Tensor<float>& param, const Tensor<float>& grad, OptimState::Moments& mo,
                  long step, const AdamWConfig& cfg, const std::string& name);

// One step over a named parameter list; bumps state.step first.
void optimizer_step(const std::vector<std::pair<std::string, Tensor<float>*>>& params,
                    const std::vector<Tensor<float>>& grads, OptimState& state,
                    const AdamWConfig& cfg);

// ---- shared loss-graph builders (float for training, double for checks) ----

// Per-image scalable-VQVAE loss: encode, per-scale quantize with straight-
// through, per-scale decode, three-term loss. Quantizer index decisions may be
// frozen (finite-difference checks) or recorded.
template <typename T>
typename Tape<T>::Id tokenizer_image_loss(Tape<T>& tape, const tok::TokenizerIds<T>& ids,
                                          const tok::TokenizerConfig& cfg, const Tensor<T>& image,
                                          const std::vector<sched::GridSize>& sizes,
                                          const std::vector<std::vector<int>>* frozen_indices,
                                          std::vector<std::vector<int>>* indices_out) {
  auto latent = tok::encode_graph(tape, ids, cfg, image);
  const std::size_t full_h = tape.value(latent).dim(1), full_w = tape.value(latent).dim(2);
  std::vector<typename Tape<T>::Id> targets, recons, latents, quantized;
  for (std::size_t k = 0; k < sizes.size(); ++k) {
    const std::size_t h = sizes[k].h, w = sizes[k].w;
    auto level = (h == full_h && w == full_w) ? latent : tape.bilinear_resize(latent, h, w);
    std::vector<int> idx;
    if (frozen_indices)
      idx = (*frozen_indices)[k];
    else
      idx = tok::quantize_indices(tape.value(level), tape.value(ids.codebook)).indices;
    if (indices_out) indices_out->push_back(idx);
    auto q = tape.nc_to_chw(tape.embedding(ids.codebook, idx), h, w);
    auto st = tape.add(level, tape.stopgrad(tape.sub(q, level)));
    auto recon_rows = tok::decode_rows_graph(tape, ids, st);
    Tensor<T> target_img = kernels::bilinear_resize(image, h * cfg.patch, w * cfg.patch);
    auto target_rows = tape.leaf(tok::patchify(target_img, cfg.patch));
    targets.push_back(target_rows);
    recons.push_back(recon_rows);
    latents.push_back(level);
    quantized.push_back(q);
  }
  return tok::vae_loss(tape, targets, recons, latents, quantized);
}

// Per-image teacher-forced AR cross-entropy.
template <typename T>
typename Tape<T>::Id ar_image_loss(Tape<T>& tape, const model::ModelIds<T>& ids,
                                   const model::ModelConfig& cfg,
                                   const model::SequenceLayout& layout, int class_id,
                                   const std::vector<Tensor<T>>& cond_maps,
                                   const std::vector<int>& targets) {
  auto x = model::embed_inputs_graph(tape, ids, cfg, layout, class_id, cond_maps);
  const PrefixMask mask = model::build_block_causal_mask(layout);
  auto logits = model::forward_graph(tape, ids, cfg, x, mask);
  return tape.cross_entropy(logits, targets);
}

// ---- training loops ----

struct TrainConfig {
  int batch = 8;
  int iterations = 2000;
  float lr = 1e-4f;
  std::uint64_t seed = 0;
  // schedule sampler (AR stage)
  int max_steps = 7;
  double drop_p = 0.05;
  int max_drops = 2;
  float class_drop = 0.1f;  // null-class substitution probability for guidance
  float grad_clip = 1.0f;   // global-norm clip; <= 0 disables
  std::string loss_log;     // append "iter<TAB>loss<TAB>lr" lines when non-empty
};

// Trains the tokenizer in place (Eq.-(5)-shaped loss over K-scale pyramids).
void train_tokenizer(const Dataset& data, tok::TokenizerParams<float>& params,
                     const TrainConfig& cfg);

// Trains the AR model in place against a frozen tokenizer.
void train_ar(const Dataset& data, const tok::TokenizerParams<float>& tokenizer,
              model::ModelParams<float>& params, const TrainConfig& cfg);

// ---- gradient-check harness (64-bit finite differences) ----

struct GradCheckEntry {
  std::string op;
  double max_rel_err = 0.0;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> entries;
  double worst() const {
    double w = 0.0;
    for (const auto& e : entries) w = std::max(w, e.max_rel_err);
    return w;
  }
};

// module_selector: empty = everything; otherwise substring match on op names.
GradCheckReport grad_check(const std::string& module_selector = "");

// ---- id enumeration mirroring visit_params order ----

template <typename T>
void visit_ids(const tok::TokenizerIds<T>& ids,
               const std::function<void(typename Tape<T>::Id)>& fn) {
  auto stack = [&fn](const tok::StackIds<T>& s) {
    fn(s.in_w);
    fn(s.in_b);
    for (const auto& b : s.blocks) {
      fn(b.ln_g);
      fn(b.ln_b);
      fn(b.w1);
      fn(b.b1);
      fn(b.w2);
      fn(b.b2);
    }
    fn(s.out_w);
    fn(s.out_b);
  };
  stack(ids.enc);
  stack(ids.dec);
  fn(ids.codebook);
}

template <typename T>
void visit_ids(const model::ModelIds<T>& ids,
               const std::function<void(typename Tape<T>::Id)>& fn, bool learnable_pe = true) {
  if (learnable_pe) fn(ids.pe);
  fn(ids.class_embed);
  fn(ids.in_w);
  fn(ids.in_b);
  for (const auto& l : ids.layers) {
    fn(l.ln1_g);
    fn(l.ln1_b);
    fn(l.wq);
    fn(l.bq);
    fn(l.wk);
    fn(l.bk);
    fn(l.wv);
    fn(l.bv);
    fn(l.wo);
    fn(l.bo);
    fn(l.ln2_g);
    fn(l.ln2_b);
    fn(l.w1);
    fn(l.b1);
    fn(l.w2);
    fn(l.b2);
  }
  fn(ids.ln_f_g);
  fn(ids.ln_f_b);
  fn(ids.vocab_w);
  fn(ids.vocab_b);
}

}  // namespace flexvar::train
