#pragma once

#include "flexvar/inference.hpp"
#include "flexvar/model.hpp"
#include "flexvar/scheduler.hpp"
#include "flexvar/tensor.hpp"
#include "flexvar/tokenizer.hpp"

namespace flexvar::tasks {

// Pixel mask convention: H×W, 1 = region to generate, 0 = region to preserve.

// Mean-pools a pixel mask onto a token grid. A cell samples the pixels it
// covers; it becomes "generate" (1) only when the pooled mean exceeds 0.5 —
// exact ties stay "preserve" (0).
std::vector<int> mask_to_token_grid(const Tensor<float>& mask, sched::GridSize size);

// The per-scale token pyramid an editing task teacher-forces: GT quantization
// of `latent` at every schedule scale (mode-matched to the model).
tok::TokenPyramid forced_pyramid(const tok::TokenizerParams<float>& tokenizer,
                                 const Tensor<float>& latent,
                                 const sched::ScaleSchedule& schedule, model::Mode mode);

// Full-grid tokenizer round trip (encode → quantize → dequantize → decode).
Tensor<float> reconstruct(const tok::TokenizerParams<float>& tokenizer,
                          const Tensor<float>& image);

// Teacher-forces the quantized pyramid of `image_low` as a schedule prefix up
// to and including the input's latent grid, then samples the larger scales.
infer::GenerateResult refine(const model::ModelParams<float>& params,
                             const tok::TokenizerParams<float>& tokenizer,
                             const Tensor<float>& image_low,
                             const sched::ScaleSchedule& target_schedule, int class_id,
                             const infer::SamplerConfig& sampler);

// Re-samples only mask=1 cells; every preserve cell is overwritten with the
// GT token before the scale is committed. Outpainting is the same operation
// with a border mask.
infer::GenerateResult inpaint(const model::ModelParams<float>& params,
                              const tok::TokenizerParams<float>& tokenizer,
                              const Tensor<float>& image, const Tensor<float>& mask,
                              int class_id, const sched::ScaleSchedule& schedule,
                              const infer::SamplerConfig& sampler);

// Expands a square-ish input to a 1:2 aspect target, forcing the centered
// column range to the input's GT tokens at every scale.
infer::GenerateResult expand(const model::ModelParams<float>& params,
                             const tok::TokenizerParams<float>& tokenizer,
                             const Tensor<float>& image, int class_id,
                             const infer::SamplerConfig& sampler);

}  // namespace flexvar::tasks
