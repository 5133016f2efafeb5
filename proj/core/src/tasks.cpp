#include "flexvar/tasks.hpp"

#include <cmath>

#include "flexvar/kernels.hpp"

namespace flexvar::tasks {

std::vector<int> mask_to_token_grid(const Tensor<float>& mask, sched::GridSize size) {
  if (mask.rank() != 2) throw std::invalid_argument("mask_to_token_grid: want H×W mask");
  const std::size_t H = mask.dim(0), W = mask.dim(1);
  const std::size_t h = size.h, w = size.w;
  std::vector<int> out(h * w, 0);
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x) {
      const std::size_t r0 = y * H / h, r1 = std::max(r0 + 1, (y + 1) * H / h);
      const std::size_t c0 = x * W / w, c1 = std::max(c0 + 1, (x + 1) * W / w);
      double sum = 0;
      for (std::size_t r = r0; r < r1; ++r)
        for (std::size_t c = c0; c < c1; ++c) sum += mask.at2(r, c);
      const double mean = sum / ((r1 - r0) * (c1 - c0));
      out[y * w + x] = mean > 0.5 ? 1 : 0;  // exact ties preserve
    }
  return out;
}

tok::TokenPyramid forced_pyramid(const tok::TokenizerParams<float>& tokenizer,
                                 const Tensor<float>& latent,
                                 const sched::ScaleSchedule& schedule, model::Mode mode) {
  if (mode == model::Mode::Residual)
    return tok::residual_quantize_pyramid(latent, schedule, tokenizer.codebook);
  return tok::gt_quantize_pyramid(latent, schedule, tokenizer.codebook);
}

Tensor<float> reconstruct(const tok::TokenizerParams<float>& tokenizer,
                          const Tensor<float>& image) {
  const Tensor<float> latent = tok::encode(tokenizer, image);
  const auto q = tok::quantize_indices(latent, tokenizer.codebook);
  const Tensor<float> deq =
      tok::dequantize(tokenizer.codebook, q.indices, latent.dim(1), latent.dim(2));
  return tok::decode(tokenizer, deq);
}

infer::GenerateResult refine(const model::ModelParams<float>& params,
                             const tok::TokenizerParams<float>& tokenizer,
                             const Tensor<float>& image_low,
                             const sched::ScaleSchedule& target_schedule, int class_id,
                             const infer::SamplerConfig& sampler) {
  const Tensor<float> latent = tok::encode(tokenizer, image_low);
  const sched::GridSize grid{static_cast<int>(latent.dim(1)), static_cast<int>(latent.dim(2))};
  std::size_t prefix_end = 0;
  for (std::size_t i = 0; i < target_schedule.steps(); ++i)
    if (target_schedule.sizes[i] == grid) {
      prefix_end = i + 1;
      break;
    }
  if (prefix_end == 0)
    throw std::invalid_argument("refine: input latent grid does not appear in target schedule");

  sched::ScaleSchedule prefix;
  prefix.sizes.assign(target_schedule.sizes.begin(), target_schedule.sizes.begin() + prefix_end);
  const tok::TokenPyramid forced = forced_pyramid(tokenizer, latent, prefix, params.cfg.mode);

  infer::GenerateOptions opt;
  opt.forcing = [&forced, prefix_end](std::size_t scale, sched::GridSize, std::vector<int>& t) {
    if (scale < prefix_end) t = forced.levels[scale];
  };
  return infer::generate(params, tokenizer, class_id, target_schedule, sampler, opt);
}

infer::GenerateResult inpaint(const model::ModelParams<float>& params,
                              const tok::TokenizerParams<float>& tokenizer,
                              const Tensor<float>& image, const Tensor<float>& mask,
                              int class_id, const sched::ScaleSchedule& schedule,
                              const infer::SamplerConfig& sampler) {
  if (mask.rank() != 2 || mask.dim(0) != image.dim(1) || mask.dim(1) != image.dim(2))
    throw std::invalid_argument("inpaint: mask size does not match image size");
  const Tensor<float> latent = tok::encode(tokenizer, image);
  const tok::TokenPyramid gt = forced_pyramid(tokenizer, latent, schedule, params.cfg.mode);

  infer::GenerateOptions opt;
  opt.forcing = [&gt, &mask](std::size_t scale, sched::GridSize size, std::vector<int>& t) {
    const std::vector<int> cells = mask_to_token_grid(mask, size);
    for (std::size_t i = 0; i < t.size(); ++i)
      if (cells[i] == 0) t[i] = gt.levels[scale][i];
  };
  return infer::generate(params, tokenizer, class_id, schedule, sampler, opt);
}

infer::GenerateResult expand(const model::ModelParams<float>& params,
                             const tok::TokenizerParams<float>& tokenizer,
                             const Tensor<float>& image, int class_id,
                             const infer::SamplerConfig& sampler) {
  const Tensor<float> latent = tok::encode(tokenizer, image);
  const int h = static_cast<int>(latent.dim(1));
  const int w_src = static_cast<int>(latent.dim(2));
  const sched::GridSize target{h, 2 * h};
  if (w_src > target.w) throw std::invalid_argument("expand: input wider than the 1:2 target");

  const sched::ScaleSchedule schedule = sched::aspect_schedule(target);
  // Per-scale source widths follow the target widths proportionally; the
  // source "schedule" is only used to quantize the forced center tokens.
  sched::ScaleSchedule source;
  for (const auto s : schedule.sizes) {
    const int ws = std::min(s.w, std::max(1, s.w * w_src / target.w));
    source.sizes.push_back({s.h, ws});
  }
  const tok::TokenPyramid forced = forced_pyramid(tokenizer, latent, source, params.cfg.mode);

  infer::GenerateOptions opt;
  opt.forcing = [&forced, &source](std::size_t scale, sched::GridSize size, std::vector<int>& t) {
    const int ws = source.sizes[scale].w;
    const int off = (size.w - ws) / 2;
    for (int r = 0; r < size.h; ++r)
      for (int c = 0; c < ws; ++c)
        t[static_cast<std::size_t>(r) * size.w + off + c] =
            forced.levels[scale][static_cast<std::size_t>(r) * ws + c];
  };
  return infer::generate(params, tokenizer, class_id, schedule, sampler, opt);
}

}  // namespace flexvar::tasks
