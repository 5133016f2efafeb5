#include "flexvar/inference.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>

#include "flexvar/kernels.hpp"

namespace flexvar::infer {

namespace {

void layer_norm_rows(const Tensor<float>& x, const Tensor<float>& g, const Tensor<float>& b,
                     Tensor<float>& out) {
  const std::size_t n = x.dim(0), m = x.dim(1);
  for (std::size_t i = 0; i < n; ++i)
    kernels::layer_norm_row(&x.data[i * m], g.data.data(), b.data.data(), &out.data[i * m],
                            static_cast<float*>(nullptr), m);
}

Tensor<float> linear_rows(const Tensor<float>& x, const Tensor<float>& w,
                          const Tensor<float>& b) {
  const std::size_t n = x.dim(0), k = x.dim(1), m = w.dim(1);
  Tensor<float> out({n, m});
  kernels::matmul(x.data.data(), w.data.data(), out.data.data(), n, k, m);
  kernels::add_row_bias(out.data.data(), b.data.data(), n, m);
  return out;
}

}  // namespace

Tensor<float> forward_append(const model::ModelParams<float>& params, KVCache& cache,
                             const Tensor<float>& block, const std::vector<std::size_t>& limits) {
  const auto& cfg = params.cfg;
  const std::size_t B = block.dim(0), D = cfg.dim;
  const std::size_t heads = cfg.heads, dh = D / heads;
  const float inv = static_cast<float>(1.0 / std::sqrt(static_cast<double>(dh)));
  if (limits.size() != B) throw std::invalid_argument("forward_append: limits size mismatch");

  Tensor<float> x = block;
  Tensor<float> n1({B, D});
  for (std::size_t l = 0; l < params.layers.size(); ++l) {
    const auto& L = params.layers[l];
    layer_norm_rows(x, L.ln1_g, L.ln1_b, n1);
    Tensor<float> q = linear_rows(n1, L.wq, L.bq);
    Tensor<float> k = linear_rows(n1, L.wk, L.bk);
    Tensor<float> v = linear_rows(n1, L.wv, L.bv);

    auto& lc = cache.layers[l];
    // Append the block's per-head key/value rows.
    for (std::size_t h = 0; h < heads; ++h) {
      auto& hc = lc.heads[h];
      for (std::size_t i = 0; i < B; ++i)
        hc.k.insert(hc.k.end(), &k.data[i * D + h * dh], &k.data[i * D + h * dh] + dh);
      for (std::size_t i = 0; i < B; ++i)
        hc.v.insert(hc.v.end(), &v.data[i * D + h * dh], &v.data[i * D + h * dh] + dh);
    }

    Tensor<float> attn({B, D});
    std::vector<float> scores;
    for (std::size_t h = 0; h < heads; ++h) {
      const auto& hc = lc.heads[h];
      for (std::size_t i = 0; i < B; ++i) {
        const std::size_t lim = limits[i];
        scores.assign(lim, 0.0f);
        const float* qi = &q.data[i * D + h * dh];
        for (std::size_t j = 0; j < lim; ++j)
          scores[j] = kernels::dot(qi, &hc.k[j * dh], dh) * inv;
        kernels::softmax_prefix(scores.data(), lim, lim);
        float* out = &attn.data[i * D + h * dh];
        std::fill(out, out + dh, 0.0f);
        for (std::size_t j = 0; j < lim; ++j) {
          const float p = scores[j];
          const float* vrow = &hc.v[j * dh];
          for (std::size_t c = 0; c < dh; ++c) out[c] += p * vrow[c];
        }
      }
    }
    Tensor<float> proj = linear_rows(attn, L.wo, L.bo);
    for (std::size_t i = 0; i < x.size(); ++i) x.data[i] += proj.data[i];

    layer_norm_rows(x, L.ln2_g, L.ln2_b, n1);
    Tensor<float> mid = linear_rows(n1, L.w1, L.b1);
    for (auto& mval : mid.data) mval = kernels::gelu(mval);
    Tensor<float> delta = linear_rows(mid, L.w2, L.b2);
    for (std::size_t i = 0; i < x.size(); ++i) x.data[i] += delta.data[i];
    if (!x.all_finite())
      throw NumericError("forward: non-finite activations in layer " + std::to_string(l));
  }
  cache.cursor += B;
  Tensor<float> nf({B, D});
  layer_norm_rows(x, params.ln_f_g, params.ln_f_b, nf);
  return linear_rows(nf, params.vocab_w, params.vocab_b);
}

int sample_logits(const float* logits, int vocab, const SamplerConfig& cfg, Rng draw) {
  if (cfg.temperature == 0.0f) {
    int best = 0;
    for (int i = 1; i < vocab; ++i)
      if (logits[i] > logits[best]) best = i;
    return best;
  }
  int k = cfg.top_k;
  if (k <= 0 || k > vocab) k = vocab;
  std::vector<int> order(vocab);
  std::iota(order.begin(), order.end(), 0);
  std::partial_sort(order.begin(), order.begin() + k, order.end(), [&](int a, int b) {
    if (logits[a] != logits[b]) return logits[a] > logits[b];
    return a < b;
  });
  // Softmax over the kept set at the configured temperature.
  std::vector<double> p(k);
  const double mx = logits[order[0]];
  double sum = 0.0;
  for (int i = 0; i < k; ++i) {
    p[i] = std::exp((logits[order[i]] - mx) / cfg.temperature);
    sum += p[i];
  }
  const double u = draw.uniform() * sum;
  double c = 0.0;
  for (int i = 0; i < k; ++i) {
    c += p[i];
    if (u < c) return order[i];
  }
  return order[k - 1];
}

GenerateResult generate(const model::ModelParams<float>& params,
                        const tok::TokenizerParams<float>& tokenizer, int class_id,
                        const sched::ScaleSchedule& schedule, const SamplerConfig& sampler,
                        const GenerateOptions& options) {
  const auto& cfg = params.cfg;
  const auto layout = model::SequenceLayout::from(schedule);
  const auto full = schedule.full();
  const std::size_t H = full.h, W = full.w;
  const bool guided = sampler.guidance != 0.0f;
  const bool residual = cfg.mode == model::Mode::Residual;

  GenerateResult result;
  result.pyramid.mode =
      residual ? tok::TokenPyramid::Mode::Residual : tok::TokenPyramid::Mode::GT;
  if (model::pe_out_of_envelope(params.pe.dim(1), params.pe.dim(2), H, W)) {
    result.pe_out_of_envelope = true;
    std::fprintf(stderr,
                 "flexvar: warning: target grid %zux%zu exceeds the stored PE extent %zux%zu; "
                 "quality degrades beyond it\n",
                 H, W, params.pe.dim(1), params.pe.dim(2));
  }

  KVCache cond_cache = KVCache::make(cfg.depth, cfg.heads);
  KVCache uncond_cache = KVCache::make(cfg.depth, cfg.heads);
  Rng base(sampler.seed);
  Rng sample_rng = base.stream("sample");

  Tensor<float> accum =
      Tensor<float>::zeros({static_cast<std::size_t>(cfg.latent_channels), H, W});
  Tensor<float> prev_map;  // conditioning source for the next scale
  std::vector<Tensor<float>> cond_rows_history, uncond_rows_history;

  for (std::size_t j = 0; j < schedule.steps(); ++j) {
    const auto size = schedule.sizes[j];
    const std::size_t n = static_cast<std::size_t>(size.h) * size.w;
    const Tensor<float>* src = j == 0 ? nullptr : &prev_map;

    Tensor<float> rows_c = model::scale_input_rows(params, class_id, size, src);
    Tensor<float> rows_u;
    if (guided) rows_u = model::scale_input_rows(params, params.null_class(), size, src);

    Tensor<float> logits_c, logits_u;
    if (options.use_kv_cache) {
      std::vector<std::size_t> limits(n, cond_cache.cursor + n);
      logits_c = forward_append(params, cond_cache, rows_c, limits);
      if (guided) logits_u = forward_append(params, uncond_cache, rows_u, limits);
    } else {
      // Cache-free oracle path: recompute the whole prefix each scale.
      cond_rows_history.push_back(rows_c);
      if (guided) uncond_rows_history.push_back(rows_u);
      auto run_full = [&](const std::vector<Tensor<float>>& history) {
        KVCache fresh = KVCache::make(cfg.depth, cfg.heads);
        std::size_t total = 0;
        for (const auto& r : history) total += r.dim(0);
        Tensor<float> all({total, static_cast<std::size_t>(cfg.dim)});
        std::vector<std::size_t> limits(total);
        std::size_t off = 0;
        for (const auto& r : history) {
          std::copy(r.data.begin(), r.data.end(), &all.data[off * cfg.dim]);
          for (std::size_t i = 0; i < r.dim(0); ++i) limits[off + i] = off + r.dim(0);
          off += r.dim(0);
        }
        Tensor<float> logits = forward_append(params, fresh, all, limits);
        Tensor<float> tail({n, static_cast<std::size_t>(cfg.vocab)});
        std::copy(&logits.data[(total - n) * cfg.vocab], &logits.data[total * cfg.vocab],
                  tail.data.begin());
        return tail;
      };
      logits_c = run_full(cond_rows_history);
      if (guided) logits_u = run_full(uncond_rows_history);
    }

    // cond + s*(cond - uncond); s == 0 never consults the null stream.
    Tensor<float> mixed = logits_c;
    if (guided) {
      for (std::size_t i = 0; i < mixed.size(); ++i)
        mixed.data[i] = logits_c.data[i] + sampler.guidance * (logits_c.data[i] - logits_u.data[i]);
    }

    std::vector<int> tokens(n);
    Rng scale_rng = sample_rng.stream(j);
    for (std::size_t i = 0; i < n; ++i)
      tokens[i] = sample_logits(&mixed.data[i * cfg.vocab], cfg.vocab, sampler, scale_rng.stream(i));

    if (options.forcing) options.forcing(j, size, tokens);

    result.pyramid.sizes.push_back(size);
    result.pyramid.levels.push_back(tokens);

    Tensor<float> deq = tok::dequantize(tokenizer.codebook, tokens, size.h, size.w);
    if (residual) {
      Tensor<float> up = kernels::bilinear_resize(deq, H, W);
      for (std::size_t i = 0; i < accum.size(); ++i) accum.data[i] += up.data[i];
      prev_map = accum;
    } else {
      prev_map = std::move(deq);
    }
  }

  result.final_latent = residual
                            ? accum
                            : tok::dequantize(tokenizer.codebook, result.pyramid.levels.back(),
                                              H, W);
  result.image = tok::decode(tokenizer, result.final_latent);
  return result;
}

Tensor<float> decode_at_step(const tok::TokenizerParams<float>& tokenizer,
                             const tok::TokenPyramid& pyramid, std::size_t step) {
  if (step >= pyramid.levels.size())
    throw std::invalid_argument("decode_at_step: step out of range");
  const auto size = pyramid.sizes[step];
  if (pyramid.mode == tok::TokenPyramid::Mode::GT)
    return tok::decode(tokenizer,
                       tok::dequantize(tokenizer.codebook, pyramid.levels[step], size.h, size.w));
  // Residual baseline: decode the accumulation through this step.
  const auto full = pyramid.sizes[step];
  Tensor<float> accum = Tensor<float>::zeros(
      {tokenizer.codebook.dim(1), static_cast<std::size_t>(full.h),
       static_cast<std::size_t>(full.w)});
  for (std::size_t i = 0; i <= step; ++i) {
    Tensor<float> deq = tok::dequantize(tokenizer.codebook, pyramid.levels[i],
                                        pyramid.sizes[i].h, pyramid.sizes[i].w);
    Tensor<float> up = kernels::bilinear_resize(deq, full.h, full.w);
    for (std::size_t k = 0; k < accum.size(); ++k) accum.data[k] += up.data[k];
  }
  return tok::decode(tokenizer, accum);
}

KvEquivalenceReport kv_equivalence_check(const model::ModelParams<float>& params,
                                         const tok::TokenizerParams<float>& tokenizer,
                                         int class_id, const sched::ScaleSchedule& schedule,
                                         const SamplerConfig& sampler) {
  GenerateOptions with, without;
  with.use_kv_cache = true;
  without.use_kv_cache = false;
  auto a = generate(params, tokenizer, class_id, schedule, sampler, with);
  auto b = generate(params, tokenizer, class_id, schedule, sampler, without);
  KvEquivalenceReport rep;
  rep.equal = a.pyramid.levels == b.pyramid.levels;
  if (!rep.equal) {
    std::ostringstream os;
    for (std::size_t j = 0; j < a.pyramid.levels.size(); ++j) {
      if (a.pyramid.levels[j] == b.pyramid.levels[j]) continue;
      os << "scale " << j << " (" << a.pyramid.sizes[j].h << "x" << a.pyramid.sizes[j].w
         << "): first mismatch at ";
      for (std::size_t i = 0; i < a.pyramid.levels[j].size(); ++i)
        if (a.pyramid.levels[j][i] != b.pyramid.levels[j][i]) {
          os << "position " << i << " cached=" << a.pyramid.levels[j][i]
             << " direct=" << b.pyramid.levels[j][i] << "\n";
          break;
        }
    }
    rep.diff = os.str();
  }
  return rep;
}

}  // namespace flexvar::infer
