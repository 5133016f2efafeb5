#pragma once

#include <cstddef>
#include <functional>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "flexvar/kernels.hpp"
#include "flexvar/rng.hpp"
#include "flexvar/scheduler.hpp"
#include "flexvar/tape.hpp"
#include "flexvar/tensor.hpp"

namespace flexvar::tok {

struct TokenizerConfig {
  int patch = 8;     // pixels per latent cell, per axis
  int channels = 16; // latent width C
  int vocab = 512;   // codebook size V
  int hidden = 64;   // MLP trunk width
  int blocks = 2;    // residual MLP blocks per stack
  int pyramid_k = 5; // scales per training pyramid
};

template <typename T>
struct MlpBlockParams {
  Tensor<T> ln_g, ln_b, w1, b1, w2, b2;
};

// Shared trunk shape for encoder and decoder: input projection, residual MLP
// blocks at `hidden` width, output projection.
template <typename T>
struct StackParams {
  Tensor<T> in_w, in_b;
  std::vector<MlpBlockParams<T>> blocks;
  Tensor<T> out_w, out_b;
};

template <typename T>
struct TokenizerParams {
  TokenizerConfig cfg;
  StackParams<T> enc;  // p·p·3 -> C
  StackParams<T> dec;  // C -> p·p·3
  Tensor<T> codebook;  // V×C
};

struct TokenPyramid {
  enum class Mode { GT, Residual };
  Mode mode = Mode::GT;
  std::vector<sched::GridSize> sizes;
  std::vector<std::vector<int>> levels;  // row-major h×w index maps

  std::size_t total_tokens() const {
    std::size_t n = 0;
    for (const auto& l : levels) n += l.size();
    return n;
  }
};

// ---- init ----

template <typename T>
StackParams<T> init_stack(int in_dim, int hidden, int out_dim, int blocks, Rng rng) {
  StackParams<T> p;
  auto lin = [&rng](int a, int b) {
    return Tensor<T>::randn({static_cast<std::size_t>(a), static_cast<std::size_t>(b)}, rng,
                            static_cast<T>(1.0 / std::sqrt(static_cast<double>(a))));
  };
  p.in_w = lin(in_dim, hidden);
  p.in_b = Tensor<T>::zeros({static_cast<std::size_t>(hidden)});
  for (int i = 0; i < blocks; ++i) {
    MlpBlockParams<T> b;
    b.ln_g = Tensor<T>::full({static_cast<std::size_t>(hidden)}, T(1));
    b.ln_b = Tensor<T>::zeros({static_cast<std::size_t>(hidden)});
    b.w1 = lin(hidden, hidden * 2);
    b.b1 = Tensor<T>::zeros({static_cast<std::size_t>(hidden * 2)});
    b.w2 = lin(hidden * 2, hidden);
    b.b2 = Tensor<T>::zeros({static_cast<std::size_t>(hidden)});
    p.blocks.push_back(std::move(b));
  }
  p.out_w = lin(hidden, out_dim);
  p.out_b = Tensor<T>::zeros({static_cast<std::size_t>(out_dim)});
  return p;
}

template <typename T>
TokenizerParams<T> init_tokenizer(const TokenizerConfig& cfg, Rng rng) {
  TokenizerParams<T> p;
  p.cfg = cfg;
  const int pix = cfg.patch * cfg.patch * 3;
  p.enc = init_stack<T>(pix, cfg.hidden, cfg.channels, cfg.blocks, rng.stream("enc"));
  p.dec = init_stack<T>(cfg.channels, cfg.hidden, pix, cfg.blocks, rng.stream("dec"));
  Rng cb = rng.stream("codebook");
  p.codebook = Tensor<T>::randn(
      {static_cast<std::size_t>(cfg.vocab), static_cast<std::size_t>(cfg.channels)}, cb, T(0.5));
  return p;
}

template <typename T>
void visit_params(TokenizerParams<T>& p, const std::function<void(const std::string&, Tensor<T>&)>& fn) {
  auto stack = [&fn](const std::string& prefix, StackParams<T>& s) {
    fn(prefix + ".in_w", s.in_w);
    fn(prefix + ".in_b", s.in_b);
    for (std::size_t i = 0; i < s.blocks.size(); ++i) {
      const std::string b = prefix + ".block" + std::to_string(i);
      fn(b + ".ln_g", s.blocks[i].ln_g);
      fn(b + ".ln_b", s.blocks[i].ln_b);
      fn(b + ".w1", s.blocks[i].w1);
      fn(b + ".b1", s.blocks[i].b1);
      fn(b + ".w2", s.blocks[i].w2);
      fn(b + ".b2", s.blocks[i].b2);
    }
    fn(prefix + ".out_w", s.out_w);
    fn(prefix + ".out_b", s.out_b);
  };
  stack("enc", p.enc);
  stack("dec", p.dec);
  fn("codebook", p.codebook);
}

// ---- patch layout (shared by both paths): row-major patches, within a patch
// channel-major then dy, dx ----

template <typename T>
Tensor<T> patchify(const Tensor<T>& image, int patch) {
  if (image.rank() != 3 || image.dim(0) != 3) throw std::invalid_argument("patchify: want 3×H×W");
  const std::size_t H = image.dim(1), W = image.dim(2), p = patch;
  if (H % p != 0 || W % p != 0)
    throw std::invalid_argument("patchify: image size not divisible by patch factor");
  const std::size_t h = H / p, w = W / p, cols = 3 * p * p;
  Tensor<T> out({h * w, cols});
  for (std::size_t py = 0; py < h; ++py)
    for (std::size_t px = 0; px < w; ++px) {
      T* row = &out.data[(py * w + px) * cols];
      std::size_t k = 0;
      for (std::size_t c = 0; c < 3; ++c)
        for (std::size_t dy = 0; dy < p; ++dy)
          for (std::size_t dx = 0; dx < p; ++dx)
            row[k++] = image.at3(c, py * p + dy, px * p + dx);
    }
  return out;
}

template <typename T>
Tensor<T> unpatchify(const Tensor<T>& rows, std::size_t h, std::size_t w, int patch) {
  const std::size_t p = patch, cols = 3 * p * p;
  if (rows.rank() != 2 || rows.dim(0) != h * w || rows.dim(1) != cols)
    throw std::invalid_argument("unpatchify: bad shape");
  Tensor<T> out({3, h * p, w * p});
  for (std::size_t py = 0; py < h; ++py)
    for (std::size_t px = 0; px < w; ++px) {
      const T* row = &rows.data[(py * w + px) * cols];
      std::size_t k = 0;
      for (std::size_t c = 0; c < 3; ++c)
        for (std::size_t dy = 0; dy < p; ++dy)
          for (std::size_t dx = 0; dx < p; ++dx)
            out.at3(c, py * p + dy, px * p + dx) = row[k++];
    }
  return out;
}

// ---- trunk forward, plain and tape; both call the same kernels ----

template <typename T>
Tensor<T> stack_forward(const StackParams<T>& s, const Tensor<T>& x) {
  const std::size_t n = x.dim(0);
  Tensor<T> h({n, s.in_w.dim(1)});
  kernels::matmul(x.data.data(), s.in_w.data.data(), h.data.data(), n, x.dim(1), s.in_w.dim(1));
  kernels::add_row_bias(h.data.data(), s.in_b.data.data(), n, h.dim(1));
  const std::size_t d = h.dim(1);
  for (const auto& b : s.blocks) {
    Tensor<T> normed({n, d});
    for (std::size_t i = 0; i < n; ++i)
      kernels::layer_norm_row(&h.data[i * d], b.ln_g.data.data(), b.ln_b.data.data(),
                              &normed.data[i * d], static_cast<T*>(nullptr), d);
    const std::size_t e = b.w1.dim(1);
    Tensor<T> mid({n, e});
    kernels::matmul(normed.data.data(), b.w1.data.data(), mid.data.data(), n, d, e);
    kernels::add_row_bias(mid.data.data(), b.b1.data.data(), n, e);
    for (auto& v : mid.data) v = kernels::gelu(v);
    Tensor<T> delta({n, d});
    kernels::matmul(mid.data.data(), b.w2.data.data(), delta.data.data(), n, e, d);
    kernels::add_row_bias(delta.data.data(), b.b2.data.data(), n, d);
    for (std::size_t i = 0; i < h.size(); ++i) h.data[i] += delta.data[i];
  }
  Tensor<T> out({n, s.out_w.dim(1)});
  kernels::matmul(h.data.data(), s.out_w.data.data(), out.data.data(), n, d, s.out_w.dim(1));
  kernels::add_row_bias(out.data.data(), s.out_b.data.data(), n, out.dim(1));
  return out;
}

template <typename T>
struct StackIds {
  typename Tape<T>::Id in_w, in_b, out_w, out_b;
  struct Block {
    typename Tape<T>::Id ln_g, ln_b, w1, b1, w2, b2;
  };
  std::vector<Block> blocks;
};

template <typename T>
StackIds<T> lift_stack(Tape<T>& tape, const StackParams<T>& s, bool requires_grad) {
  StackIds<T> ids;
  ids.in_w = tape.leaf(s.in_w, requires_grad);
  ids.in_b = tape.leaf(s.in_b, requires_grad);
  for (const auto& b : s.blocks)
    ids.blocks.push_back({tape.leaf(b.ln_g, requires_grad), tape.leaf(b.ln_b, requires_grad),
                          tape.leaf(b.w1, requires_grad), tape.leaf(b.b1, requires_grad),
                          tape.leaf(b.w2, requires_grad), tape.leaf(b.b2, requires_grad)});
  ids.out_w = tape.leaf(s.out_w, requires_grad);
  ids.out_b = tape.leaf(s.out_b, requires_grad);
  return ids;
}

template <typename T>
typename Tape<T>::Id stack_graph(Tape<T>& tape, const StackIds<T>& s, typename Tape<T>::Id x) {
  auto h = tape.linear(x, s.in_w, s.in_b);
  for (const auto& b : s.blocks) {
    auto normed = tape.layer_norm(h, b.ln_g, b.ln_b);
    auto mid = tape.gelu(tape.linear(normed, b.w1, b.b1));
    h = tape.add(h, tape.linear(mid, b.w2, b.b2));
  }
  return tape.linear(h, s.out_w, s.out_b);
}

// ---- encode / decode ----

template <typename T>
Tensor<T> encode(const TokenizerParams<T>& p, const Tensor<T>& image) {
  const std::size_t h = image.dim(1) / p.cfg.patch, w = image.dim(2) / p.cfg.patch;
  Tensor<T> rows = stack_forward(p.enc, patchify(image, p.cfg.patch));
  // (h·w)×C -> C×h×w
  const std::size_t C = rows.dim(1), n = h * w;
  Tensor<T> out({C, h, w});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t c = 0; c < C; ++c) out.data[c * n + i] = rows.data[i * C + c];
  return out;
}

template <typename T>
Tensor<T> decode(const TokenizerParams<T>& p, const Tensor<T>& level) {
  if (!level.all_finite()) throw std::invalid_argument("decode: non-finite input");
  const std::size_t C = level.dim(0), h = level.dim(1), w = level.dim(2), n = h * w;
  Tensor<T> rows({n, C});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t c = 0; c < C; ++c) rows.data[i * C + c] = level.data[c * n + i];
  return unpatchify(stack_forward(p.dec, rows), h, w, p.cfg.patch);
}

// ---- quantization ----

struct QuantizeResult {
  std::vector<int> indices;  // row-major h×w
  std::size_t h = 0, w = 0;
};

// Euclidean nearest code per position; lowest index wins ties. Distances are
// accumulated as a direct sum of squared differences so tie behavior matches
// the brute-force definition bit-for-bit.
template <typename T>
QuantizeResult quantize_indices(const Tensor<T>& level, const Tensor<T>& codebook) {
  if (level.rank() != 3 || codebook.rank() != 2 || level.dim(0) != codebook.dim(1))
    throw std::invalid_argument("quantize: shape mismatch");
  const std::size_t C = level.dim(0), h = level.dim(1), w = level.dim(2), n = h * w;
  const std::size_t V = codebook.dim(0);
  if (V == 0) throw std::invalid_argument("quantize: empty codebook");
  QuantizeResult r;
  r.h = h;
  r.w = w;
  r.indices.resize(n);
  std::vector<T> f(C);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t c = 0; c < C; ++c) f[c] = level.data[c * n + i];
    T best = std::numeric_limits<T>::infinity();
    int arg = 0;
    for (std::size_t v = 0; v < V; ++v) {
      const T* z = &codebook.data[v * C];
      T d = 0;
      for (std::size_t c = 0; c < C; ++c) {
        const T e = z[c] - f[c];
        d += e * e;
      }
      if (d < best) {
        best = d;
        arg = static_cast<int>(v);
      }
    }
    r.indices[i] = arg;
  }
  return r;
}

template <typename T>
Tensor<T> dequantize(const Tensor<T>& codebook, const std::vector<int>& indices, std::size_t h,
                     std::size_t w) {
  const std::size_t C = codebook.dim(1), n = h * w;
  if (indices.size() != n) throw std::invalid_argument("dequantize: index count mismatch");
  Tensor<T> out({C, h, w});
  for (std::size_t i = 0; i < n; ++i) {
    if (indices[i] < 0 || static_cast<std::size_t>(indices[i]) >= codebook.dim(0))
      throw std::invalid_argument("dequantize: index out of range");
    for (std::size_t c = 0; c < C; ++c) out.data[c * n + i] = codebook.data[indices[i] * C + c];
  }
  return out;
}

template <typename T>
std::pair<QuantizeResult, Tensor<T>> quantize(const Tensor<T>& level, const Tensor<T>& codebook) {
  QuantizeResult r = quantize_indices(level, codebook);
  return {r, dequantize(codebook, r.indices, r.h, r.w)};
}

// ---- pyramids ----

// K-1 intermediate side lengths drawn uniformly without replacement from
// {1..h-1}, widths proportional, sorted; last level is the full grid.
std::vector<sched::GridSize> pyramid_sizes(Rng& rng, int k, sched::GridSize full);

template <typename T>
std::vector<Tensor<T>> sample_scale_pyramid(const Tensor<T>& latent, int k, Rng& rng) {
  const auto sizes = pyramid_sizes(
      rng, k, {static_cast<int>(latent.dim(1)), static_cast<int>(latent.dim(2))});
  std::vector<Tensor<T>> levels;
  for (std::size_t i = 0; i + 1 < sizes.size(); ++i)
    levels.push_back(kernels::bilinear_resize(latent, sizes[i].h, sizes[i].w));
  levels.push_back(latent);  // f_K is the untouched full-resolution latent
  return levels;
}

template <typename T>
TokenPyramid gt_quantize_pyramid(const Tensor<T>& latent, const sched::ScaleSchedule& schedule,
                                 const Tensor<T>& codebook) {
  TokenPyramid out;
  out.mode = TokenPyramid::Mode::GT;
  for (auto s : schedule.sizes) {
    Tensor<T> level = kernels::bilinear_resize(latent, s.h, s.w);
    out.sizes.push_back(s);
    out.levels.push_back(quantize_indices(level, codebook).indices);
  }
  return out;
}

// VAR-style baseline: level 1 quantizes the downsampled ground truth; every
// later level quantizes the residual against the accumulated reconstruction,
// which is maintained at the full grid.
template <typename T>
TokenPyramid residual_quantize_pyramid(const Tensor<T>& latent,
                                       const sched::ScaleSchedule& schedule,
                                       const Tensor<T>& codebook,
                                       Tensor<T>* accumulated_out = nullptr,
                                       std::vector<Tensor<T>>* partials = nullptr) {
  const std::size_t H = latent.dim(1), W = latent.dim(2);
  Tensor<T> accum = Tensor<T>::zeros({latent.dim(0), H, W});
  TokenPyramid out;
  out.mode = TokenPyramid::Mode::Residual;
  for (std::size_t i = 0; i < schedule.sizes.size(); ++i) {
    const auto s = schedule.sizes[i];
    Tensor<T> target = kernels::bilinear_resize(latent, s.h, s.w);
    Tensor<T> residual = target;
    if (i > 0) {
      Tensor<T> base = kernels::bilinear_resize(accum, s.h, s.w);
      for (std::size_t j = 0; j < residual.size(); ++j) residual.data[j] -= base.data[j];
    }
    auto [idx, deq] = quantize(residual, codebook);
    out.sizes.push_back(s);
    out.levels.push_back(idx.indices);
    Tensor<T> up = kernels::bilinear_resize(deq, H, W);
    for (std::size_t j = 0; j < accum.size(); ++j) accum.data[j] += up.data[j];
    if (partials) partials->push_back(accum);
  }
  if (accumulated_out) *accumulated_out = std::move(accum);
  return out;
}

// ---- tape-side graph builders (training / gradient checks) ----

template <typename T>
struct TokenizerIds {
  StackIds<T> enc, dec;
  typename Tape<T>::Id codebook;
};

template <typename T>
TokenizerIds<T> lift_tokenizer(Tape<T>& tape, const TokenizerParams<T>& p, bool requires_grad) {
  return {lift_stack(tape, p.enc, requires_grad), lift_stack(tape, p.dec, requires_grad),
          tape.leaf(p.codebook, requires_grad)};
}

template <typename T>
typename Tape<T>::Id encode_graph(Tape<T>& tape, const TokenizerIds<T>& ids,
                                  const TokenizerConfig& cfg, const Tensor<T>& image) {
  const std::size_t h = image.dim(1) / cfg.patch, w = image.dim(2) / cfg.patch;
  auto x = tape.leaf(patchify(image, cfg.patch));
  return tape.nc_to_chw(stack_graph(tape, ids.enc, x), h, w);
}

// Decoder output stays in patch-row layout (h·w)×(3·p·p); callers unpatchify
// values when an actual image is needed. Losses over rows and over the
// unpatchified image range over the same elements.
template <typename T>
typename Tape<T>::Id decode_rows_graph(Tape<T>& tape, const TokenizerIds<T>& ids,
                                       typename Tape<T>::Id level) {
  return stack_graph(tape, ids.dec, tape.chw_to_nc(level));
}

// Eq.-(5)-shaped three-term loss over aligned per-scale lists.
template <typename T>
typename Tape<T>::Id vae_loss(Tape<T>& tape, const std::vector<typename Tape<T>::Id>& targets,
                              const std::vector<typename Tape<T>::Id>& recons,
                              const std::vector<typename Tape<T>::Id>& latents,
                              const std::vector<typename Tape<T>::Id>& quantized, T beta = T(0.25)) {
  if (targets.size() != recons.size() || latents.size() != quantized.size() ||
      targets.size() != latents.size())
    throw std::invalid_argument("vae_loss: per-scale list length mismatch");
  // Each term is a per-element mean, so without correction a small scale would
  // weight each of its cells far more than a full-scale cell (a 1x1 level's lone
  // cell would count 64x an 8x8 cell's). Weight every scale by its cell count,
  // normalized so the total keeps the plain-sum magnitude when sizes are equal.
  double total_cells = 0.0;
  for (const auto& l : latents) {
    const auto& v = tape.value(l);
    total_cells += static_cast<double>(v.dim(1)) * static_cast<double>(v.dim(2));
  }
  typename Tape<T>::Id loss = tape.leaf(Tensor<T>({1}, {T(0)}));
  for (std::size_t k = 0; k < targets.size(); ++k) {
    auto recon = tape.mse(targets[k], recons[k]);
    auto codebook_term = tape.mse(tape.stopgrad(latents[k]), quantized[k]);
    auto commit = tape.scale(tape.mse(latents[k], tape.stopgrad(quantized[k])), beta);
    const auto& lv = tape.value(latents[k]);
    const T wk = static_cast<T>(static_cast<double>(lv.dim(1)) * static_cast<double>(lv.dim(2)) *
                                static_cast<double>(latents.size()) / total_cells);
    loss = tape.add(loss, tape.scale(tape.add(recon, tape.add(codebook_term, commit)), wk));
  }
  return loss;
}

}  // namespace flexvar::tok
