#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "flexvar/errors.hpp"
#include "flexvar/kernels.hpp"
#include "flexvar/scheduler.hpp"
#include "flexvar/tape.hpp"
#include "flexvar/tensor.hpp"
#include "flexvar/tokenizer.hpp"

namespace flexvar::model {

enum class Mode { GT, Residual };

struct ModelConfig {
  int depth = 4;
  int dim = 128;
  int heads = 4;
  int vocab = 512;
  int class_count = 8;
  int latent_channels = 16;  // tokenizer C, input to the scale projection
  int pe_extent_h = 16;      // 2× the max training latent grid
  int pe_extent_w = 16;
  Mode mode = Mode::GT;
};

struct SequenceLayout {
  sched::ScaleSchedule schedule;
  std::vector<std::size_t> offsets;  // start of each scale
  std::size_t total = 0;

  static SequenceLayout from(const sched::ScaleSchedule& s) {
    SequenceLayout l;
    l.schedule = s;
    std::size_t off = 0;
    for (auto g : s.sizes) {
      l.offsets.push_back(off);
      off += static_cast<std::size_t>(g.h) * g.w;
    }
    l.total = off;
    return l;
  }

  std::size_t scale_end(std::size_t i) const {
    return i + 1 < offsets.size() ? offsets[i + 1] : total;
  }
};

// ---- scalable positional embedding ----

// Channels [0, d/2) encode the row coordinate, [d/2, d) the column, each as
// interleaved sin/cos at frequencies 10000^(-4j/d).
template <typename T>
Tensor<T> sincos_init(int d, int h2, int w2) {
  if (d % 4 != 0) throw std::invalid_argument("sincos_init: d must be divisible by 4");
  Tensor<T> pe({static_cast<std::size_t>(d), static_cast<std::size_t>(h2),
                static_cast<std::size_t>(w2)});
  const int quarter = d / 4;
  for (int j = 0; j < quarter; ++j) {
    const double omega = std::pow(10000.0, -4.0 * j / d);
    for (int r = 0; r < h2; ++r)
      for (int c = 0; c < w2; ++c) {
        pe.at3(2 * j, r, c) = static_cast<T>(std::sin(r * omega));
        pe.at3(2 * j + 1, r, c) = static_cast<T>(std::cos(r * omega));
        pe.at3(d / 2 + 2 * j, r, c) = static_cast<T>(std::sin(c * omega));
        pe.at3(d / 2 + 2 * j + 1, r, c) = static_cast<T>(std::cos(c * omega));
      }
  }
  return pe;
}

inline bool pe_out_of_envelope(std::size_t stored_h, std::size_t stored_w, std::size_t h,
                               std::size_t w) {
  return h > stored_h || w > stored_w;
}

template <typename T>
Tensor<T> pe_at_scale(const Tensor<T>& pe, std::size_t h, std::size_t w) {
  if (h == pe.dim(1) && w == pe.dim(2)) return pe;
  return kernels::bilinear_resize(pe, h, w);
}

// ---- attention mask ----

// Tokens are scale-major, so "attend to own and all earlier scales" is a
// per-row prefix: row t sees [0, end of t's scale).
inline PrefixMask build_block_causal_mask(const SequenceLayout& layout) {
  PrefixMask m;
  m.limit.resize(layout.total);
  for (std::size_t i = 0; i < layout.schedule.steps(); ++i)
    for (std::size_t t = layout.offsets[i]; t < layout.scale_end(i); ++t)
      m.limit[t] = layout.scale_end(i);
  return m;
}

inline std::vector<std::vector<bool>> mask_matrix(const PrefixMask& m) {
  std::vector<std::vector<bool>> out(m.limit.size(),
                                     std::vector<bool>(m.limit.size(), false));
  for (std::size_t t = 0; t < m.limit.size(); ++t)
    for (std::size_t s = 0; s < m.limit[t]; ++s) out[t][s] = true;
  return out;
}

// ---- parameters ----

template <typename T>
struct LayerParams {
  Tensor<T> ln1_g, ln1_b, wq, bq, wk, bk, wv, bv, wo, bo;
  Tensor<T> ln2_g, ln2_b, w1, b1, w2, b2;
};

template <typename T>
struct ModelParams {
  ModelConfig cfg;
  Tensor<T> pe;           // dim × pe_extent_h × pe_extent_w
  Tensor<T> class_embed;  // (class_count+1) × dim, last row = null class
  Tensor<T> in_w, in_b;   // latent_channels -> dim
  std::vector<LayerParams<T>> layers;
  Tensor<T> ln_f_g, ln_f_b;
  Tensor<T> vocab_w, vocab_b;  // dim -> vocab

  int null_class() const { return cfg.class_count; }
};

template <typename T>
ModelParams<T> init_model(const ModelConfig& cfg, Rng rng) {
  if (cfg.dim % cfg.heads != 0) throw std::invalid_argument("init_model: dim % heads != 0");
  ModelParams<T> p;
  p.cfg = cfg;
  p.pe = sincos_init<T>(cfg.dim, cfg.pe_extent_h, cfg.pe_extent_w);
  auto lin = [&rng](int a, int b) {
    return Tensor<T>::randn({static_cast<std::size_t>(a), static_cast<std::size_t>(b)}, rng,
                            static_cast<T>(1.0 / std::sqrt(static_cast<double>(a))));
  };
  auto zeros = [](int n) { return Tensor<T>::zeros({static_cast<std::size_t>(n)}); };
  auto ones = [](int n) { return Tensor<T>::full({static_cast<std::size_t>(n)}, T(1)); };
  Rng r2 = rng.stream("model");
  p.class_embed = Tensor<T>::randn(
      {static_cast<std::size_t>(cfg.class_count + 1), static_cast<std::size_t>(cfg.dim)}, r2,
      T(0.02));
  p.in_w = lin(cfg.latent_channels, cfg.dim);
  p.in_b = zeros(cfg.dim);
  for (int l = 0; l < cfg.depth; ++l) {
    LayerParams<T> lp;
    lp.ln1_g = ones(cfg.dim);
    lp.ln1_b = zeros(cfg.dim);
    lp.wq = lin(cfg.dim, cfg.dim);
    lp.bq = zeros(cfg.dim);
    lp.wk = lin(cfg.dim, cfg.dim);
    lp.bk = zeros(cfg.dim);
    lp.wv = lin(cfg.dim, cfg.dim);
    lp.bv = zeros(cfg.dim);
    lp.wo = lin(cfg.dim, cfg.dim);
    lp.bo = zeros(cfg.dim);
    lp.ln2_g = ones(cfg.dim);
    lp.ln2_b = zeros(cfg.dim);
    lp.w1 = lin(cfg.dim, cfg.dim * 4);
    lp.b1 = zeros(cfg.dim * 4);
    lp.w2 = lin(cfg.dim * 4, cfg.dim);
    lp.b2 = zeros(cfg.dim);
    p.layers.push_back(std::move(lp));
  }
  p.ln_f_g = ones(cfg.dim);
  p.ln_f_b = zeros(cfg.dim);
  p.vocab_w = lin(cfg.dim, cfg.vocab);
  p.vocab_b = zeros(cfg.vocab);
  return p;
}

template <typename T>
void visit_params(ModelParams<T>& p, const std::function<void(const std::string&, Tensor<T>&)>& fn,
                  bool learnable_pe = true) {
  if (learnable_pe) fn("pe", p.pe);
  fn("class_embed", p.class_embed);
  fn("in_w", p.in_w);
  fn("in_b", p.in_b);
  for (std::size_t l = 0; l < p.layers.size(); ++l) {
    const std::string pre = "layer" + std::to_string(l);
    auto& lp = p.layers[l];
    fn(pre + ".ln1_g", lp.ln1_g);
    fn(pre + ".ln1_b", lp.ln1_b);
    fn(pre + ".wq", lp.wq);
    fn(pre + ".bq", lp.bq);
    fn(pre + ".wk", lp.wk);
    fn(pre + ".bk", lp.bk);
    fn(pre + ".wv", lp.wv);
    fn(pre + ".bv", lp.bv);
    fn(pre + ".wo", lp.wo);
    fn(pre + ".bo", lp.bo);
    fn(pre + ".ln2_g", lp.ln2_g);
    fn(pre + ".ln2_b", lp.ln2_b);
    fn(pre + ".w1", lp.w1);
    fn(pre + ".b1", lp.b1);
    fn(pre + ".w2", lp.w2);
    fn(pre + ".b2", lp.b2);
  }
  fn("ln_f_g", p.ln_f_g);
  fn("ln_f_b", p.ln_f_b);
  fn("vocab_w", p.vocab_w);
  fn("vocab_b", p.vocab_b);
}

// ---- input embedding ----

// Conditioning maps for scales 2..n. In GT mode, entry j-2 is the dequantized
// previous-scale map; in residual mode it is the accumulated reconstruction.
// Each is resized to the scale's grid, projected to model width, then PE at
// that grid is added. Scale 1 is the class start unit. No step embedding.
// Input rows for one scale: the class start unit when src == nullptr,
// otherwise the conditioning map resized to the grid and projected; PE at the
// grid is added either way. Shared by teacher-forced training and the
// cache-based sampler, so both embed identically.
template <typename T>
Tensor<T> scale_input_rows(const ModelParams<T>& p, int class_id, sched::GridSize size,
                           const Tensor<T>* src) {
  if (class_id < 0 || class_id > p.cfg.class_count)
    throw std::invalid_argument("embed_inputs: class id out of range");
  const std::size_t h = size.h, w = size.w, n = h * w, D = p.cfg.dim;
  Tensor<T> rows({n, D});
  if (!src) {
    for (std::size_t i = 0; i < n; ++i)
      std::copy(&p.class_embed.data[class_id * D], &p.class_embed.data[class_id * D] + D,
                &rows.data[i * D]);
  } else {
    if (src->rank() != 3 || src->dim(0) != static_cast<std::size_t>(p.cfg.latent_channels))
      throw std::invalid_argument("embed_inputs: bad conditioning map");
    Tensor<T> map = kernels::bilinear_resize(*src, h, w);
    const std::size_t C = map.dim(0);
    Tensor<T> nc({n, C});
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t c = 0; c < C; ++c) nc.data[i * C + c] = map.data[c * n + i];
    kernels::matmul(nc.data.data(), p.in_w.data.data(), rows.data.data(), n, C, D);
    kernels::add_row_bias(rows.data.data(), p.in_b.data.data(), n, D);
  }
  Tensor<T> pe = pe_at_scale(p.pe, h, w);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t d = 0; d < D; ++d) rows.data[i * D + d] += pe.data[d * n + i];
  return rows;
}

template <typename T>
Tensor<T> embed_inputs(const ModelParams<T>& p, const SequenceLayout& layout, int class_id,
                       const std::vector<Tensor<T>>& cond_maps) {
  const auto& sizes = layout.schedule.sizes;
  if (cond_maps.size() + 1 != sizes.size())
    throw std::invalid_argument("embed_inputs: conditioning maps do not match schedule");
  const std::size_t D = p.cfg.dim;
  Tensor<T> x({layout.total, D});
  for (std::size_t j = 0; j < sizes.size(); ++j) {
    Tensor<T> rows = scale_input_rows(p, class_id, sizes[j], j == 0 ? nullptr : &cond_maps[j - 1]);
    std::copy(rows.data.begin(), rows.data.end(), &x.data[layout.offsets[j] * D]);
  }
  return x;
}

// ---- tape forward (training path) ----

template <typename T>
struct LayerIds {
  typename Tape<T>::Id ln1_g, ln1_b, wq, bq, wk, bk, wv, bv, wo, bo;
  typename Tape<T>::Id ln2_g, ln2_b, w1, b1, w2, b2;
};

template <typename T>
struct ModelIds {
  typename Tape<T>::Id pe, class_embed, in_w, in_b;
  std::vector<LayerIds<T>> layers;
  typename Tape<T>::Id ln_f_g, ln_f_b, vocab_w, vocab_b;
};

template <typename T>
ModelIds<T> lift_model(Tape<T>& tape, const ModelParams<T>& p, bool requires_grad,
                       bool learnable_pe = true) {
  ModelIds<T> ids;
  ids.pe = tape.leaf(p.pe, requires_grad && learnable_pe);
  ids.class_embed = tape.leaf(p.class_embed, requires_grad);
  ids.in_w = tape.leaf(p.in_w, requires_grad);
  ids.in_b = tape.leaf(p.in_b, requires_grad);
  for (const auto& l : p.layers) {
    LayerIds<T> li;
    li.ln1_g = tape.leaf(l.ln1_g, requires_grad);
    li.ln1_b = tape.leaf(l.ln1_b, requires_grad);
    li.wq = tape.leaf(l.wq, requires_grad);
    li.bq = tape.leaf(l.bq, requires_grad);
    li.wk = tape.leaf(l.wk, requires_grad);
    li.bk = tape.leaf(l.bk, requires_grad);
    li.wv = tape.leaf(l.wv, requires_grad);
    li.bv = tape.leaf(l.bv, requires_grad);
    li.wo = tape.leaf(l.wo, requires_grad);
    li.bo = tape.leaf(l.bo, requires_grad);
    li.ln2_g = tape.leaf(l.ln2_g, requires_grad);
    li.ln2_b = tape.leaf(l.ln2_b, requires_grad);
    li.w1 = tape.leaf(l.w1, requires_grad);
    li.b1 = tape.leaf(l.b1, requires_grad);
    li.w2 = tape.leaf(l.w2, requires_grad);
    li.b2 = tape.leaf(l.b2, requires_grad);
    ids.layers.push_back(li);
  }
  ids.ln_f_g = tape.leaf(p.ln_f_g, requires_grad);
  ids.ln_f_b = tape.leaf(p.ln_f_b, requires_grad);
  ids.vocab_w = tape.leaf(p.vocab_w, requires_grad);
  ids.vocab_b = tape.leaf(p.vocab_b, requires_grad);
  return ids;
}

// Tape-side input embedding; differentiable into class table, projection and
// the PE grid.
template <typename T>
typename Tape<T>::Id embed_inputs_graph(Tape<T>& tape, const ModelIds<T>& ids,
                                        const ModelConfig& cfg, const SequenceLayout& layout,
                                        int class_id, const std::vector<Tensor<T>>& cond_maps) {
  const auto& sizes = layout.schedule.sizes;
  if (cond_maps.size() + 1 != sizes.size())
    throw std::invalid_argument("embed_inputs: conditioning maps do not match schedule");
  std::vector<typename Tape<T>::Id> parts;
  for (std::size_t j = 0; j < sizes.size(); ++j) {
    const std::size_t h = sizes[j].h, w = sizes[j].w, n = h * w;
    typename Tape<T>::Id rows;
    if (j == 0) {
      rows = tape.embedding(ids.class_embed, std::vector<int>(n, class_id));
    } else {
      auto src = tape.leaf(cond_maps[j - 1]);
      auto map = tape.chw_to_nc(tape.bilinear_resize(src, h, w));
      rows = tape.linear(map, ids.in_w, ids.in_b);
    }
    auto pe = tape.chw_to_nc(tape.bilinear_resize(ids.pe, h, w));
    parts.push_back(tape.add(rows, pe));
  }
  return tape.concat_rows(parts);
}

template <typename T>
typename Tape<T>::Id multi_head_attention_graph(Tape<T>& tape, typename Tape<T>::Id q,
                                                typename Tape<T>::Id k, typename Tape<T>::Id v,
                                                int heads, const PrefixMask* mask) {
  const std::size_t D = tape.value(q).dim(1);
  const std::size_t dh = D / heads;
  const T inv = static_cast<T>(1.0 / std::sqrt(static_cast<double>(dh)));
  std::vector<typename Tape<T>::Id> outs;
  for (int hidx = 0; hidx < heads; ++hidx) {
    auto qh = tape.slice_cols(q, hidx * dh, (hidx + 1) * dh);
    auto kh = tape.slice_cols(k, hidx * dh, (hidx + 1) * dh);
    auto vh = tape.slice_cols(v, hidx * dh, (hidx + 1) * dh);
    auto scores = tape.scale(tape.matmul_nt(qh, kh), inv);
    auto probs = tape.softmax(scores, mask);
    outs.push_back(tape.matmul(probs, vh));
  }
  return tape.concat_cols(outs);
}

// Pre-norm transformer stack plus vocab projection. Throws NumericError
// naming the layer if activations go non-finite.
template <typename T>
typename Tape<T>::Id forward_graph(Tape<T>& tape, const ModelIds<T>& ids, const ModelConfig& cfg,
                                   typename Tape<T>::Id x, const PrefixMask& mask) {
  if (tape.value(x).dim(0) != mask.limit.size())
    throw std::invalid_argument("forward: input length does not match mask");
  for (std::size_t l = 0; l < ids.layers.size(); ++l) {
    const auto& L = ids.layers[l];
    auto n1 = tape.layer_norm(x, L.ln1_g, L.ln1_b);
    auto q = tape.linear(n1, L.wq, L.bq);
    auto k = tape.linear(n1, L.wk, L.bk);
    auto v = tape.linear(n1, L.wv, L.bv);
    auto attn = multi_head_attention_graph(tape, q, k, v, cfg.heads, &mask);
    x = tape.add(x, tape.linear(attn, L.wo, L.bo));
    auto n2 = tape.layer_norm(x, L.ln2_g, L.ln2_b);
    auto mid = tape.gelu(tape.linear(n2, L.w1, L.b1));
    x = tape.add(x, tape.linear(mid, L.w2, L.b2));
    if (!tape.value(x).all_finite())
      throw NumericError("forward: non-finite activations in layer " + std::to_string(l));
  }
  auto nf = tape.layer_norm(x, ids.ln_f_g, ids.ln_f_b);
  return tape.linear(nf, ids.vocab_w, ids.vocab_b);
}

// ---- targets ----

// GT mode: each scale's targets are its own quantized indices. Residual mode:
// scale 1 is the GT indices, later scales the residual indices.
inline std::vector<int> targets_for(const tok::TokenPyramid& pyramid, Mode mode) {
  const bool residual = pyramid.mode == tok::TokenPyramid::Mode::Residual;
  if (residual != (mode == Mode::Residual))
    throw std::invalid_argument("targets_for: pyramid mode does not match model mode");
  std::vector<int> out;
  for (const auto& level : pyramid.levels) out.insert(out.end(), level.begin(), level.end());
  return out;
}

}  // namespace flexvar::model
