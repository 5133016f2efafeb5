#include "flexvar/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "flexvar/scheduler.hpp"

namespace flexvar::train {

// ---- AdamW ----

void adamw_update(Tensor<float>& param, const Tensor<float>& grad, OptimState::Moments& mo,
                  long step, const AdamWConfig& cfg, const std::string& name) {
  if (!grad.all_finite()) throw NumericError("optimizer_step: non-finite gradient for " + name);
  if (mo.m.size() == 0) {
    mo.m = Tensor<float>::zeros(param.shape);
    mo.v = Tensor<float>::zeros(param.shape);
  }
  const float bc1 = 1.0f - std::pow(cfg.beta1, static_cast<float>(step));
  const float bc2 = 1.0f - std::pow(cfg.beta2, static_cast<float>(step));
  for (std::size_t i = 0; i < param.size(); ++i) {
    const float g = grad[i];
    mo.m[i] = cfg.beta1 * mo.m[i] + (1.0f - cfg.beta1) * g;
    mo.v[i] = cfg.beta2 * mo.v[i] + (1.0f - cfg.beta2) * g * g;
    const float mhat = mo.m[i] / bc1;
    const float vhat = mo.v[i] / bc2;
    const float p0 = param[i];
    param[i] = p0 - cfg.lr * (mhat / (std::sqrt(vhat) + cfg.eps) + cfg.weight_decay * p0);
  }
}

void optimizer_step(const std::vector<std::pair<std::string, Tensor<float>*>>& params,
                    const std::vector<Tensor<float>>& grads, OptimState& state,
                    const AdamWConfig& cfg) {
  if (params.size() != grads.size())
    throw std::invalid_argument("optimizer_step: grads do not match params");
  ++state.step;
  for (std::size_t i = 0; i < params.size(); ++i)
    adamw_update(*params[i].second, grads[i], state.moments[params[i].first], state.step, cfg,
                 params[i].first);
}

namespace {

void clip_global_norm(std::vector<Tensor<float>>& grads, float max_norm) {
  if (max_norm <= 0.0f) return;
  double sq = 0.0;
  for (const auto& g : grads)
    for (float v : g.data) sq += static_cast<double>(v) * v;
  const double norm = std::sqrt(sq);
  if (norm <= max_norm) return;
  const float s = static_cast<float>(max_norm / norm);
  for (auto& g : grads)
    for (float& v : g.data) v *= s;
}

class LossLog {
 public:
  explicit LossLog(const std::string& path) {
    if (!path.empty()) out_.open(path, std::ios::app);
  }
  void line(int iter, double loss, double lr) {
    if (out_.is_open()) out_ << iter << '\t' << loss << '\t' << lr << '\n';
  }

 private:
  std::ofstream out_;
};

void check_divergence(double loss, const char* stage) {
  if (!std::isfinite(loss) || loss > 1e4)
    throw NumericError(std::string(stage) + ": training diverged (loss " + std::to_string(loss) +
                       ")");
}

}  // namespace

// ---- tokenizer training ----

void train_tokenizer(const Dataset& data, tok::TokenizerParams<float>& params,
                     const TrainConfig& cfg) {
  if (data.images.empty()) throw std::invalid_argument("train_tokenizer: empty dataset");
  AdamWConfig opt;
  opt.lr = cfg.lr;
  OptimState state;
  LossLog log(cfg.loss_log);
  Rng base(cfg.seed);

  std::vector<std::pair<std::string, Tensor<float>*>> named;
  visit_params<float>(params, [&](const std::string& n, Tensor<float>& t) {
    named.emplace_back(n, &t);
  });

  const auto full = sched::GridSize{
      static_cast<int>(data.images[0].dim(1)) / params.cfg.patch,
      static_cast<int>(data.images[0].dim(2)) / params.cfg.patch};

  for (int iter = 0; iter < cfg.iterations; ++iter) {
    TapeF tape;
    auto ids = tok::lift_tokenizer(tape, params, true);
    TapeF::Id loss = tape.leaf(Tensor<float>({1}, {0.0f}));
    for (int b = 0; b < cfg.batch; ++b) {
      const std::size_t ix = (static_cast<std::size_t>(iter) * cfg.batch + b) % data.images.size();
      Rng pyr = base.stream("pyramid").stream(iter).stream(b);
      const auto sizes = tok::pyramid_sizes(pyr, params.cfg.pyramid_k, full);
      loss = tape.add(loss, tokenizer_image_loss(tape, ids, params.cfg, data.images[ix], sizes,
                                                 nullptr, nullptr));
    }
    loss = tape.scale(loss, 1.0f / cfg.batch);
    const double loss_v = tape.value(loss)[0];
    check_divergence(loss_v, "train_tokenizer");
    tape.backward(loss);

    std::vector<Tensor<float>> grads;
    visit_ids<float>(ids, [&](TapeF::Id id) { grads.push_back(tape.grad(id)); });
    clip_global_norm(grads, cfg.grad_clip);
    optimizer_step(named, grads, state, opt);
    log.line(iter, loss_v, opt.lr);
  }
}

// ---- AR training ----

void train_ar(const Dataset& data, const tok::TokenizerParams<float>& tokenizer,
              model::ModelParams<float>& params, const TrainConfig& cfg) {
  if (data.images.empty()) throw std::invalid_argument("train_ar: empty dataset");
  AdamWConfig opt;
  opt.lr = cfg.lr;
  OptimState state;
  LossLog log(cfg.loss_log);
  Rng base(cfg.seed);
  const bool residual = params.cfg.mode == model::Mode::Residual;

  std::vector<std::pair<std::string, Tensor<float>*>> named;
  model::visit_params<float>(params, [&](const std::string& n, Tensor<float>& t) {
    named.emplace_back(n, &t);
  });

  // Latents are frozen; cache them once.
  std::vector<Tensor<float>> latents;
  latents.reserve(data.images.size());
  for (const auto& img : data.images) latents.push_back(tok::encode(tokenizer, img));
  const sched::GridSize full{static_cast<int>(latents[0].dim(1)),
                             static_cast<int>(latents[0].dim(2))};

  for (int iter = 0; iter < cfg.iterations; ++iter) {
    TapeF tape;
    auto ids = model::lift_model(tape, params, true);
    TapeF::Id loss = tape.leaf(Tensor<float>({1}, {0.0f}));
    for (int b = 0; b < cfg.batch; ++b) {
      const std::size_t ix = (static_cast<std::size_t>(iter) * cfg.batch + b) % data.images.size();
      Rng srng = base.stream("schedule").stream(iter).stream(b);
      const auto schedule =
          sched::sample_training_schedule(srng, cfg.max_steps, full, cfg.drop_p, cfg.max_drops);
      const auto layout = model::SequenceLayout::from(schedule);

      tok::TokenPyramid pyramid;
      std::vector<Tensor<float>> cond_maps;
      if (residual) {
        std::vector<Tensor<float>> partials;
        pyramid = tok::residual_quantize_pyramid<float>(latents[ix], schedule, tokenizer.codebook,
                                                        nullptr, &partials);
        for (std::size_t j = 0; j + 1 < schedule.steps(); ++j) cond_maps.push_back(partials[j]);
      } else {
        pyramid = tok::gt_quantize_pyramid(latents[ix], schedule, tokenizer.codebook);
        for (std::size_t j = 0; j + 1 < schedule.steps(); ++j)
          cond_maps.push_back(tok::dequantize(tokenizer.codebook, pyramid.levels[j],
                                              schedule.sizes[j].h, schedule.sizes[j].w));
      }

      int class_id = data.labels.empty() ? 0 : data.labels[ix];
      Rng drop = base.stream("class_drop").stream(iter).stream(b);
      if (drop.uniform() < cfg.class_drop) class_id = params.null_class();

      const auto targets = model::targets_for(pyramid, params.cfg.mode);
      loss = tape.add(loss, ar_image_loss(tape, ids, params.cfg, layout, class_id, cond_maps,
                                          targets));
    }
    loss = tape.scale(loss, 1.0f / cfg.batch);
    const double loss_v = tape.value(loss)[0];
    check_divergence(loss_v, "train_ar");
    tape.backward(loss);

    std::vector<Tensor<float>> grads;
    visit_ids<float>(ids, [&](TapeF::Id id) { grads.push_back(tape.grad(id)); });
    clip_global_norm(grads, cfg.grad_clip);
    optimizer_step(named, grads, state, opt);
    log.line(iter, loss_v, opt.lr);
  }
}

// ---- gradient checks ----

namespace {

using Eval = std::function<double(bool with_grad, std::vector<TensorD>* grads)>;

// Central finite differences (h = 1e-5) over every element of every input.
double fd_max_rel_err(std::vector<TensorD*> inputs, const Eval& f, double h = 1e-5) {
  std::vector<TensorD> analytic;
  f(true, &analytic);
  double worst = 0.0;
  for (std::size_t t = 0; t < inputs.size(); ++t) {
    TensorD& x = *inputs[t];
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double x0 = x[i];
      x[i] = x0 + h;
      const double fp = f(false, nullptr);
      x[i] = x0 - h;
      const double fm = f(false, nullptr);
      x[i] = x0;
      const double fd = (fp - fm) / (2 * h);
      const double a = analytic[t][i];
      const double rel = std::abs(a - fd) / std::max({1.0, std::abs(a), std::abs(fd)});
      worst = std::max(worst, rel);
    }
  }
  return worst;
}

// Scalarizes a tensor-valued op with fixed random coefficients.
TapeD::Id weigh(TapeD& tape, TapeD::Id out, Rng& rng) {
  Tensor<double> coef = Tensor<double>::randn(tape.value(out).shape, rng);
  return tape.sum(tape.mul(out, tape.leaf(coef)));
}

}  // namespace

GradCheckReport grad_check(const std::string& selector) {
  GradCheckReport report;
  Rng root(20240229);
  auto want = [&selector](const std::string& name) {
    return selector.empty() || name.find(selector) != std::string::npos;
  };
  auto run = [&report](const std::string& name, double err) {
    report.entries.push_back({name, err});
  };

  const int trials = 10;

  if (want("tensor.add")) {
    double worst = 0;
    for (int t = 0; t < trials; ++t) {
      Rng r = root.stream("add").stream(t);
      TensorD a = TensorD::randn({3, 4}, r), b = TensorD::randn({3, 4}, r);
      Rng rc = r.stream("coef");
      worst = std::max(worst, fd_max_rel_err({&a, &b}, [&](bool, std::vector<TensorD>* g) {
        TapeD tape;
        auto ia = tape.leaf(a, true), ib = tape.leaf(b, true);
        Rng rc2 = rc;
        auto loss = weigh(tape, tape.add(ia, ib), rc2);
        if (g) {
          tape.backward(loss);
          *g = {tape.grad(ia), tape.grad(ib)};
        }
        return tape.value(loss)[0];
      }));
    }
    run("tensor.add", worst);
  }

  if (want("tensor.mul")) {
    double worst = 0;
    for (int t = 0; t < trials; ++t) {
      Rng r = root.stream("mul").stream(t);
      TensorD a = TensorD::randn({3, 4}, r), b = TensorD::randn({3, 4}, r);
      Rng rc = r.stream("coef");
      worst = std::max(worst, fd_max_rel_err({&a, &b}, [&](bool, std::vector<TensorD>* g) {
        TapeD tape;
        auto ia = tape.leaf(a, true), ib = tape.leaf(b, true);
        Rng rc2 = rc;
        auto loss = weigh(tape, tape.mul(tape.scale(ia, 0.7), tape.gelu(ib)), rc2);
        if (g) {
          tape.backward(loss);
          *g = {tape.grad(ia), tape.grad(ib)};
        }
        return tape.value(loss)[0];
      }));
    }
    run("tensor.mul+scale+gelu", worst);
  }

  if (want("tensor.matmul")) {
    double worst = 0;
    for (int t = 0; t < trials; ++t) {
      Rng r = root.stream("matmul").stream(t);
      TensorD a = TensorD::randn({3, 5}, r), b = TensorD::randn({5, 4}, r),
              c = TensorD::randn({6, 4}, r), bias = TensorD::randn({4}, r);
      Rng rc = r.stream("coef");
      worst = std::max(worst,
                       fd_max_rel_err({&a, &b, &c, &bias}, [&](bool, std::vector<TensorD>* g) {
                         TapeD tape;
                         auto ia = tape.leaf(a, true), ib = tape.leaf(b, true),
                              ic = tape.leaf(c, true), ibias = tape.leaf(bias, true);
                         Rng rc2 = rc;
                         auto mm = tape.add_bias(tape.matmul(ia, ib), ibias);
                         auto loss = weigh(tape, tape.matmul_nt(mm, ic), rc2);
                         if (g) {
                           tape.backward(loss);
                           *g = {tape.grad(ia), tape.grad(ib), tape.grad(ic), tape.grad(ibias)};
                         }
                         return tape.value(loss)[0];
                       }));
    }
    run("tensor.matmul+matmul_nt+add_bias", worst);
  }

  if (want("tensor.layer_norm")) {
    double worst = 0;
    for (int t = 0; t < trials; ++t) {
      Rng r = root.stream("ln").stream(t);
      TensorD x = TensorD::randn({4, 6}, r), gmm = TensorD::randn({6}, r),
              bt = TensorD::randn({6}, r);
      Rng rc = r.stream("coef");
      worst = std::max(worst, fd_max_rel_err({&x, &gmm, &bt}, [&](bool, std::vector<TensorD>* g) {
        TapeD tape;
        auto ix = tape.leaf(x, true), ig = tape.leaf(gmm, true), ib = tape.leaf(bt, true);
        Rng rc2 = rc;
        auto loss = weigh(tape, tape.layer_norm(ix, ig, ib), rc2);
        if (g) {
          tape.backward(loss);
          *g = {tape.grad(ix), tape.grad(ig), tape.grad(ib)};
        }
        return tape.value(loss)[0];
      }));
    }
    run("tensor.layer_norm", worst);
  }

  if (want("tensor.softmax")) {
    double worst = 0;
    for (int t = 0; t < trials; ++t) {
      Rng r = root.stream("softmax").stream(t);
      TensorD x = TensorD::randn({4, 5}, r);
      PrefixMask mask{{2, 3, 5, 5}};
      Rng rc = r.stream("coef");
      worst = std::max(worst, fd_max_rel_err({&x}, [&](bool, std::vector<TensorD>* g) {
        TapeD tape;
        auto ix = tape.leaf(x, true);
        Rng rc2 = rc;
        auto loss = tape.add(weigh(tape, tape.softmax(ix), rc2),
                             weigh(tape, tape.softmax(ix, &mask), rc2));
        if (g) {
          tape.backward(loss);
          *g = {tape.grad(ix)};
        }
        return tape.value(loss)[0];
      }));
    }
    run("tensor.softmax(+masked)", worst);
  }

  if (want("tensor.embedding")) {
    double worst = 0;
    for (int t = 0; t < trials; ++t) {
      Rng r = root.stream("embed").stream(t);
      TensorD table = TensorD::randn({6, 3}, r);
      std::vector<int> idx = {0, 2, 2, 5, 1};
      Rng rc = r.stream("coef");
      worst = std::max(worst, fd_max_rel_err({&table}, [&](bool, std::vector<TensorD>* g) {
        TapeD tape;
        auto it = tape.leaf(table, true);
        Rng rc2 = rc;
        auto loss = weigh(tape, tape.embedding(it, idx), rc2);
        if (g) {
          tape.backward(loss);
          *g = {tape.grad(it)};
        }
        return tape.value(loss)[0];
      }));
    }
    run("tensor.embedding", worst);
  }

  if (want("tensor.cross_entropy")) {
    double worst = 0;
    for (int t = 0; t < trials; ++t) {
      Rng r = root.stream("ce").stream(t);
      TensorD logits = TensorD::randn({4, 7}, r);
      std::vector<int> targets = {1, 0, 6, 3};
      worst = std::max(worst, fd_max_rel_err({&logits}, [&](bool, std::vector<TensorD>* g) {
        TapeD tape;
        auto il = tape.leaf(logits, true);
        auto loss = tape.cross_entropy(il, targets);
        if (g) {
          tape.backward(loss);
          *g = {tape.grad(il)};
        }
        return tape.value(loss)[0];
      }));
    }
    run("tensor.cross_entropy", worst);
  }

  if (want("tensor.mse")) {
    double worst = 0;
    for (int t = 0; t < trials; ++t) {
      Rng r = root.stream("mse").stream(t);
      TensorD a = TensorD::randn({2, 3, 3}, r), b = TensorD::randn({2, 3, 3}, r);
      worst = std::max(worst, fd_max_rel_err({&a, &b}, [&](bool, std::vector<TensorD>* g) {
        TapeD tape;
        auto ia = tape.leaf(a, true), ib = tape.leaf(b, true);
        auto loss = tape.mse(ia, ib);
        if (g) {
          tape.backward(loss);
          *g = {tape.grad(ia), tape.grad(ib)};
        }
        return tape.value(loss)[0];
      }));
    }
    run("tensor.mse", worst);
  }

  if (want("tensor.bilinear_resize")) {
    double worst = 0;
    for (int t = 0; t < trials; ++t) {
      Rng r = root.stream("bilinear").stream(t);
      TensorD x = TensorD::randn({2, 3, 4}, r);
      const std::size_t h2 = 1 + t % 6, w2 = 1 + (t * 7) % 6;
      Rng rc = r.stream("coef");
      worst = std::max(worst, fd_max_rel_err({&x}, [&](bool, std::vector<TensorD>* g) {
        TapeD tape;
        auto ix = tape.leaf(x, true);
        Rng rc2 = rc;
        auto loss = weigh(tape, tape.bilinear_resize(ix, h2, w2), rc2);
        if (g) {
          tape.backward(loss);
          *g = {tape.grad(ix)};
        }
        return tape.value(loss)[0];
      }));
    }
    run("tensor.bilinear_resize", worst);
  }

  if (want("tensor.attention")) {
    double worst = 0;
    for (int t = 0; t < trials; ++t) {
      Rng r = root.stream("attn").stream(t);
      TensorD q = TensorD::randn({4, 6}, r), k = TensorD::randn({4, 6}, r),
              v = TensorD::randn({4, 6}, r);
      PrefixMask mask{{1, 3, 3, 4}};
      Rng rc = r.stream("coef");
      worst = std::max(worst, fd_max_rel_err({&q, &k, &v}, [&](bool, std::vector<TensorD>* g) {
        TapeD tape;
        auto iq = tape.leaf(q, true), ik = tape.leaf(k, true), iv = tape.leaf(v, true);
        Rng rc2 = rc;
        auto out = model::multi_head_attention_graph(tape, iq, ik, iv, 2, &mask);
        auto loss = weigh(tape, out, rc2);
        if (g) {
          tape.backward(loss);
          *g = {tape.grad(iq), tape.grad(ik), tape.grad(iv)};
        }
        return tape.value(loss)[0];
      }));
    }
    run("tensor.attention", worst);
  }

  if (want("tokenizer.loss")) {
    tok::TokenizerConfig cfg;
    cfg.patch = 2;
    cfg.channels = 3;
    cfg.vocab = 8;
    cfg.hidden = 6;
    cfg.blocks = 1;
    Rng r = root.stream("tok_loss");
    auto params = tok::init_tokenizer<double>(cfg, r.stream("init"));
    Rng ri = r.stream("img");
    TensorD image = TensorD::randn({3, 8, 8}, ri, 0.3);
    for (auto& vv : image.data) vv = 0.5 + 0.25 * std::tanh(vv);
    const std::vector<sched::GridSize> sizes = {{1, 1}, {2, 3}, {4, 4}};

    // The straight-through/stop-gradient terms are not derivatives of the
    // value actually computed, so plain finite differences cannot match them.
    // Freeze every quantizer decision at the base point — the token indices
    // and the stop-gradient'd tensors (ST offset q0−f0, the codebook target
    // f0, the commitment target q0). The resulting surrogate is smooth, and
    // at the base point its value and analytic gradient coincide with the
    // training loss and the training gradient.
    std::vector<std::vector<int>> frozen_idx;
    std::vector<TensorD> level0, q0;
    {
      TapeD tape;
      auto ids = tok::lift_tokenizer(tape, params, false);
      auto latent = tok::encode_graph(tape, ids, cfg, image);
      for (auto s : sizes) {
        const std::size_t h = s.h, w = s.w;
        auto level = tape.bilinear_resize(latent, h, w);
        auto idx = tok::quantize_indices(tape.value(level), params.codebook).indices;
        q0.push_back(tok::dequantize(params.codebook, idx, h, w));
        level0.push_back(tape.value(level));
        frozen_idx.push_back(std::move(idx));
      }
    }

    std::vector<TensorD*> inputs;
    visit_params<double>(params, [&](const std::string&, TensorD& t) { inputs.push_back(&t); });
    const double err = fd_max_rel_err(inputs, [&](bool, std::vector<TensorD>* g) {
      TapeD tape;
      auto ids = tok::lift_tokenizer(tape, params, true);
      auto latent = tok::encode_graph(tape, ids, cfg, image);
      TapeD::Id loss = tape.leaf(TensorD({1}, {0.0}));
      for (std::size_t k = 0; k < sizes.size(); ++k) {
        const std::size_t h = sizes[k].h, w = sizes[k].w;
        auto level = tape.bilinear_resize(latent, h, w);
        auto q = tape.nc_to_chw(tape.embedding(ids.codebook, frozen_idx[k]), h, w);
        TensorD offset = q0[k];
        for (std::size_t i = 0; i < offset.size(); ++i) offset[i] -= level0[k][i];
        auto st = tape.add(level, tape.leaf(offset));
        auto recon_rows = tok::decode_rows_graph(tape, ids, st);
        TensorD target_img = kernels::bilinear_resize(image, h * cfg.patch, w * cfg.patch);
        auto target_rows = tape.leaf(tok::patchify(target_img, cfg.patch));
        auto recon_term = tape.mse(target_rows, recon_rows);
        auto codebook_term = tape.mse(tape.leaf(level0[k]), q);
        auto commit_term = tape.scale(tape.mse(level, tape.leaf(q0[k])), 0.25);
        loss = tape.add(loss, tape.add(recon_term, tape.add(codebook_term, commit_term)));
      }
      if (g) {
        tape.backward(loss);
        g->clear();
        visit_ids<double>(ids, [&](TapeD::Id id) { g->push_back(tape.grad(id)); });
      }
      return tape.value(loss)[0];
    });
    run("tokenizer.loss(frozen-quantizer)", err);
  }

  if (want("ar.loss")) {
    model::ModelConfig cfg;
    cfg.depth = 1;
    cfg.dim = 8;
    cfg.heads = 2;
    cfg.vocab = 8;
    cfg.class_count = 2;
    cfg.latent_channels = 3;
    cfg.pe_extent_h = 4;
    cfg.pe_extent_w = 4;
    Rng r = root.stream("ar_loss");
    auto params = model::init_model<double>(cfg, r.stream("init"));
    const auto schedule = sched::ScaleSchedule{{{1, 1}, {2, 2}}};
    const auto layout = model::SequenceLayout::from(schedule);
    Rng rm = r.stream("maps");
    std::vector<TensorD> cond_maps = {TensorD::randn({3, 1, 1}, rm)};
    const std::vector<int> targets = {3, 0, 1, 7, 2};

    std::vector<TensorD*> inputs;
    model::visit_params<double>(params,
                                [&](const std::string&, TensorD& t) { inputs.push_back(&t); });
    const double err = fd_max_rel_err(inputs, [&](bool, std::vector<TensorD>* g) {
      TapeD tape;
      auto ids = model::lift_model(tape, params, true);
      auto loss = ar_image_loss(tape, ids, cfg, layout, 1, cond_maps, targets);
      if (g) {
        tape.backward(loss);
        g->clear();
        visit_ids<double>(ids, [&](TapeD::Id id) { g->push_back(tape.grad(id)); });
      }
      return tape.value(loss)[0];
    });
    run("ar.loss(depth-1)", err);
  }

  return report;
}

}  // namespace flexvar::train
