#include <doctest.h>

#include <cmath>
#include <limits>

#include "flexvar/kernels.hpp"
#include "flexvar/tokenizer.hpp"

using namespace flexvar;

namespace {

// Reference nearest-neighbor scan: full double-precision distances, lowest
// index on ties.
std::vector<int> brute_force_nearest(const TensorF& level, const TensorF& codebook) {
  const std::size_t C = level.dim(0), h = level.dim(1), w = level.dim(2);
  const std::size_t V = codebook.dim(0);
  std::vector<int> out(h * w);
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x) {
      int best = 0;
      float best_d = std::numeric_limits<float>::infinity();
      for (std::size_t v = 0; v < V; ++v) {
        float d = 0;
        for (std::size_t c = 0; c < C; ++c) {
          const float diff = level.at3(c, y, x) - codebook.at2(v, c);
          d += diff * diff;
        }
        if (d < best_d) {
          best_d = d;
          best = static_cast<int>(v);
        }
      }
      out[y * w + x] = best;
    }
  return out;
}

}  // namespace

TEST_SUITE("tokenizer") {
  TEST_CASE("quantize: exact code match and hand-computed two-code case") {
    TensorF codebook({2, 2}, {0.0f, 0.0f, 1.0f, 1.0f});
    TensorF level({2, 1, 1}, {0.4f, 0.4f});
    const auto q = tok::quantize_indices(level, codebook);
    CHECK(q.indices == std::vector<int>{0});  // 0.566 < 0.849

    TensorF exact({2, 1, 1}, {1.0f, 1.0f});
    CHECK(tok::quantize_indices(exact, codebook).indices == std::vector<int>{1});
  }

  TEST_CASE("quantize ties resolve to the lowest index") {
    TensorF codebook({3, 1}, {1.0f, -1.0f, 1.0f});  // codes 0 and 2 identical
    TensorF level({1, 1, 2}, {0.9f, 0.0f});          // 0.0 is equidistant from ±1
    const auto q = tok::quantize_indices(level, codebook);
    CHECK(q.indices[0] == 0);
    CHECK(q.indices[1] == 0);
  }

  TEST_CASE("quantize equals the brute-force scan on random instances") {
    Rng rng(404);
    for (int t = 0; t < 50; ++t) {
      Rng r = rng.stream(t);
      const std::size_t V = 2 + r.below(127), C = 1 + r.below(8);
      TensorF codebook = TensorF::randn({V, C}, r);
      TensorF level = TensorF::randn({C, 4, 4}, r);
      CHECK(tok::quantize_indices(level, codebook).indices ==
            brute_force_nearest(level, codebook));
    }
  }

  TEST_CASE("dequantized codes are their own nearest codes (idempotence)") {
    Rng rng(7);
    TensorF codebook = TensorF::randn({32, 4}, rng);
    TensorF level = TensorF::randn({4, 3, 3}, rng);
    const auto q1 = tok::quantize_indices(level, codebook);
    const TensorF deq = tok::dequantize(codebook, q1.indices, 3, 3);
    CHECK(tok::quantize_indices(deq, codebook).indices == q1.indices);
  }

  TEST_CASE("patchify/unpatchify round-trips") {
    Rng rng(12);
    TensorF img = TensorF::randn({3, 16, 24}, rng);
    const TensorF rows = tok::patchify(img, 8);
    CHECK(rows.dim(0) == 2 * 3);
    CHECK(rows.dim(1) == 3 * 8 * 8);
    const TensorF back = tok::unpatchify(rows, 2, 3, 8);
    for (std::size_t i = 0; i < img.size(); ++i) CHECK(back[i] == img[i]);
  }

  TEST_CASE("encode/decode shape contracts") {
    tok::TokenizerConfig cfg;
    cfg.patch = 8;
    cfg.channels = 4;
    cfg.hidden = 8;
    cfg.blocks = 1;
    cfg.vocab = 16;
    Rng rng(3);
    auto params = tok::init_tokenizer<float>(cfg, rng);
    TensorF img = TensorF::randn({3, 64, 64}, rng, 0.1f);
    const TensorF latent = tok::encode(params, img);
    CHECK(latent.dim(0) == 4);
    CHECK(latent.dim(1) == 8);
    CHECK(latent.dim(2) == 8);
    CHECK(latent.all_finite());

    TensorF one = TensorF::randn({4, 1, 1}, rng);
    const TensorF small = tok::decode(params, one);
    CHECK(small.dim(1) == 8);
    CHECK(small.dim(2) == 8);

    TensorF bad = TensorF::randn({3, 60, 64}, rng);
    CHECK_THROWS_AS(tok::encode(params, bad), std::invalid_argument);
  }

  TEST_CASE("tape encoder matches the plain-kernel encoder bit for bit") {
    tok::TokenizerConfig cfg;
    cfg.patch = 4;
    cfg.channels = 3;
    cfg.hidden = 6;
    cfg.blocks = 2;
    cfg.vocab = 8;
    Rng rng(15);
    auto params = tok::init_tokenizer<float>(cfg, rng);
    TensorF img = TensorF::randn({3, 16, 16}, rng, 0.2f);
    const TensorF plain = tok::encode(params, img);
    TapeF tape;
    auto ids = tok::lift_tokenizer(tape, params, false);
    auto latent = tok::encode_graph(tape, ids, cfg, img);
    const TensorF& taped = tape.value(latent);
    REQUIRE(taped.shape == plain.shape);
    for (std::size_t i = 0; i < plain.size(); ++i) CHECK(taped[i] == plain[i]);
  }

  TEST_CASE("pyramid sizes: K levels, last untouched full latent") {
    Rng rng(31);
    const auto sizes = tok::pyramid_sizes(rng, 5, {8, 8});
    CHECK(sizes.size() == 5);
    CHECK(sizes.back() == sched::GridSize{8, 8});
    for (std::size_t i = 1; i < sizes.size(); ++i) {
      CHECK(sizes[i - 1].h < sizes[i].h);
    }
    Rng replay(31);
    CHECK(tok::pyramid_sizes(replay, 5, {8, 8}) == sizes);

    Rng bad(0);
    CHECK_THROWS_AS(tok::pyramid_sizes(bad, 2, {1, 1}), std::invalid_argument);
    Rng bad2(0);
    CHECK_THROWS_AS(tok::pyramid_sizes(bad2, 9, {8, 8}), std::invalid_argument);
  }

  TEST_CASE("sample_scale_pyramid keeps the full level bit-identical") {
    Rng rng(77);
    TensorF latent = TensorF::randn({4, 8, 8}, rng);
    Rng s = rng.stream("pyr");
    const auto pyr = tok::sample_scale_pyramid(latent, 2, s);
    REQUIRE(pyr.size() == 2);
    for (std::size_t i = 0; i < latent.size(); ++i) CHECK(pyr.back()[i] == latent[i]);
  }

  TEST_CASE("residual recursion on a 2x2 latent equals the inline oracle") {
    Rng rng(88);
    TensorF codebook = TensorF::randn({16, 2}, rng);
    TensorF latent = TensorF::randn({2, 2, 2}, rng);
    sched::ScaleSchedule schedule;
    schedule.sizes = {{1, 1}, {2, 2}};
    TensorF accum;
    const auto pyr =
        tok::residual_quantize_pyramid<float>(latent, schedule, codebook, &accum, nullptr);
    REQUIRE(pyr.levels.size() == 2);
    CHECK(pyr.mode == tok::TokenPyramid::Mode::Residual);

    // Step 1: quantize the 1×1 downsample.
    const TensorF down = kernels::bilinear_resize(latent, 1, 1);
    const auto l1 = tok::quantize_indices(down, codebook);
    CHECK(pyr.levels[0] == l1.indices);
    // Accumulate at the full grid, form the residual, quantize.
    TensorF acc = kernels::bilinear_resize(tok::dequantize(codebook, l1.indices, 1, 1), 2, 2);
    TensorF resid = latent;
    for (std::size_t i = 0; i < resid.size(); ++i) resid[i] -= acc[i];
    const auto l2 = tok::quantize_indices(resid, codebook);
    CHECK(pyr.levels[1] == l2.indices);
    const TensorF deq2 = tok::dequantize(codebook, l2.indices, 2, 2);
    for (std::size_t i = 0; i < acc.size(); ++i) CHECK(accum[i] == acc[i] + deq2[i]);
  }

  TEST_CASE("residual accumulation identity holds exactly") {
    Rng rng(90);
    for (int t = 0; t < 20; ++t) {
      Rng r = rng.stream(t);
      TensorF codebook = TensorF::randn({32, 3}, r);
      TensorF latent = TensorF::randn({3, 8, 8}, r);
      Rng s = r.stream("sched");
      const auto schedule = sched::sample_training_schedule(s, 4, {8, 8}, 0.0, 0);
      TensorF accum;
      const auto pyr =
          tok::residual_quantize_pyramid<float>(latent, schedule, codebook, &accum, nullptr);
      TensorF total = TensorF::zeros({3, 8, 8});
      for (std::size_t i = 0; i < pyr.levels.size(); ++i) {
        const auto g = schedule.sizes[i];
        const TensorF up = kernels::bilinear_resize(
            tok::dequantize(codebook, pyr.levels[i], g.h, g.w), 8, 8);
        for (std::size_t j = 0; j < total.size(); ++j) total[j] += up[j];
      }
      for (std::size_t j = 0; j < total.size(); ++j) CHECK(accum[j] == total[j]);
    }
  }

  TEST_CASE("constant latent equal to a code: first level perfect, residuals hit the zero code") {
    TensorF codebook({3, 2}, {0.7f, -0.3f, 0.0f, 0.0f, 2.0f, 2.0f});
    TensorF latent = TensorF::zeros({2, 4, 4});
    for (std::size_t i = 0; i < 16; ++i) {
      latent[i] = 0.7f;         // channel 0
      latent[16 + i] = -0.3f;   // channel 1
    }
    sched::ScaleSchedule schedule;
    schedule.sizes = {{1, 1}, {2, 2}, {4, 4}};
    const auto pyr = tok::residual_quantize_pyramid<float>(latent, schedule, codebook);
    CHECK(pyr.levels[0] == std::vector<int>{0});
    for (std::size_t lvl = 1; lvl < pyr.levels.size(); ++lvl)
      for (int ix : pyr.levels[lvl]) CHECK(ix == 1);  // the zero code
  }

  TEST_CASE("GT pyramid levels are mutually independent") {
    Rng rng(41);
    TensorF codebook = TensorF::randn({16, 3}, rng);
    TensorF latent = TensorF::randn({3, 8, 8}, rng);
    sched::ScaleSchedule schedule;
    schedule.sizes = {{1, 1}, {4, 4}, {8, 8}};
    auto pyr = tok::gt_quantize_pyramid(latent, schedule, codebook);
    auto edited = pyr;
    edited.levels[2][0] = (edited.levels[2][0] + 1) % 16;
    // Re-quantizing any level only reads the latent, never other levels.
    const auto again = tok::gt_quantize_pyramid(latent, schedule, codebook);
    CHECK(again.levels[0] == pyr.levels[0]);
    CHECK(again.levels[1] == pyr.levels[1]);
  }

  TEST_CASE("vae_loss: zero on perfect fit, isolates the reconstruction term") {
    TapeF tape;
    auto t1 = tape.leaf(TensorF::full({1, 4}, 0.5f));
    auto r1 = tape.leaf(TensorF::full({1, 4}, 0.5f));
    auto f1 = tape.leaf(TensorF::full({2, 1, 1}, 0.2f));
    auto loss = tok::vae_loss<float>(tape, {t1}, {r1}, {f1}, {f1});
    CHECK(tape.value(loss)[0] == 0.0f);

    TapeF tape2;
    auto t2 = tape2.leaf(TensorF({1, 2}, {1.0f, 0.0f}));
    auto r2 = tape2.leaf(TensorF({1, 2}, {0.0f, 0.0f}));
    auto f2 = tape2.leaf(TensorF::full({1, 1, 1}, 0.3f));
    auto loss2 = tok::vae_loss<float>(tape2, {t2}, {r2}, {f2}, {f2});
    CHECK(tape2.value(loss2)[0] == doctest::Approx(0.5f));  // mean squared error only

    CHECK_THROWS_AS((tok::vae_loss<float>(tape2, {t2, t2}, {r2}, {f2}, {f2})),
                    std::invalid_argument);
  }

  TEST_CASE("two-scale vae_loss equals the hand-summed three-term expression") {
    TapeF tape;
    auto target = tape.leaf(TensorF({1, 2}, {0.8f, 0.4f}));
    auto recon = tape.leaf(TensorF({1, 2}, {0.6f, 0.1f}));
    auto f = tape.leaf(TensorF({1, 1, 2}, {0.5f, -0.5f}));
    auto q = tape.leaf(TensorF({1, 1, 2}, {0.3f, -0.1f}));
    auto loss = tok::vae_loss<float>(tape, {target, target}, {recon, recon}, {f, f}, {q, q});
    const double recon_term = ((0.2 * 0.2) + (0.3 * 0.3)) / 2.0;
    const double code_term = ((0.2 * 0.2) + (0.4 * 0.4)) / 2.0;
    const double expect = 2.0 * (recon_term + code_term + 0.25 * code_term);
    CHECK(tape.value(loss)[0] == doctest::Approx(expect).epsilon(1e-5));
  }
}
