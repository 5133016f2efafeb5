#include <doctest.h>

#include <array>
#include <cmath>

#include "flexvar/data_eval.hpp"

using namespace flexvar;

TEST_SUITE("data_eval") {
  TEST_CASE("synth_dataset: round-robin balance and bit-exact replay") {
    const auto d = eval::synth_dataset(8, 1);
    std::array<int, 8> hist{};
    for (int l : d.labels) ++hist[l];
    for (int h : hist) CHECK(h == 1);

    const auto big = eval::synth_dataset(1000, 7);
    hist = {};
    for (int l : big.labels) ++hist[l];
    for (int h : hist) CHECK(h == 125);

    const auto again = eval::synth_dataset(8, 1);
    for (int i = 0; i < 8; ++i) {
      REQUIRE(again.images[i].shape == d.images[i].shape);
      for (std::size_t j = 0; j < d.images[i].size(); ++j)
        CHECK(again.images[i][j] == d.images[i][j]);
    }

    CHECK_THROWS_AS(eval::synth_dataset(0, 1), std::invalid_argument);
  }

  TEST_CASE("oracle classifier is perfect on clean renders") {
    const auto d = eval::synth_dataset(256, 11);
    for (int i = 0; i < 256; ++i) CHECK(eval::oracle_classifier(d.images[i]) == d.labels[i]);
  }

  TEST_CASE("uniform gray image falls back to the documented class") {
    const TensorF gray = TensorF::full({3, 64, 64}, 0.5f);
    CHECK(eval::oracle_classifier(gray) == eval::kFallbackClass);
  }

  TEST_CASE("oracle tolerates 2px shifts") {
    const auto d = eval::synth_dataset(32, 13);
    for (int i = 0; i < 32; ++i) {
      TensorF shifted = TensorF::full({3, 64, 64}, d.images[i].at3(0, 0, 0));
      for (int c = 0; c < 3; ++c)
        for (int y = 0; y < 62; ++y)
          for (int x = 0; x < 62; ++x)
            shifted.at3(c, y + 2, x + 2) = d.images[i].at3(c, y, x);
      CHECK(eval::oracle_classifier(shifted) == d.labels[i]);
    }
  }

  TEST_CASE("moment features are 64-dimensional") {
    const auto d = eval::synth_dataset(1, 3);
    CHECK(eval::moment_features(d.images[0]).size() == 64);
  }

  TEST_CASE("moment_frechet: zero on identical sets, symmetric, needs 64 images") {
    const auto d = eval::synth_dataset(64, 21);
    const auto d2 = eval::synth_dataset(64, 22);
    CHECK(eval::moment_frechet(d.images, d.images) == doctest::Approx(0.0).epsilon(1e-8));
    const double ab = eval::moment_frechet(d.images, d2.images);
    const double ba = eval::moment_frechet(d2.images, d.images);
    CHECK(ab == doctest::Approx(ba).epsilon(1e-6));
    CHECK(ab >= 0.0);

    std::vector<TensorF> small(d.images.begin(), d.images.begin() + 32);
    CHECK_THROWS_AS(eval::moment_frechet(small, d.images), std::invalid_argument);
  }

  TEST_CASE("disjoint constant sets reduce to the squared mean gap") {
    std::vector<TensorF> a(64, TensorF::full({3, 64, 64}, 0.25f));
    std::vector<TensorF> b(64, TensorF::full({3, 64, 64}, 0.75f));
    // 48 mean dims shift by 0.5 each; variance dims are 0 in both sets.
    const double expect = 48 * 0.5 * 0.5;
    CHECK(eval::moment_frechet(a, b) == doctest::Approx(expect).epsilon(1e-6));
  }

  TEST_CASE("frechet_from_stats matches the closed-form hand computation") {
    // 2-D Gaussians: mu_a=(0,0), Sigma_a=I; mu_b=(1,2), Sigma_b=diag(4,9).
    // d² = 1+4 + tr(I) + tr(diag(4,9)) − 2·tr(diag(2,3)) = 5 + 2 + 13 − 10 = 10.
    const std::vector<double> mu_a = {0, 0}, mu_b = {1, 2};
    const std::vector<double> cov_a = {1, 0, 0, 1}, cov_b = {4, 0, 0, 9};
    CHECK(eval::frechet_from_stats(mu_a, cov_a, mu_b, cov_b) ==
          doctest::Approx(10.0).epsilon(1e-9));
  }

  TEST_CASE("metric report serializes one key=value per line") {
    eval::MetricReport r;
    r.add("psnr", 31.5);
    r.add("codebook_utilization", 0.25);
    const std::string s = r.serialize();
    CHECK(s == "psnr=31.5\ncodebook_utilization=0.25\n");
  }

  TEST_CASE("psnr and mse basics") {
    const TensorF a = TensorF::full({3, 4, 4}, 0.5f);
    TensorF b = a;
    CHECK(eval::mse(a, b) == 0.0);
    CHECK(eval::psnr(a, b) == 120.0);
    b[0] = 1.5f;
    CHECK(eval::mse(a, b) == doctest::Approx(1.0 / 48).epsilon(1e-9));
  }
}
