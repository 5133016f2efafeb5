#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "flexvar/tensor.hpp"
#include "flexvar/tokenizer.hpp"
#include "flexvar/training.hpp"

namespace flexvar::eval {

inline constexpr int kClassCount = 8;      // {circle, square, triangle, cross} × {warm, cool}
inline constexpr int kImageSize = 64;
inline constexpr int kFallbackClass = 0;   // returned for feature-free inputs (uniform images)

// Deterministic, class-balanced (round-robin) synthetic renders. Class id c:
// shape = c % 4, color family = c / 4 (0 warm, 1 cool); position/scale/hue
// jittered from the seeded RNG.
train::Dataset synth_dataset(int n, std::uint64_t seed);

// Single render, pure in (class_id, jitter stream).
Tensor<float> render_class(int class_id, Rng jitter);

// Rule-based: color family from the foreground red-blue balance, shape from
// occupancy-template correlation. Always returns a class; featureless inputs
// get kFallbackClass.
int oracle_classifier(const Tensor<float>& image);

// 64-dim pixel-patch moment features: over a 4×4 grid of equal patches,
// per-channel patch means (48) followed by per-patch gray variances (16).
std::vector<double> moment_features(const Tensor<float>& image);

// Fréchet distance between Gaussian fits of the two feature sets. Each set
// needs ≥ 64 images. Symmetric; 0 on identical sets.
double moment_frechet(const std::vector<Tensor<float>>& set_a,
                      const std::vector<Tensor<float>>& set_b);

// Closed-form Fréchet between explicit Gaussian parameters (row-major d×d
// covariances); exposed for analytic oracles.
double frechet_from_stats(const std::vector<double>& mu_a, const std::vector<double>& cov_a,
                          const std::vector<double>& mu_b, const std::vector<double>& cov_b);

// Fraction of codebook entries used by full-grid quantization over a corpus.
double codebook_utilization(const tok::TokenizerParams<float>& tokenizer,
                            const std::vector<Tensor<float>>& images);

double psnr(const Tensor<float>& a, const Tensor<float>& b);
double mse(const Tensor<float>& a, const Tensor<float>& b);

// Flat key=value report, one metric per line, insertion order preserved.
struct MetricReport {
  std::vector<std::pair<std::string, double>> entries;
  void add(const std::string& key, double value) { entries.emplace_back(key, value); }
  std::string serialize() const;
  void save(const std::string& path) const;
};

}  // namespace flexvar::eval
