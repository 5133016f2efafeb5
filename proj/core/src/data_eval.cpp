#include "flexvar/data_eval.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "flexvar/errors.hpp"

namespace flexvar::eval {

namespace {

constexpr int kShapeCount = 4;  // circle, square, triangle, cross
constexpr int kTemplateGrid = 16;
constexpr float kChromaThreshold = 0.12f;

void hsv_to_rgb(float h, float s, float v, float& r, float& g, float& b) {
  h = h - std::floor(h);
  const float c = v * s;
  const float hp = h * 6.0f;
  const float x = c * (1.0f - std::fabs(std::fmod(hp, 2.0f) - 1.0f));
  float rr = 0, gg = 0, bb = 0;
  if (hp < 1) rr = c, gg = x;
  else if (hp < 2) rr = x, gg = c;
  else if (hp < 3) gg = c, bb = x;
  else if (hp < 4) gg = x, bb = c;
  else if (hp < 5) rr = x, bb = c;
  else rr = c, bb = x;
  const float m = v - c;
  r = rr + m;
  g = gg + m;
  b = bb + m;
}

bool inside_shape(int shape, float dx, float dy, float r) {
  switch (shape) {
    case 0:  // circle
      return dx * dx + dy * dy <= r * r;
    case 1:  // square
      return std::max(std::fabs(dx), std::fabs(dy)) <= 0.82f * r;
    case 2:  // upward triangle
      return dy >= -r && dy <= 0.8f * r && std::fabs(dx) <= 0.65f * (dy + r);
    default:  // cross
      return (std::fabs(dx) <= 0.33f * r && std::fabs(dy) <= r) ||
             (std::fabs(dy) <= 0.33f * r && std::fabs(dx) <= r);
  }
}

Tensor<float> render(int shape, int family, float cx, float cy, float radius, float hue_jitter,
                     float sat, float val, float bg) {
  const float hue = family == 0 ? 0.02f + 0.11f * hue_jitter   // warm: red..yellow
                                : 0.52f + 0.18f * hue_jitter;  // cool: cyan..blue
  float fr, fg, fb;
  hsv_to_rgb(hue, sat, val, fr, fg, fb);
  Tensor<float> img = Tensor<float>::full({3, kImageSize, kImageSize}, bg);
  for (int y = 0; y < kImageSize; ++y)
    for (int x = 0; x < kImageSize; ++x) {
      // 2×2 supersampled coverage for stable, softly antialiased edges.
      int hits = 0;
      for (int sy = 0; sy < 2; ++sy)
        for (int sx = 0; sx < 2; ++sx) {
          const float px = x + 0.25f + 0.5f * sx - cx;
          const float py = y + 0.25f + 0.5f * sy - cy;
          hits += inside_shape(shape, px, py, radius) ? 1 : 0;
        }
      if (hits == 0) continue;
      const float a = hits / 4.0f;
      img.at3(0, y, x) = bg + a * (fr - bg);
      img.at3(1, y, x) = bg + a * (fg - bg);
      img.at3(2, y, x) = bg + a * (fb - bg);
    }
  return img;
}

Tensor<float> foreground_mask(const Tensor<float>& image) {
  const std::size_t h = image.dim(1), w = image.dim(2);
  Tensor<float> m({h, w});
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x) {
      const float r = image.at3(0, y, x), g = image.at3(1, y, x), b = image.at3(2, y, x);
      const float chroma = std::max({r, g, b}) - std::min({r, g, b});
      m.at2(y, x) = chroma > kChromaThreshold ? 1.0f : 0.0f;
    }
  return m;
}

// Bounding-box-normalized occupancy grid: translation- and scale-invariant
// silhouette summary used for template correlation.
std::vector<float> occupancy(const Tensor<float>& mask) {
  const int h = static_cast<int>(mask.dim(0)), w = static_cast<int>(mask.dim(1));
  // Fit the box to rows/columns carrying a meaningful share of the silhouette:
  // a handful of stray pixels (decoder ringing at patch seams) would otherwise
  // stretch the box and shear the normalized grid. The same rule is applied to
  // the canonical templates, so clean inputs are unaffected.
  std::vector<int> row_count(h, 0), col_count(w, 0);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      if (mask.at2(y, x) > 0.5f) {
        ++row_count[y];
        ++col_count[x];
      }
  const int rmax = *std::max_element(row_count.begin(), row_count.end());
  const int cmax = *std::max_element(col_count.begin(), col_count.end());
  const int rmin = std::max(1, rmax / 8), cmin = std::max(1, cmax / 8);
  int y0 = h, y1 = -1, x0 = w, x1 = -1;
  for (int y = 0; y < h; ++y)
    if (row_count[y] >= rmin) {
      y0 = std::min(y0, y);
      y1 = std::max(y1, y);
    }
  for (int x = 0; x < w; ++x)
    if (col_count[x] >= cmin) {
      x0 = std::min(x0, x);
      x1 = std::max(x1, x);
    }
  std::vector<float> grid(kTemplateGrid * kTemplateGrid, 0.0f);
  if (y1 < y0) return grid;
  std::vector<int> count(grid.size(), 0);
  const int bh = y1 - y0 + 1, bw = x1 - x0 + 1;
  for (int y = y0; y <= y1; ++y)
    for (int x = x0; x <= x1; ++x) {
      const int gy = std::min(kTemplateGrid - 1, (y - y0) * kTemplateGrid / bh);
      const int gx = std::min(kTemplateGrid - 1, (x - x0) * kTemplateGrid / bw);
      grid[gy * kTemplateGrid + gx] += mask.at2(y, x);
      ++count[gy * kTemplateGrid + gx];
    }
  for (std::size_t i = 0; i < grid.size(); ++i)
    if (count[i] > 0) grid[i] /= count[i];
  return grid;
}

// Similarity between two occupancy grids. Plain negative squared distance:
// mean-centred correlation would degenerate on the square, whose normalized
// occupancy is an (almost) constant grid.
double occupancy_similarity(const std::vector<float>& a, const std::vector<float>& b) {
  double d2 = 0;
  for (std::size_t i = 0; i < a.size(); ++i) d2 += (a[i] - b[i]) * (a[i] - b[i]);
  return -d2;
}

const std::vector<std::vector<float>>& shape_templates() {
  static const std::vector<std::vector<float>> t = [] {
    std::vector<std::vector<float>> out;
    for (int s = 0; s < kShapeCount; ++s) {
      const Tensor<float> canon = render(s, 0, 32.0f, 32.0f, 18.0f, 0.5f, 0.9f, 0.85f, 0.82f);
      out.push_back(occupancy(foreground_mask(canon)));
    }
    return out;
  }();
  return t;
}

// Symmetric-matrix square root with negative eigenvalues clamped to zero.
Eigen::MatrixXd psd_sqrt(const Eigen::MatrixXd& m) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es((m + m.transpose()) * 0.5);
  Eigen::VectorXd ev = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
}

void fit_gaussian(const std::vector<std::vector<double>>& feats, Eigen::VectorXd& mu,
                  Eigen::MatrixXd& cov) {
  const int n = static_cast<int>(feats.size());
  const int d = static_cast<int>(feats[0].size());
  mu = Eigen::VectorXd::Zero(d);
  for (const auto& f : feats)
    for (int j = 0; j < d; ++j) mu[j] += f[j];
  mu /= n;
  cov = Eigen::MatrixXd::Zero(d, d);
  for (const auto& f : feats) {
    Eigen::VectorXd c(d);
    for (int j = 0; j < d; ++j) c[j] = f[j] - mu[j];
    cov += c * c.transpose();
  }
  cov /= n;
}

std::string double_text(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  (void)ec;
  return std::string(buf, ptr);
}

}  // namespace

Tensor<float> render_class(int class_id, Rng jitter) {
  if (class_id < 0 || class_id >= kClassCount)
    throw std::invalid_argument("render_class: class id out of range");
  const int shape = class_id % kShapeCount;
  const int family = class_id / kShapeCount;
  const float cx = 32.0f + 12.0f * (jitter.uniform_float() - 0.5f);
  const float cy = 32.0f + 12.0f * (jitter.uniform_float() - 0.5f);
  const float radius = 14.0f + 6.0f * jitter.uniform_float();
  const float hue_jitter = jitter.uniform_float();
  const float sat = 0.8f + 0.2f * jitter.uniform_float();
  const float val = 0.7f + 0.25f * jitter.uniform_float();
  const float bg = 0.78f + 0.1f * jitter.uniform_float();
  return render(shape, family, cx, cy, radius, hue_jitter, sat, val, bg);
}

train::Dataset synth_dataset(int n, std::uint64_t seed) {
  if (n < 1) throw std::invalid_argument("synth_dataset: n must be >= 1");
  train::Dataset d;
  Rng base(seed);
  for (int i = 0; i < n; ++i) {
    const int cls = i % kClassCount;
    d.images.push_back(render_class(cls, base.stream("image").stream(i)));
    d.labels.push_back(cls);
  }
  return d;
}

int oracle_classifier(const Tensor<float>& image) {
  if (image.rank() != 3 || image.dim(0) != 3 || image.dim(1) != kImageSize ||
      image.dim(2) != kImageSize)
    throw std::invalid_argument("oracle_classifier: want 3×64×64 input");
  const Tensor<float> mask = foreground_mask(image);
  double red_minus_blue = 0;
  long count = 0;
  for (std::size_t y = 0; y < mask.dim(0); ++y)
    for (std::size_t x = 0; x < mask.dim(1); ++x)
      if (mask.at2(y, x) > 0.5f) {
        red_minus_blue += image.at3(0, y, x) - image.at3(2, y, x);
        ++count;
      }
  if (count == 0) return kFallbackClass;
  const int family = red_minus_blue >= 0 ? 0 : 1;
  const std::vector<float> occ = occupancy(mask);
  int best_shape = 0;
  double best = -std::numeric_limits<double>::infinity();
  for (int s = 0; s < kShapeCount; ++s) {
    const double c = occupancy_similarity(occ, shape_templates()[s]);
    if (c > best) {
      best = c;
      best_shape = s;
    }
  }
  return family * kShapeCount + best_shape;
}

std::vector<double> moment_features(const Tensor<float>& image) {
  const std::size_t h = image.dim(1), w = image.dim(2);
  if (image.rank() != 3 || image.dim(0) != 3 || h % 4 != 0 || w % 4 != 0)
    throw std::invalid_argument("moment_features: want 3×H×W with H,W divisible by 4");
  const std::size_t ph = h / 4, pw = w / 4;
  std::vector<double> out;
  out.reserve(64);
  std::vector<double> gray_var(16);
  for (int py = 0; py < 4; ++py)
    for (int px = 0; px < 4; ++px) {
      double mean[3] = {0, 0, 0};
      double gsum = 0, gsq = 0;
      for (std::size_t y = py * ph; y < (py + 1) * ph; ++y)
        for (std::size_t x = px * pw; x < (px + 1) * pw; ++x) {
          double g = 0;
          for (int c = 0; c < 3; ++c) {
            const double v = image.at3(c, y, x);
            mean[c] += v;
            g += v;
          }
          g /= 3.0;
          gsum += g;
          gsq += g * g;
        }
      const double np = static_cast<double>(ph * pw);
      for (int c = 0; c < 3; ++c) out.push_back(mean[c] / np);
      const double gm = gsum / np;
      gray_var[py * 4 + px] = gsq / np - gm * gm;
    }
  for (double v : gray_var) out.push_back(v);
  return out;
}

double frechet_from_stats(const std::vector<double>& mu_a, const std::vector<double>& cov_a,
                          const std::vector<double>& mu_b, const std::vector<double>& cov_b) {
  const int d = static_cast<int>(mu_a.size());
  if (mu_b.size() != static_cast<std::size_t>(d) ||
      cov_a.size() != static_cast<std::size_t>(d) * d ||
      cov_b.size() != static_cast<std::size_t>(d) * d)
    throw std::invalid_argument("frechet_from_stats: dimension mismatch");
  Eigen::VectorXd ma(d), mb(d);
  Eigen::MatrixXd ca(d, d), cb(d, d);
  for (int i = 0; i < d; ++i) {
    ma[i] = mu_a[i];
    mb[i] = mu_b[i];
    for (int j = 0; j < d; ++j) {
      ca(i, j) = cov_a[i * d + j];
      cb(i, j) = cov_b[i * d + j];
    }
  }
  const Eigen::MatrixXd sa = psd_sqrt(ca);
  const Eigen::MatrixXd cross = psd_sqrt(sa * cb * sa);
  const double dist = (ma - mb).squaredNorm() + ca.trace() + cb.trace() - 2.0 * cross.trace();
  return std::max(0.0, dist);
}

double moment_frechet(const std::vector<Tensor<float>>& set_a,
                      const std::vector<Tensor<float>>& set_b) {
  if (set_a.size() < 64 || set_b.size() < 64)
    throw std::invalid_argument("moment_frechet: each set needs >= 64 images");
  auto featurize = [](const std::vector<Tensor<float>>& set) {
    std::vector<std::vector<double>> out;
    out.reserve(set.size());
    for (const auto& img : set) out.push_back(moment_features(img));
    return out;
  };
  Eigen::VectorXd ma, mb;
  Eigen::MatrixXd ca, cb;
  fit_gaussian(featurize(set_a), ma, ca);
  fit_gaussian(featurize(set_b), mb, cb);
  const Eigen::MatrixXd sa = psd_sqrt(ca);
  const Eigen::MatrixXd cross = psd_sqrt(sa * cb * sa);
  const double dist = (ma - mb).squaredNorm() + ca.trace() + cb.trace() - 2.0 * cross.trace();
  return std::max(0.0, dist);
}

double codebook_utilization(const tok::TokenizerParams<float>& tokenizer,
                            const std::vector<Tensor<float>>& images) {
  std::vector<bool> used(tokenizer.cfg.vocab, false);
  for (const auto& img : images) {
    const Tensor<float> latent = tok::encode(tokenizer, img);
    const auto q = tok::quantize_indices(latent, tokenizer.codebook);
    for (int ix : q.indices) used[ix] = true;
  }
  long n = 0;
  for (bool b : used) n += b ? 1 : 0;
  return static_cast<double>(n) / tokenizer.cfg.vocab;
}

double mse(const Tensor<float>& a, const Tensor<float>& b) {
  if (a.shape != b.shape) throw std::invalid_argument("mse: shape mismatch");
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = static_cast<double>(a[i]) - b[i];
    s += d * d;
  }
  return s / a.size();
}

double psnr(const Tensor<float>& a, const Tensor<float>& b) {
  const double m = mse(a, b);
  if (m < 1e-12) return 120.0;  // capped so reports stay finite
  return 10.0 * std::log10(1.0 / m);
}

std::string MetricReport::serialize() const {
  std::ostringstream o;
  for (const auto& [k, v] : entries) o << k << "=" << double_text(v) << "\n";
  return o.str();
}

void MetricReport::save(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw IoError(path + ": cannot open for writing");
  out << serialize();
  if (!out) throw IoError(path + ": write failed");
}

}  // namespace flexvar::eval
