#include "flexvar/image_io.hpp"

#include <cmath>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <vector>

#include "flexvar/errors.hpp"

namespace flexvar::io {

namespace {

[[noreturn]] void bad(const std::string& path, std::size_t offset, const std::string& what) {
  throw IoError(path + ": " + what + " at byte " + std::to_string(offset));
}

struct Reader {
  std::string path;
  std::vector<unsigned char> bytes;
  std::size_t pos = 0;

  explicit Reader(const std::string& p) : path(p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw IoError(p + ": cannot open for reading");
    bytes.assign(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
  }

  void skip_space() {
    while (pos < bytes.size()) {
      const unsigned char c = bytes[pos];
      if (c == '#') {  // comment runs to end of line
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else if (c == ' ' || c == '\t' || c == '\r' || c == '\n') {
        ++pos;
      } else {
        break;
      }
    }
  }

  int read_int() {
    skip_space();
    const std::size_t start = pos;
    long v = 0;
    while (pos < bytes.size() && bytes[pos] >= '0' && bytes[pos] <= '9') {
      v = v * 10 + (bytes[pos] - '0');
      if (v > 1 << 24) bad(path, start, "header value out of range");
      ++pos;
    }
    if (pos == start) bad(path, pos, "expected decimal header field");
    return static_cast<int>(v);
  }
};

// Returns C×H×W with C = 3 (P6) or 1 (P5).
Tensor<float> read_anymap(const std::string& path) {
  Reader r(path);
  if (r.bytes.size() < 2 || r.bytes[0] != 'P' || (r.bytes[1] != '5' && r.bytes[1] != '6'))
    bad(path, 0, "not a P5/P6 portable anymap");
  const int channels = r.bytes[1] == '6' ? 3 : 1;
  r.pos = 2;
  const int w = r.read_int();
  const int h = r.read_int();
  const int maxval = r.read_int();
  if (w <= 0 || h <= 0) bad(path, r.pos, "non-positive dimensions");
  if (maxval != 255) bad(path, r.pos, "unsupported maxval (expected 255)");
  if (r.pos >= r.bytes.size()) bad(path, r.pos, "missing whitespace after maxval");
  const unsigned char sep = r.bytes[r.pos];
  if (sep != ' ' && sep != '\t' && sep != '\r' && sep != '\n')
    bad(path, r.pos, "expected single whitespace after maxval");
  ++r.pos;
  const std::size_t need = static_cast<std::size_t>(w) * h * channels;
  if (r.bytes.size() - r.pos < need)
    bad(path, r.bytes.size(), "truncated pixel payload");
  Tensor<float> out({static_cast<std::size_t>(channels), static_cast<std::size_t>(h),
                     static_cast<std::size_t>(w)});
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < channels; ++c) {
        const unsigned char b = r.bytes[r.pos + (static_cast<std::size_t>(y) * w + x) * channels + c];
        out.at3(c, y, x) = static_cast<float>(b) / 255.0f;
      }
  return out;
}

unsigned char to_byte(float v) {
  const float s = std::round(v * 255.0f);
  return static_cast<unsigned char>(s < 0.0f ? 0.0f : (s > 255.0f ? 255.0f : s));
}

void write_anymap(const std::string& path, const Tensor<float>& img, int channels) {
  const std::size_t h = img.dim(img.shape.size() - 2), w = img.dim(img.shape.size() - 1);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError(path + ": cannot open for writing");
  out << (channels == 3 ? "P6" : "P5") << '\n' << w << ' ' << h << '\n' << 255 << '\n';
  std::vector<unsigned char> row(w * channels);
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x)
      for (int c = 0; c < channels; ++c)
        row[x * channels + c] =
            to_byte(channels == 3 ? img.at3(c, y, x) : img.at2(y, x));
    out.write(reinterpret_cast<const char*>(row.data()), static_cast<std::streamsize>(row.size()));
  }
  if (!out) throw IoError(path + ": write failed");
}

}  // namespace

Tensor<float> read_ppm(const std::string& path) {
  Tensor<float> t = read_anymap(path);
  if (t.dim(0) != 3) throw IoError(path + ": expected P6 (3 channels) at byte 1");
  return t;
}

void write_ppm(const std::string& path, const Tensor<float>& image) {
  if (image.shape.size() != 3 || image.dim(0) != 3)
    throw std::invalid_argument("write_ppm: expected 3×H×W tensor");
  write_anymap(path, image, 3);
}

Tensor<float> read_mask(const std::string& path) {
  Tensor<float> t = read_anymap(path);
  const std::size_t h = t.dim(1), w = t.dim(2);
  Tensor<float> m({h, w});
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x) {
      float v = 0;
      for (std::size_t c = 0; c < t.dim(0); ++c) v += t.at3(c, y, x);
      m.at2(y, x) = v / t.dim(0);
    }
  return m;
}

void write_pgm(const std::string& path, const Tensor<float>& mask) {
  if (mask.shape.size() != 2) throw std::invalid_argument("write_pgm: expected H×W tensor");
  write_anymap(path, mask, 1);
}

}  // namespace flexvar::io
