#pragma once

#include <string>

#include "flexvar/tensor.hpp"

namespace flexvar::io {

// Reads a binary portable pixmap (P6, maxval 255) into a 3×H×W tensor with
// values pixel/255. Throws IoError naming the byte offset on malformed input.
Tensor<float> read_ppm(const std::string& path);

// Writes a 3×H×W tensor in [0,1] as P6 with maxval 255 (values rounded and
// clamped). read(write(x)) matches x within 1/255 per channel.
void write_ppm(const std::string& path, const Tensor<float>& image);

// Reads a mask image into an H×W tensor in [0,1]. Accepts P5 (graymap)
// directly or P6 (channel mean).
Tensor<float> read_mask(const std::string& path);

// Writes an H×W tensor in [0,1] as a P5 graymap.
void write_pgm(const std::string& path, const Tensor<float>& mask);

}  // namespace flexvar::io
