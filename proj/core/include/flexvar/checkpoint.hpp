#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "flexvar/model.hpp"
#include "flexvar/tensor.hpp"
#include "flexvar/tokenizer.hpp"

namespace flexvar::ckpt {

inline constexpr std::uint32_t kFormatVersion = 1;

struct NamedTensor {
  std::string name;
  Tensor<float> tensor;
};

// CRC-32 (IEEE 802.3 polynomial, reflected).
std::uint32_t crc32(const void* data, std::size_t n, std::uint32_t crc = 0);

// Container: "FXVR", version u32 LE, count u64 LE, per tensor
// (name-length u32 + UTF-8 bytes, rank u32, extents u64[rank], f32 LE
// payload), trailing CRC32 of all preceding bytes. Bit-exact round trip.
void save(const std::string& path, const std::vector<NamedTensor>& tensors);

// Throws IoError on unreadable files, malformed containers, or CRC mismatch.
std::vector<NamedTensor> load(const std::string& path);

// CRC32 of a whole file, as used for manifest lines.
std::uint32_t file_crc(const std::string& path);

// ---- parameter-set packing ("tok."/"ar." name prefixes + meta tensors) ----

void save_tokenizer(const std::string& path, const tok::TokenizerParams<float>& params);
tok::TokenizerParams<float> load_tokenizer(const std::string& path);

void save_model(const std::string& path, const model::ModelParams<float>& params);
model::ModelParams<float> load_model(const std::string& path);

}  // namespace flexvar::ckpt
