#include "flexvar/checkpoint.hpp"

#include <array>
#include <cstring>
#include <fstream>

#include "flexvar/errors.hpp"

namespace flexvar::ckpt {

namespace {

std::array<std::uint32_t, 256> make_crc_table() {
  std::array<std::uint32_t, 256> t{};
  for (std::uint32_t i = 0; i < 256; ++i) {
    std::uint32_t c = i;
    for (int k = 0; k < 8; ++k) c = (c & 1) ? 0xEDB88320u ^ (c >> 1) : c >> 1;
    t[i] = c;
  }
  return t;
}

const std::array<std::uint32_t, 256> kCrcTable = make_crc_table();

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

struct Cursor {
  const std::string& path;
  const std::string& bytes;
  std::size_t pos = 0;

  void need(std::size_t n, const char* what) {
    if (bytes.size() - pos < n)
      throw IoError(path + ": truncated checkpoint (" + what + " at byte " +
                    std::to_string(pos) + ")");
  }
  std::uint32_t u32(const char* what) {
    need(4, what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i)
      v |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[pos + i])) << (8 * i);
    pos += 4;
    return v;
  }
  std::uint64_t u64(const char* what) {
    need(8, what);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i)
      v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes[pos + i])) << (8 * i);
    pos += 8;
    return v;
  }
};

template <typename Params>
std::vector<NamedTensor> pack(const Params& params, const std::string& prefix,
                              Tensor<float> meta) {
  std::vector<NamedTensor> out;
  out.push_back({prefix + "meta", std::move(meta)});
  auto& mut = const_cast<Params&>(params);  // visitation only reads here
  visit_params<float>(mut, [&](const std::string& n, Tensor<float>& t) {
    out.push_back({prefix + n, t});
  });
  return out;
}

template <typename Params>
void unpack_into(Params& params, const std::string& prefix, const std::string& path,
                 const std::vector<NamedTensor>& tensors) {
  std::size_t filled = 0;
  visit_params<float>(params, [&](const std::string& n, Tensor<float>& t) {
    const std::string full = prefix + n;
    for (const auto& nt : tensors)
      if (nt.name == full) {
        if (nt.tensor.shape != t.shape)
          throw IoError(path + ": tensor " + full + " has unexpected shape");
        t = nt.tensor;
        ++filled;
        return;
      }
    throw IoError(path + ": missing tensor " + full);
  });
  if (filled + 1 != tensors.size())
    throw IoError(path + ": checkpoint holds unexpected extra tensors");
}

const Tensor<float>& find_meta(const std::string& path, const std::vector<NamedTensor>& tensors,
                               const std::string& name, std::size_t count) {
  for (const auto& nt : tensors)
    if (nt.name == name) {
      if (nt.tensor.size() != count) throw IoError(path + ": malformed " + name);
      return nt.tensor;
    }
  throw IoError(path + ": missing tensor " + name);
}

}  // namespace

std::uint32_t crc32(const void* data, std::size_t n, std::uint32_t crc) {
  const auto* p = static_cast<const unsigned char*>(data);
  crc = ~crc;
  for (std::size_t i = 0; i < n; ++i) crc = kCrcTable[(crc ^ p[i]) & 0xFF] ^ (crc >> 8);
  return ~crc;
}

void save(const std::string& path, const std::vector<NamedTensor>& tensors) {
  std::string buf;
  buf += "FXVR";
  put_u32(buf, kFormatVersion);
  put_u64(buf, tensors.size());
  for (const auto& nt : tensors) {
    put_u32(buf, static_cast<std::uint32_t>(nt.name.size()));
    buf += nt.name;
    put_u32(buf, static_cast<std::uint32_t>(nt.tensor.shape.size()));
    for (std::size_t e : nt.tensor.shape) put_u64(buf, e);
    static_assert(sizeof(float) == 4);
    const std::size_t at = buf.size();
    buf.resize(at + nt.tensor.size() * 4);
    std::memcpy(buf.data() + at, nt.tensor.data.data(), nt.tensor.size() * 4);
  }
  put_u32(buf, crc32(buf.data(), buf.size()));
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError(path + ": cannot open for writing");
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!out) throw IoError(path + ": write failed");
}

std::vector<NamedTensor> load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(path + ": cannot open for reading");
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (bytes.size() < 4 + 4 + 8 + 4) throw IoError(path + ": file too short for a checkpoint");
  std::uint32_t stored = 0;
  for (int i = 0; i < 4; ++i)
    stored |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[bytes.size() - 4 + i]))
              << (8 * i);
  if (crc32(bytes.data(), bytes.size() - 4) != stored)
    throw IoError(path + ": CRC mismatch, refusing to load");
  Cursor c{path, bytes};
  c.need(4, "magic");
  if (bytes.compare(0, 4, "FXVR") != 0) throw IoError(path + ": bad magic at byte 0");
  c.pos = 4;
  const std::uint32_t version = c.u32("version");
  if (version != kFormatVersion)
    throw IoError(path + ": unsupported format version " + std::to_string(version));
  const std::uint64_t count = c.u64("tensor count");
  std::vector<NamedTensor> out;
  out.reserve(count);
  for (std::uint64_t i = 0; i < count; ++i) {
    const std::uint32_t name_len = c.u32("name length");
    c.need(name_len, "name");
    std::string name = bytes.substr(c.pos, name_len);
    c.pos += name_len;
    const std::uint32_t rank = c.u32("rank");
    if (rank > 8) throw IoError(path + ": implausible tensor rank");
    std::vector<std::size_t> shape(rank);
    std::size_t n = 1;
    for (std::uint32_t r = 0; r < rank; ++r) {
      shape[r] = static_cast<std::size_t>(c.u64("extent"));
      n *= shape[r];
    }
    c.need(n * 4, "payload");
    Tensor<float> t(shape);
    std::memcpy(t.data.data(), bytes.data() + c.pos, n * 4);
    c.pos += n * 4;
    out.push_back({std::move(name), std::move(t)});
  }
  if (c.pos != bytes.size() - 4) throw IoError(path + ": trailing bytes before CRC");
  return out;
}

std::uint32_t file_crc(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(path + ": cannot open for reading");
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return crc32(bytes.data(), bytes.size());
}

void save_tokenizer(const std::string& path, const tok::TokenizerParams<float>& params) {
  const auto& c = params.cfg;
  Tensor<float> meta({6}, {static_cast<float>(c.patch), static_cast<float>(c.channels),
                           static_cast<float>(c.vocab), static_cast<float>(c.hidden),
                           static_cast<float>(c.blocks), static_cast<float>(c.pyramid_k)});
  save(path, pack(params, "tok.", std::move(meta)));
}

tok::TokenizerParams<float> load_tokenizer(const std::string& path) {
  const auto tensors = load(path);
  const auto& meta = find_meta(path, tensors, "tok.meta", 6);
  tok::TokenizerConfig cfg;
  cfg.patch = static_cast<int>(meta[0]);
  cfg.channels = static_cast<int>(meta[1]);
  cfg.vocab = static_cast<int>(meta[2]);
  cfg.hidden = static_cast<int>(meta[3]);
  cfg.blocks = static_cast<int>(meta[4]);
  cfg.pyramid_k = static_cast<int>(meta[5]);
  Rng rng(0);
  auto params = tok::init_tokenizer<float>(cfg, rng);
  unpack_into(params, "tok.", path, tensors);
  return params;
}

void save_model(const std::string& path, const model::ModelParams<float>& params) {
  const auto& c = params.cfg;
  Tensor<float> meta({9}, {static_cast<float>(c.depth), static_cast<float>(c.dim),
                           static_cast<float>(c.heads), static_cast<float>(c.vocab),
                           static_cast<float>(c.class_count),
                           static_cast<float>(c.latent_channels),
                           static_cast<float>(c.pe_extent_h), static_cast<float>(c.pe_extent_w),
                           c.mode == model::Mode::Residual ? 1.0f : 0.0f});
  save(path, pack(params, "ar.", std::move(meta)));
}

model::ModelParams<float> load_model(const std::string& path) {
  const auto tensors = load(path);
  const auto& meta = find_meta(path, tensors, "ar.meta", 9);
  model::ModelConfig cfg;
  cfg.depth = static_cast<int>(meta[0]);
  cfg.dim = static_cast<int>(meta[1]);
  cfg.heads = static_cast<int>(meta[2]);
  cfg.vocab = static_cast<int>(meta[3]);
  cfg.class_count = static_cast<int>(meta[4]);
  cfg.latent_channels = static_cast<int>(meta[5]);
  cfg.pe_extent_h = static_cast<int>(meta[6]);
  cfg.pe_extent_w = static_cast<int>(meta[7]);
  cfg.mode = meta[8] != 0.0f ? model::Mode::Residual : model::Mode::GT;
  Rng rng(0);
  auto params = model::init_model<float>(cfg, rng);
  unpack_into(params, "ar.", path, tensors);
  return params;
}

}  // namespace flexvar::ckpt
