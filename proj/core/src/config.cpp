#include "flexvar/config.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include "flexvar/errors.hpp"

namespace flexvar::cfg {

namespace {

std::string trim(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  std::size_t b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

[[noreturn]] void fail(const std::string& origin, int line, const std::string& what) {
  throw std::invalid_argument(origin + ":" + std::to_string(line) + ": " + what);
}

template <typename T>
T parse_number(const std::string& origin, int line, const std::string& v) {
  T out{};
  const char* first = v.data();
  const char* last = v.data() + v.size();
  auto [ptr, ec] = std::from_chars(first, last, out);
  if (ec != std::errc() || ptr != last) fail(origin, line, "cannot parse value '" + v + "'");
  return out;
}

// Shortest round-trip decimal form (std::to_chars).
template <typename T>
std::string number_text(T v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  (void)ec;
  return std::string(buf, ptr);
}

}  // namespace

RunConfig parse_config(const std::string& text, const std::string& origin) {
  RunConfig cfg;
  std::istringstream in(text);
  std::string raw, section;
  int line = 0;
  while (std::getline(in, raw)) {
    ++line;
    std::string s = trim(raw);
    if (s.empty() || s[0] == '#') continue;
    if (s.front() == '[') {
      if (s.back() != ']') fail(origin, line, "unterminated section header");
      section = trim(s.substr(1, s.size() - 2));
      if (section != "data" && section != "tokenizer" && section != "model" &&
          section != "train")
        fail(origin, line, "unknown section [" + section + "]");
      continue;
    }
    const std::size_t eq = s.find('=');
    if (eq == std::string::npos) fail(origin, line, "expected 'key = value'");
    const std::string key = trim(s.substr(0, eq));
    const std::string val = trim(s.substr(eq + 1));
    if (key.empty() || val.empty()) fail(origin, line, "empty key or value");
    auto i = [&] { return parse_number<int>(origin, line, val); };
    auto u = [&] { return parse_number<std::uint64_t>(origin, line, val); };
    auto f = [&] { return parse_number<float>(origin, line, val); };
    auto d = [&] { return parse_number<double>(origin, line, val); };

    if (section == "data") {
      if (key == "count") cfg.data_count = i();
      else if (key == "seed") cfg.data_seed = u();
      else if (key == "image_size") cfg.image_size = i();
      else fail(origin, line, "unknown key '" + key + "' in [data]");
    } else if (section == "tokenizer") {
      if (key == "patch") cfg.tokenizer.patch = i();
      else if (key == "channels") cfg.tokenizer.channels = i();
      else if (key == "vocab") cfg.tokenizer.vocab = i();
      else if (key == "hidden") cfg.tokenizer.hidden = i();
      else if (key == "blocks") cfg.tokenizer.blocks = i();
      else if (key == "pyramid_k") cfg.tokenizer.pyramid_k = i();
      else fail(origin, line, "unknown key '" + key + "' in [tokenizer]");
    } else if (section == "model") {
      if (key == "depth") cfg.model.depth = i();
      else if (key == "dim") cfg.model.dim = i();
      else if (key == "heads") cfg.model.heads = i();
      else if (key == "vocab") cfg.model.vocab = i();
      else if (key == "class_count") cfg.model.class_count = i();
      else if (key == "latent_channels") cfg.model.latent_channels = i();
      else if (key == "pe_extent_h") cfg.model.pe_extent_h = i();
      else if (key == "pe_extent_w") cfg.model.pe_extent_w = i();
      else if (key == "mode") {
        if (val == "gt") cfg.model.mode = model::Mode::GT;
        else if (val == "residual") cfg.model.mode = model::Mode::Residual;
        else fail(origin, line, "mode must be gt or residual");
      } else fail(origin, line, "unknown key '" + key + "' in [model]");
    } else if (section == "train") {
      if (key == "batch") cfg.train.batch = i();
      else if (key == "iterations") cfg.train.iterations = i();
      else if (key == "lr") cfg.train.lr = f();
      else if (key == "seed") cfg.train.seed = u();
      else if (key == "max_steps") cfg.train.max_steps = i();
      else if (key == "drop_p") cfg.train.drop_p = d();
      else if (key == "max_drops") cfg.train.max_drops = i();
      else if (key == "class_drop") cfg.train.class_drop = f();
      else if (key == "grad_clip") cfg.train.grad_clip = f();
      else fail(origin, line, "unknown key '" + key + "' in [train]");
    } else {
      fail(origin, line, "key '" + key + "' outside any section");
    }
  }
  return cfg;
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError(path + ": cannot open for reading");
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return parse_config(text, path);
}

std::string serialize_config(const RunConfig& cfg) {
  std::ostringstream o;
  o << "[data]\n";
  o << "count = " << cfg.data_count << "\n";
  o << "seed = " << cfg.data_seed << "\n";
  o << "image_size = " << cfg.image_size << "\n";
  o << "\n[tokenizer]\n";
  o << "patch = " << cfg.tokenizer.patch << "\n";
  o << "channels = " << cfg.tokenizer.channels << "\n";
  o << "vocab = " << cfg.tokenizer.vocab << "\n";
  o << "hidden = " << cfg.tokenizer.hidden << "\n";
  o << "blocks = " << cfg.tokenizer.blocks << "\n";
  o << "pyramid_k = " << cfg.tokenizer.pyramid_k << "\n";
  o << "\n[model]\n";
  o << "depth = " << cfg.model.depth << "\n";
  o << "dim = " << cfg.model.dim << "\n";
  o << "heads = " << cfg.model.heads << "\n";
  o << "vocab = " << cfg.model.vocab << "\n";
  o << "class_count = " << cfg.model.class_count << "\n";
  o << "latent_channels = " << cfg.model.latent_channels << "\n";
  o << "pe_extent_h = " << cfg.model.pe_extent_h << "\n";
  o << "pe_extent_w = " << cfg.model.pe_extent_w << "\n";
  o << "mode = " << (cfg.model.mode == model::Mode::Residual ? "residual" : "gt") << "\n";
  o << "\n[train]\n";
  o << "batch = " << cfg.train.batch << "\n";
  o << "iterations = " << cfg.train.iterations << "\n";
  o << "lr = " << number_text(cfg.train.lr) << "\n";
  o << "seed = " << cfg.train.seed << "\n";
  o << "max_steps = " << cfg.train.max_steps << "\n";
  o << "drop_p = " << number_text(cfg.train.drop_p) << "\n";
  o << "max_drops = " << cfg.train.max_drops << "\n";
  o << "class_drop = " << number_text(cfg.train.class_drop) << "\n";
  o << "grad_clip = " << number_text(cfg.train.grad_clip) << "\n";
  return o.str();
}

}  // namespace flexvar::cfg
