#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <string_view>

namespace flexvar {

// Counter-based generator: each draw is a stateless hash of (key, counter),
// so streams can be forked by name/index and replayed bit-exactly on any
// platform. Derived streams never alias their parent.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : key_(mix(0x9e3779b97f4a7c15ull, seed)) {}

  Rng stream(std::uint64_t id) const { return Rng(key_, mix(key_, id ^ 0xa5a5a5a5deadbeefull)); }
  Rng stream(std::string_view name) const { return stream(fnv1a(name)); }

  std::uint64_t next_u64() { return mix(key_, counter_++); }

  // [0, 1)
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }
  float uniform_float() { return static_cast<float>(next_u64() >> 40) * 0x1.0p-24f; }

  // Unbiased enough for schedule sampling; n must be > 0.
  std::uint64_t below(std::uint64_t n) { return next_u64() % n; }

  double normal() {
    double u1 = uniform();
    double u2 = uniform();
    if (u1 <= 0.0) u1 = 0x1.0p-53;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

 private:
  Rng(std::uint64_t parent_key, std::uint64_t derived) : key_(derived) { (void)parent_key; }

  static std::uint64_t mix(std::uint64_t key, std::uint64_t x) {
    std::uint64_t z = x + key + 0x9e3779b97f4a7c15ull;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  static std::uint64_t fnv1a(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c : s) {
      h ^= c;
      h *= 0x100000001b3ull;
    }
    return h;
  }

  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

}  // namespace flexvar
