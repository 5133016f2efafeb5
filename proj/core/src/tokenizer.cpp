#include "flexvar/tokenizer.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace flexvar::tok {

std::vector<sched::GridSize> pyramid_sizes(Rng& rng, int k, sched::GridSize full) {
  if (k < 2) throw std::invalid_argument("sample_scale_pyramid: K must be >= 2");
  if (full.h < 2 || full.w < 2)
    throw std::invalid_argument("sample_scale_pyramid: full grid must be >= 2x2");
  const int available = full.h - 1;  // side lengths {1..h-1}
  const int wanted = k - 1;
  if (wanted > available)
    throw std::invalid_argument("sample_scale_pyramid: K exceeds available distinct sizes");

  std::vector<int> pool(available);
  for (int i = 0; i < available; ++i) pool[i] = 1 + i;
  for (int i = 0; i < wanted; ++i) {
    const int j = i + static_cast<int>(rng.below(available - i));
    std::swap(pool[i], pool[j]);
  }
  std::vector<int> mids(pool.begin(), pool.begin() + wanted);
  std::sort(mids.begin(), mids.end());

  std::vector<sched::GridSize> sizes;
  for (int side : mids) {
    const int w = std::max(
        1, static_cast<int>(std::lround(static_cast<double>(side) * full.w / full.h)));
    sizes.push_back({side, w});
  }
  sizes.push_back(full);
  return sizes;
}

}  // namespace flexvar::tok
