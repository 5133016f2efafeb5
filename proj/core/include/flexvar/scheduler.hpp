#pragma once

#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "flexvar/rng.hpp"

namespace flexvar::sched {

struct GridSize {
  int h = 0;
  int w = 0;
  bool operator==(const GridSize&) const = default;
};

// One autoregressive pass: ordered token-grid sizes, first (1,1), strictly
// increasing, last equal to the target latent grid.
struct ScaleSchedule {
  std::vector<GridSize> sizes;

  std::size_t steps() const { return sizes.size(); }
  std::size_t total_tokens() const {
    std::size_t n = 0;
    for (auto s : sizes) n += static_cast<std::size_t>(s.h) * s.w;
    return n;
  }
  GridSize full() const { return sizes.back(); }

  // Throws std::invalid_argument on any violated invariant.
  void validate(GridSize target, bool require_unit_first = true) const;
};

// Randomized training schedule: first (1,1), last = full, intermediates drawn
// uniformly without replacement from side lengths strictly between 1 and
// full.h (width proportional), then dropped independently with probability
// drop_p up to max_drops, first/last never dropped.
ScaleSchedule sample_training_schedule(Rng& rng, int max_steps, GridSize full, double drop_p,
                                       int max_drops);

// Named presets ("default", "6-step" .. "13-step") defined on the 16×16 grid
// and rescaled to other grids by round(s * h / 16) with duplicates removed and
// endpoints forced.
ScaleSchedule inference_schedule(const std::string& name, GridSize full);

// Schedule for an arbitrary latent grid (h,w): sizes
// (max(1, int(h*i/16)), max(1, int(w*i/16))) for i in base_steps, consecutive
// duplicates collapsed, endpoints forced.
ScaleSchedule aspect_schedule(GridSize target, const std::vector<int>& base_steps = {});

// Explicit [h,w] list; validated against `target`.
ScaleSchedule schedule_from_sizes(std::vector<GridSize> sizes, GridSize target);

}  // namespace flexvar::sched
