#include "flexvar/scheduler.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>

namespace flexvar::sched {

namespace {

// 16×16-grid side lengths per step count.
const std::map<int, std::vector<int>>& base_tables() {
  static const std::map<int, std::vector<int>> t = {
      {6, {1, 2, 4, 6, 10, 16}},
      {7, {1, 2, 3, 5, 8, 11, 16}},
      {8, {1, 2, 3, 4, 6, 10, 13, 16}},
      {9, {1, 2, 3, 4, 5, 7, 10, 13, 16}},
      {10, {1, 2, 3, 4, 5, 6, 8, 10, 13, 16}},
      {11, {1, 2, 3, 4, 5, 6, 7, 9, 11, 13, 16}},
      {12, {1, 2, 3, 4, 5, 6, 7, 8, 10, 12, 14, 16}},
      {13, {1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 12, 14, 16}},
  };
  return t;
}

int proportional_width(int side, GridSize full) {
  const long w = std::lround(static_cast<double>(side) * full.w / full.h);
  return std::max(1, static_cast<int>(w));
}

}  // namespace

void ScaleSchedule::validate(GridSize target, bool require_unit_first) const {
  if (sizes.empty()) throw std::invalid_argument("schedule: empty");
  if (require_unit_first && !(sizes.front() == GridSize{1, 1}))
    throw std::invalid_argument("schedule: first step must be 1x1");
  if (!(sizes.back() == target)) throw std::invalid_argument("schedule: last step != target grid");
  for (std::size_t i = 0; i < sizes.size(); ++i) {
    if (sizes[i].h < 1 || sizes[i].w < 1) throw std::invalid_argument("schedule: size < 1");
    if (i == 0) continue;
    const auto a = sizes[i - 1];
    const auto b = sizes[i];
    if (a.h > b.h || a.w > b.w ||
        static_cast<long>(a.h) * a.w >= static_cast<long>(b.h) * b.w)
      throw std::invalid_argument("schedule: not strictly increasing");
  }
}

ScaleSchedule sample_training_schedule(Rng& rng, int max_steps, GridSize full, double drop_p,
                                       int max_drops) {
  if (max_steps < 2) throw std::invalid_argument("sample_training_schedule: max_steps < 2");
  if (full.h < 2 || full.w < 2)
    throw std::invalid_argument("sample_training_schedule: full grid must be >= 2x2");
  const int available = full.h - 2;  // side lengths strictly between 1 and full.h
  const int wanted = max_steps - 2;
  if (wanted > available)
    throw std::invalid_argument("sample_training_schedule: not enough distinct sizes");

  // Uniform without replacement via partial Fisher-Yates over {2..h-1}.
  std::vector<int> pool(available);
  for (int i = 0; i < available; ++i) pool[i] = 2 + i;
  for (int i = 0; i < wanted; ++i) {
    const int j = i + static_cast<int>(rng.below(available - i));
    std::swap(pool[i], pool[j]);
  }
  std::vector<int> mids(pool.begin(), pool.begin() + wanted);
  std::sort(mids.begin(), mids.end());

  int drops = 0;
  ScaleSchedule out;
  out.sizes.push_back({1, 1});
  for (int side : mids) {
    if (drops < max_drops && rng.uniform() < drop_p) {
      ++drops;
      continue;
    }
    out.sizes.push_back({side, proportional_width(side, full)});
  }
  out.sizes.push_back(full);
  out.validate(full);
  return out;
}

ScaleSchedule inference_schedule(const std::string& name, GridSize full) {
  if (name == "default" && full == GridSize{8, 8})
    return schedule_from_sizes(
        {{1, 1}, {2, 2}, {3, 3}, {4, 4}, {5, 5}, {6, 6}, {8, 8}}, full);

  std::string key = (name == "default") ? "10-step" : name;
  int steps = 0;
  if (key.size() > 5 && key.substr(key.size() - 5) == "-step") {
    try {
      steps = std::stoi(key.substr(0, key.size() - 5));
    } catch (...) {
      steps = 0;
    }
  }
  auto it = base_tables().find(steps);
  if (it == base_tables().end())
    throw std::invalid_argument("inference_schedule: unknown schedule name '" + name + "'");

  ScaleSchedule out;
  for (int s : it->second) {
    const int h = std::max(1, static_cast<int>(std::lround(static_cast<double>(s) * full.h / 16)));
    const int w = std::max(1, static_cast<int>(std::lround(static_cast<double>(s) * full.w / 16)));
    const GridSize g{h, w};
    if (!out.sizes.empty() && out.sizes.back() == g) continue;
    out.sizes.push_back(g);
  }
  out.sizes.front() = {1, 1};
  out.sizes.back() = full;
  // Rounding can leave a next-to-last step equal to the endpoint.
  for (std::size_t i = 1; i + 1 < out.sizes.size();) {
    if (out.sizes[i].h >= out.sizes[i + 1].h && out.sizes[i].w >= out.sizes[i + 1].w)
      out.sizes.erase(out.sizes.begin() + i);
    else
      ++i;
  }
  out.validate(full);
  return out;
}

ScaleSchedule aspect_schedule(GridSize target, const std::vector<int>& base_steps) {
  if (target.h < 1 || target.w < 1) throw std::invalid_argument("aspect_schedule: bad target");
  std::vector<int> steps = base_steps;
  if (steps.empty()) steps = base_tables().at(10);
  ScaleSchedule out;
  for (int i : steps) {
    const GridSize g{std::max(1, target.h * i / 16), std::max(1, target.w * i / 16)};
    if (!out.sizes.empty() && out.sizes.back() == g) continue;
    out.sizes.push_back(g);
  }
  out.sizes.back() = target;
  for (std::size_t i = 1; i + 1 < out.sizes.size();) {
    if (out.sizes[i].h >= out.sizes[i + 1].h && out.sizes[i].w >= out.sizes[i + 1].w)
      out.sizes.erase(out.sizes.begin() + i);
    else
      ++i;
  }
  // Aspect schedules on wide grids may legitimately start below (1,1) on one
  // axis only, e.g. (1,2) for a 16x32 grid.
  out.validate(target, /*require_unit_first=*/false);
  return out;
}

ScaleSchedule schedule_from_sizes(std::vector<GridSize> sizes, GridSize target) {
  ScaleSchedule out{std::move(sizes)};
  out.validate(target);
  return out;
}

}  // namespace flexvar::sched
