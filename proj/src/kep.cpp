#include "evd/kep.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "evd/error.hpp"
#include "evd/rng.hpp"

namespace evd {

namespace {

struct Norm {
  double inv_x, inv_y, inv_t;
};

Norm normalizer(const EventStream& s) {
  return {s.width > 1 ? 1.0 / (s.width - 1) : 0.0,
          s.height > 1 ? 1.0 / (s.height - 1) : 0.0,
          s.window_us > 0 ? 1.0 / s.window_us : 0.0};
}

}  // namespace

size_t ProbabilityGrid::total() const {
  return std::accumulate(counts.begin(), counts.end(), size_t{0});
}

ClusterCenter cluster_center(const EventStream& stream) {
  if (stream.empty()) throw_data("cluster center of an empty stream");
  const Norm n = normalizer(stream);
  double sx = 0, sy = 0, st = 0;
  for (const Event& e : stream.events) {
    sx += e.x * n.inv_x;
    sy += e.y * n.inv_y;
    st += e.t * n.inv_t;
  }
  const double inv = 1.0 / static_cast<double>(stream.size());
  return {sx * inv, sy * inv, st * inv};
}

std::vector<uint32_t> extract_main_indices(const EventStream& stream,
                                           const KepConfig& config) {
  if (stream.empty()) throw_data("main extraction of an empty stream");
  const ClusterCenter c = cluster_center(stream);
  const Norm n = normalizer(stream);
  const double r2 = config.radius * config.radius;
  std::vector<uint32_t> keep;
  for (uint32_t i = 0; i < stream.size(); ++i) {
    const Event& e = stream.events[i];
    const double dx = e.x * n.inv_x - c.x;
    const double dy = e.y * n.inv_y - c.y;
    const double dt = e.t * n.inv_t - c.t;
    if (dx * dx + dy * dy + dt * dt <= r2) keep.push_back(i);
  }
  return keep;
}

EventStream extract_main(const EventStream& stream, const KepConfig& config) {
  EventStream out;
  out.width = stream.width;
  out.height = stream.height;
  out.window_us = stream.window_us;
  for (uint32_t i : extract_main_indices(stream, config))
    out.events.push_back(stream.events[i]);
  return out;
}

uint32_t key_count(uint32_t main_size, double lambda1, double lambda2) {
  const double m = main_size;
  double target;
  if (main_size < 500) {
    return main_size;
  } else if (main_size < 1000) {
    target = 0.5 * lambda1 * (1.0 + std::exp(1.0 / (m - lambda1)));
  } else {
    target = 0.5 * lambda2 * (1.0 + std::exp(1.0 / (m - lambda2)));
  }
  const auto floored = static_cast<uint32_t>(std::floor(target));
  return std::min(floored, main_size);
}

ProbabilityGrid histogram_prob(const EventStream& stream, int cells_per_axis) {
  if (stream.empty()) throw_data("histogram of an empty stream");
  if (cells_per_axis < 1) throw_data("histogram needs at least one cell per axis");
  const int k = cells_per_axis;
  ProbabilityGrid grid;
  grid.cells_per_axis = k;
  grid.counts.assign(static_cast<size_t>(k) * k * k, 0);

  const Norm n = normalizer(stream);
  auto cell = [k](double v) {
    int c = static_cast<int>(std::floor(v * k));
    return std::clamp(c, 0, k - 1);
  };
  for (const Event& e : stream.events) {
    const int cx = cell(e.x * n.inv_x);
    const int cy = cell(e.y * n.inv_y);
    const int ct = cell(e.t * n.inv_t);
    ++grid.counts[(static_cast<size_t>(cx) * k + cy) * k + ct];
  }
  const double inv_total = 1.0 / static_cast<double>(stream.size());
  grid.probs.resize(grid.counts.size());
  for (size_t i = 0; i < grid.counts.size(); ++i)
    grid.probs[i] = grid.counts[i] * inv_total;
  return grid;
}

double kl_divergence(const ProbabilityGrid& p, const ProbabilityGrid& q) {
  if (p.cells_per_axis != q.cells_per_axis)
    throw_data("KL divergence over mismatched grids");
  if (p.counts == q.counts) return 0.0;

  const double cells = static_cast<double>(p.counts.size());
  const double eps = 1.0 / cells;
  const double q_total = static_cast<double>(q.total()) + cells * eps;
  double kl = 0.0;
  for (size_t i = 0; i < p.counts.size(); ++i) {
    if (p.counts[i] == 0) continue;  // 0 * log 0 = 0
    const double pi = p.probs[i];
    const double qi = (q.counts[i] + eps) / q_total;
    kl += pi * std::log(pi / qi);
  }
  return kl;
}

std::vector<uint32_t> extract_key_indices(const EventStream& main,
                                          const KepConfig& config) {
  if (main.empty()) throw_data("key extraction of an empty stream");
  if (config.trials < 1) throw_data("key extraction needs at least one trial");

  const auto m = static_cast<uint32_t>(main.size());
  const uint32_t m_key = key_count(m, config.lambda1, config.lambda2);
  if (m_key >= m) {
    std::vector<uint32_t> all(m);
    std::iota(all.begin(), all.end(), 0);
    return all;
  }

  const ProbabilityGrid main_grid = histogram_prob(main, config.cells_per_axis);
  Rng rng(config.seed);

  std::vector<uint32_t> pool(m);
  std::vector<uint32_t> best;
  double best_kl = 0;

  EventStream candidate;
  candidate.width = main.width;
  candidate.height = main.height;
  candidate.window_us = main.window_us;

  for (int trial = 0; trial < config.trials; ++trial) {
    std::iota(pool.begin(), pool.end(), 0);
    // Fisher-Yates prefix of length m_key.
    for (uint32_t i = 0; i < m_key; ++i) {
      const auto j = i + static_cast<uint32_t>(rng.below(m - i));
      std::swap(pool[i], pool[j]);
    }
    std::vector<uint32_t> subset(pool.begin(), pool.begin() + m_key);
    std::sort(subset.begin(), subset.end());

    candidate.events.clear();
    for (uint32_t idx : subset) candidate.events.push_back(main.events[idx]);
    const double kl = kl_divergence(histogram_prob(candidate, config.cells_per_axis),
                                    main_grid);
    if (trial == 0 || kl < best_kl) {
      best_kl = kl;
      best = std::move(subset);
    }
  }
  return best;  // ascending indices of a sorted stream stay time-sorted
}

EventStream extract_key(const EventStream& main, const KepConfig& config) {
  EventStream out;
  out.width = main.width;
  out.height = main.height;
  out.window_us = main.window_us;
  for (uint32_t i : extract_key_indices(main, config))
    out.events.push_back(main.events[i]);
  return out;
}

}  // namespace evd
