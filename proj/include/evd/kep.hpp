#pragma once

#include <cstdint>
#include <vector>

#include "evd/event.hpp"

namespace evd {

// Events are compared in normalized [0,1]^3 coordinates (x, y, t) so the
// spatio-temporal metric is unitless. Polarity carries no weight here.
struct ClusterCenter {
  double x = 0, y = 0, t = 0;
};

// Occupancy histogram over a K x K x K partition of the normalized cube.
struct ProbabilityGrid {
  int cells_per_axis = 20;
  std::vector<uint32_t> counts;  // length K^3
  std::vector<double> probs;     // counts / total

  size_t total() const;
};

struct KepConfig {
  double radius = 0.35;  // normalized Euclidean distance to the cluster center
  double lambda1 = 300;
  double lambda2 = 600;
  int trials = 16;
  int cells_per_axis = 20;
  uint64_t seed = 0;
};

ClusterCenter cluster_center(const EventStream& stream);

// Indices (into stream.events) of the main event stream: everything within
// config.radius of the cluster center, original order preserved.
std::vector<uint32_t> extract_main_indices(const EventStream& stream,
                                           const KepConfig& config);
EventStream extract_main(const EventStream& stream, const KepConfig& config);

// Key-stream size rule: identity below 500 events, then saturating at
// floor(lambda/2 * (1 + e^(1/(M - lambda)))) with lambda1 for M in [500,1000)
// and lambda2 beyond; never exceeds M.
uint32_t key_count(uint32_t main_size, double lambda1, double lambda2);

ProbabilityGrid histogram_prob(const EventStream& stream, int cells_per_axis);

// D_KL(p || q) in nats. q receives a 1/K^3 pseudo-count per cell before
// normalization so cells occupied by p alone stay finite; identical count
// vectors return exactly zero.
double kl_divergence(const ProbabilityGrid& p, const ProbabilityGrid& q);

// Draws `trials` uniform subsets of size key_count(M) from the main stream
// and keeps the one whose histogram is KL-closest to the main stream's.
// Output is time-sorted; deterministic for a fixed seed.
std::vector<uint32_t> extract_key_indices(const EventStream& main,
                                          const KepConfig& config);
EventStream extract_key(const EventStream& main, const KepConfig& config);

}  // namespace evd
