#pragma once

// Shared generators for randomized network/stream tests.

#include <vector>

#include "evd/network.hpp"
#include "evd/rng.hpp"
#include "evd/scene.hpp"

namespace evd::testing {

// Small random architectures over a 2 x 16 x 16 input: optional front pool,
// one conv, optional mid pool, then FC head down to two channels.
inline Network random_small_net(Rng& rng, int T) {
  const int in_h = 16, in_w = 16;
  std::vector<LayerSpec> specs;
  int c = 2, h = in_h, w = in_w;

  if (rng.bernoulli(0.5)) {
    specs.push_back({LayerKind::AvgPool, c, c, 2, 0, 2, true});
    h /= 2;
    w /= 2;
  }
  const int conv_out = 2 + static_cast<int>(rng.below(5));  // 2..6 channels
  specs.push_back({LayerKind::Conv, c, conv_out, 3, 1, 1, false});
  c = conv_out;
  if (rng.bernoulli(0.5) && h % 2 == 0) {
    specs.push_back({LayerKind::AvgPool, c, c, 2, 0, 2, true});
    h /= 2;
    w /= 2;
  }
  const int flat = c * h * w;
  const int hidden = 8 + static_cast<int>(rng.below(17));  // 8..24
  specs.push_back({LayerKind::FC, flat, hidden, 0, 0, 1, false});
  specs.push_back({LayerKind::FC, hidden, 2, 0, 0, 1, false});

  return build_network(specs, T, NeuronParams{}, rng.next_u64(), 2, in_h, in_w);
}

// Random synthetic scene at the matching 16 x 16 resolution. The optional
// out-param receives the approach-direction label.
inline EventStream random_small_stream(Rng& rng, uint32_t window_us,
                                       int* label = nullptr) {
  SceneConfig cfg;
  cfg.width = 16;
  cfg.height = 16;
  cfg.window_us = window_us;
  cfg.radius = 2.0 + rng.uniform() * 2.0;
  cfg.contrast_threshold = 0.4;
  cfg.noise_rate = rng.uniform() * 40.0;  // dense noise at this tiny area
  cfg.seed = rng.next_u64();
  const bool from_left = rng.bernoulli(0.5);
  cfg.direction = from_left ? 0 : 1;
  const double travel = 6 + rng.uniform() * 8;
  cfg.start_x = from_left ? 2.0 : 13.0;
  cfg.end_x = from_left ? cfg.start_x + travel : cfg.start_x - travel;
  cfg.start_y = 4 + rng.uniform() * 8;
  cfg.end_y = cfg.start_y + rng.uniform(-2, 2);
  if (label) *label = cfg.direction;
  return generate_scene(cfg).stream;
}

}  // namespace evd::testing
