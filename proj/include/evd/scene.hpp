#pragma once

#include <cstdint>
#include <string>

#include "evd/event.hpp"

namespace evd {

enum class ObjectKind { Disk, TallBlob };

// Synthetic dodging scene: an object footprint sweeping across the frame
// under the contrast-threshold camera model, plus uniform background noise.
struct SceneConfig {
  ObjectKind kind = ObjectKind::Disk;
  double start_x = 16, start_y = 64;  // pixels
  double end_x = 112, end_y = 64;
  double radius = 10;           // pixels
  int direction = 0;            // 0 = approach from left, 1 = from right
  double contrast_threshold = 0.52;  // theta > 0
  double contrast = 1.0;        // object log-intensity amplitude
  double noise_rate = 0.0;      // events/pixel/second
  uint64_t seed = 0;
  uint16_t width = 128;
  uint16_t height = 128;
  uint32_t window_us = 50000;
};

struct SceneResult {
  EventStream stream;
  std::vector<uint8_t> is_object;  // per-event generator tag, for oracles
  int label = 0;                   // approach direction
};

// Deterministic for a fixed seed. Throws if the footprint never intersects
// the frame at any point of the trajectory.
SceneResult generate_scene(const SceneConfig& config);

}  // namespace evd
