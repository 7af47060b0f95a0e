#include "evd/scene.hpp"

#include <algorithm>
#include <cmath>

#include "evd/error.hpp"
#include "evd/rng.hpp"

namespace evd {

namespace {

// Microseconds between trajectory samples. Four sub-steps per millisecond
// keeps event timing well below the 1 ms step granularity the network sees.
constexpr uint32_t kSimStepUs = 250;

struct Footprint {
  double rx, ry;
};

Footprint footprint_of(const SceneConfig& c) {
  if (c.kind == ObjectKind::TallBlob) return {c.radius, 3.0 * c.radius};
  return {c.radius, c.radius};
}

// Soft pixel coverage of the object at a normalized trajectory phase.
// A one-pixel linear ramp at the silhouette edge stands in for pixel-area
// integration; exact optics are out of scope.
double coverage(double px, double py, double cx, double cy, const Footprint& fp) {
  const double dx = (px - cx) / fp.rx;
  const double dy = (py - cy) / fp.ry;
  const double d = std::sqrt(dx * dx + dy * dy);
  const double edge_px = (d - 1.0) * std::min(fp.rx, fp.ry);
  return std::clamp(0.5 - edge_px, 0.0, 1.0);
}

}  // namespace

SceneResult generate_scene(const SceneConfig& config) {
  if (config.contrast_threshold <= 0) throw_data("contrast threshold must be > 0");
  if (config.noise_rate < 0) throw_data("noise rate must be >= 0");
  if (config.direction != 0 && config.direction != 1)
    throw_data("direction label must be 0 or 1");

  const Footprint fp = footprint_of(config);
  const int w = config.width;
  const int h = config.height;

  // Reject trajectories that never touch the frame.
  {
    bool visible = false;
    for (int k = 0; k <= 64 && !visible; ++k) {
      const double a = k / 64.0;
      const double cx = config.start_x + (config.end_x - config.start_x) * a;
      const double cy = config.start_y + (config.end_y - config.start_y) * a;
      visible = cx + fp.rx > 0 && cx - fp.rx < w && cy + fp.ry > 0 && cy - fp.ry < h;
    }
    if (!visible) throw_data("object trajectory never intersects the frame");
  }

  // Per-pixel log intensity reference, reset by +-theta on each emission.
  std::vector<double> ref(static_cast<size_t>(w) * h, 0.0);
  std::vector<Event> object_events;

  const double theta = config.contrast_threshold;
  double prev_cx = config.start_x;
  double prev_cy = config.start_y;

  for (uint32_t t = 0; t < config.window_us; t += kSimStepUs) {
    const double a = static_cast<double>(t) / config.window_us;
    const double cx = config.start_x + (config.end_x - config.start_x) * a;
    const double cy = config.start_y + (config.end_y - config.start_y) * a;

    // Only pixels near the current or previous position can change.
    const int x0 = std::max(0, static_cast<int>(std::floor(std::min(cx, prev_cx) - fp.rx - 2)));
    const int x1 = std::min(w - 1, static_cast<int>(std::ceil(std::max(cx, prev_cx) + fp.rx + 2)));
    const int y0 = std::max(0, static_cast<int>(std::floor(std::min(cy, prev_cy) - fp.ry - 2)));
    const int y1 = std::min(h - 1, static_cast<int>(std::ceil(std::max(cy, prev_cy) + fp.ry + 2)));

    for (int y = y0; y <= y1; ++y) {
      for (int x = x0; x <= x1; ++x) {
        const double level = config.contrast * coverage(x, y, cx, cy, fp);
        double& r = ref[static_cast<size_t>(y) * w + x];
        while (level - r > theta) {
          object_events.push_back({t, static_cast<uint16_t>(x),
                                   static_cast<uint16_t>(y), 1});
          r += theta;
        }
        while (level - r < -theta) {
          object_events.push_back({t, static_cast<uint16_t>(x),
                                   static_cast<uint16_t>(y), 0});
          r -= theta;
        }
      }
    }
    prev_cx = cx;
    prev_cy = cy;
  }

  // Background noise as a Poisson process over the full frame.
  std::vector<Event> noise_events;
  if (config.noise_rate > 0) {
    Rng rng(config.seed);
    const double rate_us = config.noise_rate * static_cast<double>(w) * h * 1e-6;
    double t = rng.exponential(rate_us);
    while (t < config.window_us) {
      noise_events.push_back({static_cast<uint32_t>(t),
                              static_cast<uint16_t>(rng.below(w)),
                              static_cast<uint16_t>(rng.below(h)),
                              static_cast<uint8_t>(rng.bernoulli(0.5) ? 1 : 0)});
      t += rng.exponential(rate_us);
    }
  }

  SceneResult result;
  result.label = config.direction;
  result.stream.width = config.width;
  result.stream.height = config.height;
  result.stream.window_us = config.window_us;
  result.stream.events.reserve(object_events.size() + noise_events.size());
  result.is_object.reserve(object_events.size() + noise_events.size());

  size_t i = 0, j = 0;
  while (i < object_events.size() || j < noise_events.size()) {
    const bool take_object =
        j >= noise_events.size() ||
        (i < object_events.size() && object_events[i].t <= noise_events[j].t);
    if (take_object) {
      result.stream.events.push_back(object_events[i++]);
      result.is_object.push_back(1);
    } else {
      result.stream.events.push_back(noise_events[j++]);
      result.is_object.push_back(0);
    }
  }
  return result;
}

}  // namespace evd
