#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace evd {

// One address event: microsecond timestamp, pixel, polarity (0 OFF / 1 ON).
struct Event {
  uint32_t t = 0;
  uint16_t x = 0;
  uint16_t y = 0;
  uint8_t p = 0;

  friend bool operator==(const Event&, const Event&) = default;
};

// Time-sorted event collection with sensor resolution and capture window.
// The window is stored in microseconds; every timestamp is < window_us.
struct EventStream {
  std::vector<Event> events;
  uint16_t width = 128;
  uint16_t height = 128;
  uint32_t window_us = 50000;

  size_t size() const { return events.size(); }
  bool empty() const { return events.empty(); }
  double window_ms() const { return window_us / 1000.0; }

  friend bool operator==(const EventStream&, const EventStream&) = default;
};

// Dense binary tensor of shape T x 2 x H x W; slice t is the network input at
// step t, channel dimension indexes polarity.
struct EventField {
  int steps = 0;
  int height = 0;
  int width = 0;
  std::vector<uint8_t> data;  // [t][p][y][x]

  size_t index(int t, int p, int y, int x) const {
    return ((static_cast<size_t>(t) * 2 + p) * height + y) * width + x;
  }
  uint8_t at(int t, int p, int y, int x) const { return data[index(t, p, y, x)]; }
  size_t slice_size() const { return static_cast<size_t>(2) * height * width; }
  const uint8_t* slice(int t) const { return data.data() + t * slice_size(); }
};

// Bounds-checks a raw event list and returns it sorted by timestamp (stable,
// so ties keep their input order). The error message pinpoints the first
// offending event.
EventStream validate_stream(std::vector<Event> events, uint16_t width,
                            uint16_t height, uint32_t window_us);

// Step index an event timestamp falls into: floor(t * T / window), clamped to
// T-1 so an inclusive right edge lands in the last bin.
inline int event_bin(uint32_t t_us, int steps, uint32_t window_us) {
  auto bin = static_cast<uint64_t>(t_us) * static_cast<uint64_t>(steps) / window_us;
  if (bin >= static_cast<uint64_t>(steps)) bin = steps - 1;
  return static_cast<int>(bin);
}

// Converts a stream into its dense event field. Cells are clamped to one no
// matter how many events map there: the network consumes spikes, not counts.
EventField to_event_field(const EventStream& stream, int steps);

// Superimposes uniform background noise at `rate` events/pixel/second.
// The original events are preserved exactly; the merge stays sorted.
EventStream inject_noise(const EventStream& stream, double rate, uint64_t seed);

// "EVS1" binary container (see README for the layout). read_stream also
// accepts the CSV alternative `t_us,x,y,p` with a `# width,height,window_us`
// comment header.
void write_stream(const EventStream& stream, const std::string& path);
EventStream read_stream(const std::string& path);

}  // namespace evd
