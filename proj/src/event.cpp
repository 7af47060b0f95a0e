#include "evd/event.hpp"

#include <algorithm>
#include <cstdio>
#include <cstring>
#include <fstream>

#include "evd/error.hpp"
#include "evd/rng.hpp"

namespace evd {

namespace {

std::string describe(const Event& e) {
  char buf[96];
  std::snprintf(buf, sizeof(buf), "(t=%u, x=%u, y=%u, p=%u)", e.t, e.x, e.y,
                unsigned{e.p});
  return buf;
}

}  // namespace

EventStream validate_stream(std::vector<Event> events, uint16_t width,
                            uint16_t height, uint32_t window_us) {
  for (size_t i = 0; i < events.size(); ++i) {
    const Event& e = events[i];
    if (e.x >= width)
      throw_data("event " + std::to_string(i) + " " + describe(e) +
                 ": x out of bounds (width " + std::to_string(width) + ")");
    if (e.y >= height)
      throw_data("event " + std::to_string(i) + " " + describe(e) +
                 ": y out of bounds (height " + std::to_string(height) + ")");
    if (e.p > 1)
      throw_data("event " + std::to_string(i) + " " + describe(e) +
                 ": polarity outside {0,1}");
    if (e.t >= window_us)
      throw_data("event " + std::to_string(i) + " " + describe(e) +
                 ": timestamp >= window (" + std::to_string(window_us) + " us)");
  }
  std::stable_sort(events.begin(), events.end(),
                   [](const Event& a, const Event& b) { return a.t < b.t; });
  EventStream out;
  out.events = std::move(events);
  out.width = width;
  out.height = height;
  out.window_us = window_us;
  return out;
}

EventField to_event_field(const EventStream& stream, int steps) {
  if (steps <= 0) throw_data("event field needs at least one time bin");
  EventField field;
  field.steps = steps;
  field.height = stream.height;
  field.width = stream.width;
  field.data.assign(static_cast<size_t>(steps) * field.slice_size(), 0);
  for (const Event& e : stream.events) {
    const int bin = event_bin(e.t, steps, stream.window_us);
    field.data[field.index(bin, e.p, e.y, e.x)] = 1;
  }
  return field;
}

EventStream inject_noise(const EventStream& stream, double rate, uint64_t seed) {
  if (rate < 0) throw_data("noise rate must be >= 0");
  EventStream out = stream;
  if (rate == 0 || stream.width == 0 || stream.height == 0) return out;

  Rng rng(seed);
  const double area = static_cast<double>(stream.width) * stream.height;
  const double rate_us = rate * area * 1e-6;  // events per microsecond
  std::vector<Event> noise;
  double t = rng.exponential(rate_us);
  while (t < stream.window_us) {
    Event e;
    e.t = static_cast<uint32_t>(t);
    e.x = static_cast<uint16_t>(rng.below(stream.width));
    e.y = static_cast<uint16_t>(rng.below(stream.height));
    e.p = rng.bernoulli(0.5) ? 1 : 0;
    noise.push_back(e);
    t += rng.exponential(rate_us);
  }

  std::vector<Event> merged;
  merged.reserve(out.events.size() + noise.size());
  std::merge(out.events.begin(), out.events.end(), noise.begin(), noise.end(),
             std::back_inserter(merged),
             [](const Event& a, const Event& b) { return a.t < b.t; });
  out.events = std::move(merged);
  return out;
}

namespace {

constexpr char kMagic[4] = {'E', 'V', 'S', '1'};
constexpr uint16_t kPolarityBit = 0x8000;

void put_u16(std::string& buf, uint16_t v) {
  buf.push_back(static_cast<char>(v & 0xff));
  buf.push_back(static_cast<char>(v >> 8));
}

void put_u32(std::string& buf, uint32_t v) {
  for (int i = 0; i < 4; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

uint16_t get_u16(const uint8_t* p) { return static_cast<uint16_t>(p[0] | (p[1] << 8)); }

uint32_t get_u32(const uint8_t* p) {
  return static_cast<uint32_t>(p[0]) | (static_cast<uint32_t>(p[1]) << 8) |
         (static_cast<uint32_t>(p[2]) << 16) | (static_cast<uint32_t>(p[3]) << 24);
}

EventStream read_csv(const std::string& path, const std::string& text) {
  uint16_t width = 0, height = 0;
  uint32_t window_us = 0;
  bool have_header = false;
  std::vector<Event> events;

  size_t pos = 0;
  int lineno = 0;
  while (pos < text.size()) {
    size_t eol = text.find('\n', pos);
    if (eol == std::string::npos) eol = text.size();
    std::string line = text.substr(pos, eol - pos);
    ++lineno;
    const size_t line_offset = pos;
    pos = eol + 1;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line[0] == '#') {
      if (!have_header) {
        unsigned w, h, win;
        if (std::sscanf(line.c_str(), "# %u , %u , %u", &w, &h, &win) == 3 ||
            std::sscanf(line.c_str(), "#%u,%u,%u", &w, &h, &win) == 3) {
          width = static_cast<uint16_t>(w);
          height = static_cast<uint16_t>(h);
          window_us = win;
          have_header = true;
        }
      }
      continue;
    }
    if (line.find("t_us") != std::string::npos) continue;  // column header
    long long t, x, y, p;
    if (std::sscanf(line.c_str(), "%lld , %lld , %lld , %lld", &t, &x, &y, &p) != 4 &&
        std::sscanf(line.c_str(), "%lld,%lld,%lld,%lld", &t, &x, &y, &p) != 4)
      throw_data(path + ": malformed CSV record at line " + std::to_string(lineno) +
                 " (byte offset " + std::to_string(line_offset) + ")");
    if (t < 0 || x < 0 || y < 0 || p < 0)
      throw_data(path + ": negative field at line " + std::to_string(lineno) +
                 " (byte offset " + std::to_string(line_offset) + ")");
    Event e;
    e.t = static_cast<uint32_t>(t);
    e.x = static_cast<uint16_t>(x);
    e.y = static_cast<uint16_t>(y);
    e.p = static_cast<uint8_t>(p);
    events.push_back(e);
  }
  if (!have_header)
    throw_data(path + ": missing `# width,height,window_us` CSV header");
  return validate_stream(std::move(events), width, height, window_us);
}

}  // namespace

void write_stream(const EventStream& stream, const std::string& path) {
  std::string buf;
  buf.reserve(16 + stream.events.size() * 8);
  buf.append(kMagic, 4);
  put_u16(buf, stream.width);
  put_u16(buf, stream.height);
  put_u32(buf, stream.window_us);
  put_u32(buf, static_cast<uint32_t>(stream.events.size()));
  for (const Event& e : stream.events) {
    put_u32(buf, e.t);
    put_u16(buf, static_cast<uint16_t>(e.x | (e.p ? kPolarityBit : 0)));
    put_u16(buf, e.y);
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw_data("cannot open " + path + " for writing");
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!out) throw_data("short write to " + path);
}

EventStream read_stream(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw_data("cannot open " + path);
  std::string text((std::istreambuf_iterator<char>(in)),
                   std::istreambuf_iterator<char>());

  if (text.size() < 4 || std::memcmp(text.data(), kMagic, 4) != 0)
    return read_csv(path, text);

  if (text.size() < 16)
    throw_data(path + ": truncated EVS1 header (byte offset " +
               std::to_string(text.size()) + ")");
  const auto* p = reinterpret_cast<const uint8_t*>(text.data());
  const uint16_t width = get_u16(p + 4);
  const uint16_t height = get_u16(p + 6);
  const uint32_t window_us = get_u32(p + 8);
  const uint32_t count = get_u32(p + 12);
  const size_t need = 16 + static_cast<size_t>(count) * 8;
  if (text.size() < need)
    throw_data(path + ": truncated EVS1 record (byte offset " +
               std::to_string(text.size()) + ", expected " + std::to_string(need) +
               " bytes)");

  std::vector<Event> events;
  events.reserve(count);
  for (uint32_t i = 0; i < count; ++i) {
    const uint8_t* rec = p + 16 + static_cast<size_t>(i) * 8;
    Event e;
    e.t = get_u32(rec);
    const uint16_t xp = get_u16(rec + 4);
    e.x = static_cast<uint16_t>(xp & ~kPolarityBit);
    e.p = (xp & kPolarityBit) ? 1 : 0;
    e.y = get_u16(rec + 6);
    events.push_back(e);
  }
  try {
    return validate_stream(std::move(events), width, height, window_us);
  } catch (const Error& e) {
    throw Error(ErrorKind::Data, path + ": " + e.what() + " (records start at byte offset 16)");
  }
}

}  // namespace evd
