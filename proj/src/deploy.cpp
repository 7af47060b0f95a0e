#include "evd/deploy.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

#include "evd/error.hpp"

namespace evd {

float quantize_value(float w, float sigma) {
  // round half away from zero, sign-symmetric
  const double q = std::trunc(static_cast<double>(w) / sigma +
                              (w < 0 ? -0.5 : 0.5));
  const double clamped = std::clamp(q, -128.0, 127.0);
  return static_cast<float>(clamped * sigma);
}

Network quantize_weights(const Network& net, const QuantizeOptions& opts,
                         QuantizeStats* stats) {
  if (opts.sigma <= 0) throw_data("quantization interval must be > 0");
  Network out = net;
  out.quantized = true;
  if (stats) *stats = {};

  for (size_t l = 0; l < net.layer_count(); ++l) {
    if (!net.learnable(l)) continue;  // pooling weights are structural

    float gamma = 1.0f;
    if (opts.rescale_layers) {
      float max_abs = 0.0f;
      for (float v : net.weights[l]) max_abs = std::max(max_abs, std::fabs(v));
      if (max_abs > 0) gamma = 127.0f * opts.sigma / max_abs;
      out.params[l].u_th = net.params[l].u_th * gamma;
    }

    auto& w = out.weights[l];
    for (size_t i = 0; i < w.size(); ++i) {
      const float scaled = net.weights[l][i] * gamma;
      const double rounded =
          std::trunc(static_cast<double>(scaled) / opts.sigma + (scaled < 0 ? -0.5 : 0.5));
      if (stats) {
        ++stats->total;
        stats->max_abs_error = std::max(
            stats->max_abs_error, std::fabs(rounded * opts.sigma - scaled));
        if (rounded < -128.0 || rounded > 127.0) ++stats->clamped;
      }
      w[i] = static_cast<float>(std::clamp(rounded, -128.0, 127.0) * opts.sigma);
    }
    out.weight_scale[l] = opts.sigma;
  }
  return out;
}

uint32_t encode_address(const Event& event, uint32_t l_h) {
  if (event.y >= l_h) throw_data("event row exceeds the address grid");
  return 2u * event.x * l_h + 2u * event.y + event.p;
}

Event decode_address(uint32_t address, uint32_t l_h) {
  Event e;
  e.x = static_cast<uint16_t>(address / (2 * l_h));
  const uint32_t rem = address % (2 * l_h);
  e.y = static_cast<uint16_t>(rem / 2);
  e.p = static_cast<uint8_t>(rem & 1);
  return e;
}

AddressSequence encode_sequence(const EventStream& stream, int steps) {
  if (steps < 1) throw_data("address sequence needs T >= 1");
  AddressSequence seq;
  seq.width = stream.width;
  seq.height = stream.height;
  seq.steps = static_cast<uint16_t>(steps);

  std::vector<std::vector<uint32_t>> per_step(steps);
  for (const Event& e : stream.events) {
    if (e.x >= stream.width || e.y >= stream.height || e.p > 1)
      throw_data("event out of bounds during address encoding");
    const int bin = event_bin(e.t, steps, stream.window_us);
    per_step[bin].push_back(encode_address(e, stream.height));
  }
  for (int t = 0; t < steps; ++t) {
    auto& a = per_step[t];
    if (a.empty()) continue;
    std::sort(a.begin(), a.end());
    a.erase(std::unique(a.begin(), a.end()), a.end());
    seq.frames.push_back({static_cast<uint16_t>(t), std::move(a)});
  }
  return seq;
}

EventStream decode_sequence(const AddressSequence& seq) {
  EventStream out;
  out.width = seq.width;
  out.height = seq.height;
  out.window_us = static_cast<uint32_t>(seq.steps) * 1000u;
  const uint32_t limit = 2u * seq.width * seq.height;
  for (const auto& frame : seq.frames) {
    if (frame.step >= seq.steps)
      throw_data("frame step " + std::to_string(frame.step) + " out of range");
    const auto t = static_cast<uint32_t>(frame.step) * 1000u;  // bin start
    for (uint32_t a : frame.addresses) {
      if (a >= limit)
        throw_data("address " + std::to_string(a) + " out of range (limit " +
                   std::to_string(limit) + ")");
      Event e = decode_address(a, seq.height);
      e.t = t;
      out.events.push_back(e);
    }
  }
  return out;
}

namespace {

constexpr char kMagic[8] = {'A', 'E', 'R', 'S', 'E', 'Q', '1', '\0'};

void put_u16(std::vector<uint8_t>& b, uint16_t v) {
  b.push_back(v & 0xff);
  b.push_back(v >> 8);
}

void put_u32(std::vector<uint8_t>& b, uint32_t v) {
  for (int i = 0; i < 4; ++i) b.push_back((v >> (8 * i)) & 0xff);
}

}  // namespace

std::vector<uint8_t> sequence_bytes(const AddressSequence& seq) {
  std::vector<uint8_t> b;
  b.insert(b.end(), kMagic, kMagic + 8);
  put_u16(b, seq.width);
  put_u16(b, seq.height);
  put_u16(b, seq.steps);
  put_u16(b, static_cast<uint16_t>(seq.frames.size()));
  for (const auto& f : seq.frames) {
    put_u16(b, f.step);
    put_u32(b, static_cast<uint32_t>(f.addresses.size()));
    for (uint32_t a : f.addresses) put_u32(b, a);
  }
  return b;
}

void write_sequence(const AddressSequence& seq, const std::string& path) {
  const auto b = sequence_bytes(seq);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw_data("cannot open " + path + " for writing");
  out.write(reinterpret_cast<const char*>(b.data()),
            static_cast<std::streamsize>(b.size()));
  if (!out) throw_data("short write to " + path);
}

AddressSequence parse_sequence(const std::vector<uint8_t>& bytes) {
  size_t pos = 0;
  auto need = [&](size_t k) {
    if (pos + k > bytes.size())
      throw_data("truncated AERSEQ1 payload at byte " + std::to_string(pos));
  };
  auto u16 = [&] {
    need(2);
    const uint16_t v = static_cast<uint16_t>(bytes[pos] | (bytes[pos + 1] << 8));
    pos += 2;
    return v;
  };
  auto u32 = [&] {
    need(4);
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(bytes[pos + i]) << (8 * i);
    pos += 4;
    return v;
  };

  need(8);
  if (std::memcmp(bytes.data(), kMagic, 8) != 0) throw_data("not an AERSEQ1 payload");
  pos = 8;
  AddressSequence seq;
  seq.width = u16();
  seq.height = u16();
  seq.steps = u16();
  const uint16_t frames = u16();

  int last_step = -1;
  const uint32_t limit = 2u * seq.width * seq.height;
  for (uint16_t i = 0; i < frames; ++i) {
    AddressSequence::Frame f;
    f.step = u16();
    if (static_cast<int>(f.step) <= last_step)
      throw_data("frame steps must be strictly increasing (byte " +
                 std::to_string(pos - 2) + ")");
    last_step = f.step;
    const uint32_t count = u32();
    f.addresses.reserve(count);
    uint32_t prev = 0;
    for (uint32_t j = 0; j < count; ++j) {
      const uint32_t a = u32();
      if (a >= limit)
        throw_data("address out of range at byte " + std::to_string(pos - 4));
      if (j > 0 && a <= prev)
        throw_data("addresses must be ascending at byte " + std::to_string(pos - 4));
      prev = a;
      f.addresses.push_back(a);
    }
    seq.frames.push_back(std::move(f));
  }
  if (pos != bytes.size())
    throw_data("trailing bytes after AERSEQ1 frames at byte " + std::to_string(pos));
  return seq;
}

AddressSequence read_sequence(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw_data("cannot open " + path);
  std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                             std::istreambuf_iterator<char>());
  try {
    return parse_sequence(bytes);
  } catch (const Error& e) {
    throw Error(ErrorKind::Data, path + ": " + e.what());
  }
}

DodgeAction decode_action(const std::vector<int64_t>& counts, int n_dt,
                          double alpha) {
  if (counts.empty()) throw_data("decode_action needs at least one channel");
  if (n_dt <= 0) throw_data("decode_action needs N_DT > 0");
  size_t best = 0;
  for (size_t i = 1; i < counts.size(); ++i)
    if (counts[i] > counts[best]) best = i;  // ties keep the lowest index
  DodgeAction action;
  action.approach_channel = static_cast<int>(best);
  action.speed = alpha * static_cast<double>(counts[best]) / n_dt;
  return action;
}

}  // namespace evd
