#include "evd/network.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <cstring>
#include <fstream>

#include "evd/error.hpp"
#include "evd/kernels.hpp"
#include "evd/rng.hpp"

namespace evd {

namespace {

// Reference TS-LIF update. Must stay textually in sync with the kernel
// variants: the async path uses this per neuron and the dense path uses the
// kernel table, and the two have to round identically.
inline void lif_update(float& c, float& u, float& o, float in,
                       const NeuronParams& p) {
  const float ci = p.delta_curr * c + in;
  const float ui = (p.delta_volt * u) * (1.0f - o) + ci;
  c = ci;
  u = ui;
  o = ui >= p.u_th ? 1.0f : 0.0f;
}

int64_t weight_count(const LayerSpec& s) {
  switch (s.kind) {
    case LayerKind::AvgPool:
      return 1;
    case LayerKind::Conv:
      return static_cast<int64_t>(s.out_channels) * s.in_channels * s.kernel * s.kernel;
    case LayerKind::FC:
      return static_cast<int64_t>(s.in_channels) * s.out_channels;
  }
  return 0;
}

LayerDims infer_dims(const LayerSpec& s, int in_c, int in_h, int in_w) {
  LayerDims d;
  d.in_c = in_c;
  d.in_h = in_h;
  d.in_w = in_w;
  switch (s.kind) {
    case LayerKind::AvgPool:
      if (s.in_channels != in_c)
        throw_data("pool layer channel mismatch");
      if (s.out_channels != in_c)
        throw_data("pool layer must preserve channels");
      if (s.kernel <= 0 || in_h % s.kernel != 0 || in_w % s.kernel != 0)
        throw_data("pool kernel must divide the spatial extent");
      d.out_c = in_c;
      d.out_h = in_h / s.kernel;
      d.out_w = in_w / s.kernel;
      break;
    case LayerKind::Conv:
      if (s.in_channels != in_c) throw_data("conv layer channel mismatch");
      if (s.stride != 1) throw_data("conv stride must be 1");
      d.out_c = s.out_channels;
      d.out_h = in_h + 2 * s.padding - s.kernel + 1;
      d.out_w = in_w + 2 * s.padding - s.kernel + 1;
      if (d.out_h <= 0 || d.out_w <= 0) throw_data("conv output collapses");
      break;
    case LayerKind::FC:
      if (static_cast<int64_t>(s.in_channels) != static_cast<int64_t>(in_c) * in_h * in_w)
        throw_data("FC input size " + std::to_string(s.in_channels) +
                   " does not match incoming " +
                   std::to_string(static_cast<int64_t>(in_c) * in_h * in_w));
      d.out_c = s.out_channels;
      d.out_h = 1;
      d.out_w = 1;
      break;
  }
  return d;
}

// Scatter one layer's response to a single input spike into the accumulator.
// `touch` is invoked for every output index that may have changed, before the
// write (the async engine uses it to maintain its sparse accumulator).
template <typename Touch>
inline void stamp_input(const LayerSpec& s, const LayerDims& d, const float* w,
                        int32_t in_idx, float* acc, Touch&& touch) {
  switch (s.kind) {
    case LayerKind::AvgPool: {
      const int hw = d.in_h * d.in_w;
      const int ci = static_cast<int>(in_idx / hw);
      const int rem = static_cast<int>(in_idx % hw);
      const int y = rem / d.in_w;
      const int x = rem % d.in_w;
      const int64_t out = (static_cast<int64_t>(ci) * d.out_h + y / s.kernel) * d.out_w +
                          x / s.kernel;
      touch(out);
      acc[out] += w[0];
      break;
    }
    case LayerKind::Conv: {
      const int hw = d.in_h * d.in_w;
      const int ci = static_cast<int>(in_idx / hw);
      const int rem = static_cast<int>(in_idx % hw);
      const int y = rem / d.in_w;
      const int x = rem % d.in_w;
      const int k = s.kernel;
      const int64_t wstride_ci = static_cast<int64_t>(k) * k;
      const int64_t wstride_co = wstride_ci * s.in_channels;
      for (int co = 0; co < d.out_c; ++co) {
        const float* wrow = w + co * wstride_co + ci * wstride_ci;
        const int64_t obase = static_cast<int64_t>(co) * d.out_h * d.out_w;
        for (int ky = 0; ky < k; ++ky) {
          const int oy = y + s.padding - ky;
          if (oy < 0 || oy >= d.out_h) continue;
          for (int kx = 0; kx < k; ++kx) {
            const int ox = x + s.padding - kx;
            if (ox < 0 || ox >= d.out_w) continue;
            const int64_t out = obase + static_cast<int64_t>(oy) * d.out_w + ox;
            touch(out);
            acc[out] += wrow[ky * k + kx];
          }
        }
      }
      break;
    }
    case LayerKind::FC: {
      const float* row = w + static_cast<int64_t>(in_idx) * s.out_channels;
      for (int j = 0; j < s.out_channels; ++j) touch(j);
      kern::active().axpy_f(s.out_channels, 1.0f, row, acc);
      break;
    }
  }
}

struct NoTouch {
  void operator()(int64_t) const {}
};

}  // namespace

std::vector<LayerSpec> default_arch() {
  return {
      {LayerKind::AvgPool, 2, 2, 4, 0, 4, true},
      {LayerKind::Conv, 2, 16, 3, 1, 1, false},
      {LayerKind::AvgPool, 16, 16, 2, 0, 2, true},
      {LayerKind::Conv, 16, 32, 3, 1, 1, false},
      {LayerKind::AvgPool, 32, 32, 2, 0, 2, true},
      {LayerKind::FC, 2048, 512, 0, 0, 1, false},
      {LayerKind::FC, 512, 2, 0, 0, 1, false},
  };
}

Network build_network(const std::vector<LayerSpec>& specs, int T,
                      const NeuronParams& params, uint64_t seed, int in_c,
                      int in_h, int in_w) {
  if (T < 1) throw_data("network needs T >= 1");
  if (specs.empty()) throw_data("network needs at least one layer");

  Network net;
  net.T = T;
  net.in_c = in_c;
  net.in_h = in_h;
  net.in_w = in_w;
  net.specs = specs;

  Rng rng(seed);
  int c = in_c, h = in_h, w = in_w;
  for (const LayerSpec& s : specs) {
    const LayerDims d = infer_dims(s, c, h, w);
    net.dims.push_back(d);
    net.params.push_back(params);
    net.weight_scale.push_back(0.0f);

    std::vector<float> weights(weight_count(s));
    if (s.kind == LayerKind::AvgPool) {
      weights[0] = 1.0f / static_cast<float>(s.kernel * s.kernel);
    } else {
      const int64_t fan_in = s.kind == LayerKind::Conv
                                 ? static_cast<int64_t>(s.in_channels) * s.kernel * s.kernel
                                 : s.in_channels;
      const double a = 3.0 * std::sqrt(6.0 / static_cast<double>(fan_in));
      for (float& v : weights) v = static_cast<float>(rng.uniform(-a, a));
    }
    net.weights.push_back(std::move(weights));
    c = d.out_c;
    h = d.out_h;
    w = d.out_w;
  }
  return net;
}

void lif_step(LayerState& state, std::span<const float> weighted_input,
              const NeuronParams& params) {
  if (static_cast<int64_t>(weighted_input.size()) != state.size())
    throw_data("lif_step input size mismatch");
  kern::active().lif_step(static_cast<int>(state.size()), params.delta_curr,
                          params.delta_volt, params.u_th, weighted_input.data(),
                          state.c.data(), state.u.data(), state.o.data());
}

SpikeRecord forward_with_inputs(const Network& net,
                                const std::vector<std::vector<int32_t>>& step_inputs,
                                bool record_traces) {
  if (static_cast<int>(step_inputs.size()) != net.T)
    throw_data("forward expects one input list per time step");

  const size_t nl = net.layer_count();
  SpikeRecord rec;
  rec.T = net.T;
  rec.layer_sizes.resize(nl);
  rec.spikes.resize(nl);
  if (record_traces) {
    rec.traces_u.resize(nl);
    rec.input_spikes = step_inputs;
  }

  std::vector<LayerState> state(nl);
  std::vector<std::vector<float>> acc(nl);
  for (size_t l = 0; l < nl; ++l) {
    const int64_t n = net.dims[l].n_out();
    rec.layer_sizes[l] = n;
    rec.spikes[l].assign(static_cast<size_t>(net.T) * n, 0);
    if (record_traces) rec.traces_u[l].assign(static_cast<size_t>(net.T) * n, 0.0f);
    state[l].reset(n);
    acc[l].assign(n, 0.0f);
  }

  std::vector<int32_t> spikes_in, spikes_out;
  for (int t = 0; t < net.T; ++t) {
    spikes_in = step_inputs[t];
    for (size_t l = 0; l < nl; ++l) {
      const int64_t n = net.dims[l].n_out();
      std::memset(acc[l].data(), 0, static_cast<size_t>(n) * sizeof(float));
      for (int32_t idx : spikes_in)
        stamp_input(net.specs[l], net.dims[l], net.weights[l].data(), idx,
                    acc[l].data(), NoTouch{});
      lif_step(state[l], acc[l], net.params[l]);

      spikes_out.clear();
      const float* o = state[l].o.data();
      uint8_t* raster = rec.spikes[l].data() + static_cast<size_t>(t) * n;
      for (int64_t j = 0; j < n; ++j) {
        if (o[j] != 0.0f) {
          raster[j] = 1;
          spikes_out.push_back(static_cast<int32_t>(j));
        }
      }
      if (record_traces)
        std::memcpy(rec.traces_u[l].data() + static_cast<size_t>(t) * n,
                    state[l].u.data(), static_cast<size_t>(n) * sizeof(float));
      std::swap(spikes_in, spikes_out);
    }
  }

  const int64_t n_out = net.dims.back().n_out();
  rec.output_counts.assign(n_out, 0);
  const auto& out_raster = rec.spikes.back();
  for (int t = 0; t < net.T; ++t)
    for (int64_t j = 0; j < n_out; ++j)
      rec.output_counts[j] += out_raster[static_cast<size_t>(t) * n_out + j];
  return rec;
}

SpikeRecord forward_sync(const Network& net, const EventField& field,
                         bool record_traces) {
  if (field.steps != net.T)
    throw_data("event field has " + std::to_string(field.steps) +
               " bins but the network runs T=" + std::to_string(net.T));
  if (field.height != net.in_h || field.width != net.in_w || net.in_c != 2)
    throw_data("event field resolution does not match the network input");

  std::vector<std::vector<int32_t>> step_inputs(net.T);
  const int64_t slice = static_cast<int64_t>(field.slice_size());
  for (int t = 0; t < net.T; ++t) {
    const uint8_t* s = field.slice(t);
    for (int64_t i = 0; i < slice; ++i)
      if (s[i]) step_inputs[t].push_back(static_cast<int32_t>(i));
  }
  return forward_with_inputs(net, step_inputs, record_traces);
}

namespace {

// Conservative "can this neuron still fire without input" bound. Future
// voltage is at most dv*max(U,0) + max(C,0)*dc/(1-dc); the slack covers float
// rounding of the stepped trajectory. Neurons whose bound stays under the
// threshold are frozen and caught up exactly when next touched.
inline bool may_self_fire(float c, float u, float o, const NeuronParams& p) {
  const double cpos = c > 0 ? c : 0.0;
  const double upos = (o != 0.0f || u < 0) ? 0.0 : u;
  const double dc = p.delta_curr;
  double bound = p.delta_volt * upos;
  if (cpos > 0) {
    if (dc >= 1.0) return true;
    bound += cpos * dc / (1.0 - dc);
  }
  return bound + 1e-4 * bound + 1e-12 >= p.u_th;
}

struct AsyncLayer {
  std::vector<float> c, u, o;
  std::vector<int32_t> last_update;  // step whose end state is stored
  std::vector<uint8_t> self_active;
  std::vector<int32_t> self_active_list;
  std::vector<float> acc;
  std::vector<uint8_t> acc_flag;
  std::vector<int32_t> touched;  // scratch: union of stamped and self-active
  std::vector<uint8_t> ever_touched;

  void init(int64_t n) {
    c.assign(n, 0.0f);
    u.assign(n, 0.0f);
    o.assign(n, 0.0f);
    last_update.assign(n, -1);
    self_active.assign(n, 0);
    acc.assign(n, 0.0f);
    acc_flag.assign(n, 0);
    ever_touched.assign(n, 0);
  }
};

}  // namespace

SpikeRecord forward_async(const Network& net, const EventStream& stream,
                          AsyncStats* stats) {
  if (stream.width != net.in_w || stream.height != net.in_h || net.in_c != 2)
    throw_data("stream resolution does not match the network input");

  const size_t nl = net.layer_count();
  SpikeRecord rec;
  rec.T = net.T;
  rec.layer_sizes.resize(nl);
  rec.spikes.resize(nl);

  std::vector<AsyncLayer> layer(nl);
  for (size_t l = 0; l < nl; ++l) {
    const int64_t n = net.dims[l].n_out();
    rec.layer_sizes[l] = n;
    rec.spikes[l].assign(static_cast<size_t>(net.T) * n, 0);
    layer[l].init(n);
  }
  if (stats) {
    stats->neuron_updates.assign(nl, 0);
    stats->touched_neurons.assign(nl, 0);
  }

  // Per-step input spike lists (deduplicated: field cells are binary).
  std::vector<std::vector<int32_t>> step_inputs(net.T);
  for (const Event& e : stream.events) {
    const int bin = event_bin(e.t, net.T, stream.window_us);
    const int32_t idx = static_cast<int32_t>(
        (static_cast<int64_t>(e.p) * net.in_h + e.y) * net.in_w + e.x);
    step_inputs[bin].push_back(idx);
  }
  for (auto& v : step_inputs) {
    std::sort(v.begin(), v.end());
    v.erase(std::unique(v.begin(), v.end()), v.end());
  }

  std::vector<int32_t> spikes_in, spikes_out;
  for (int t = 0; t < net.T; ++t) {
    spikes_in = step_inputs[t];
    for (size_t l = 0; l < nl; ++l) {
      AsyncLayer& L = layer[l];
      const NeuronParams& p = net.params[l];

      // Scatter input into the sparse accumulator.
      for (int32_t idx : spikes_in)
        stamp_input(net.specs[l], net.dims[l], net.weights[l].data(), idx,
                    L.acc.data(), [&L](int64_t j) {
                      if (!L.acc_flag[j]) {
                        L.acc_flag[j] = 1;
                        L.touched.push_back(static_cast<int32_t>(j));
                      }
                    });

      // Neurons that might fire on their own join the update set.
      for (int32_t j : L.self_active_list)
        if (!L.acc_flag[j]) L.touched.push_back(j);
      std::sort(L.touched.begin(), L.touched.end());

      spikes_out.clear();
      uint8_t* raster = rec.spikes[l].data() + static_cast<size_t>(t) * net.dims[l].n_out();
      for (int32_t j : L.touched) {
        float& c = L.c[j];
        float& u = L.u[j];
        float& o = L.o[j];
        // Catch up silent steps with the exact step arithmetic.
        for (int32_t k = L.last_update[j] + 1; k < t; ++k) {
          lif_update(c, u, o, 0.0f, p);
          assert(o == 0.0f && "frozen neuron fired during catch-up");
        }
        const float in = L.acc_flag[j] ? L.acc[j] : 0.0f;
        lif_update(c, u, o, in, p);
        L.last_update[j] = t;
        if (o != 0.0f) {
          raster[j] = 1;
          spikes_out.push_back(j);
        }
        L.self_active[j] = may_self_fire(c, u, o, p) ? 1 : 0;
        if (stats) {
          ++stats->neuron_updates[l];
          if (!L.ever_touched[j]) {
            L.ever_touched[j] = 1;
            ++stats->touched_neurons[l];
          }
        }
      }

      // Reset scratch and rebuild the self-active list.
      for (int32_t j : L.touched) {
        if (L.acc_flag[j]) {
          L.acc[j] = 0.0f;
          L.acc_flag[j] = 0;
        }
      }
      L.self_active_list.clear();
      for (int32_t j : L.touched)
        if (L.self_active[j]) L.self_active_list.push_back(j);
      L.touched.clear();
      std::swap(spikes_in, spikes_out);
    }
  }

  const int64_t n_out = net.dims.back().n_out();
  rec.output_counts.assign(n_out, 0);
  const auto& out_raster = rec.spikes.back();
  for (int t = 0; t < net.T; ++t)
    for (int64_t j = 0; j < n_out; ++j)
      rec.output_counts[j] += out_raster[static_cast<size_t>(t) * n_out + j];
  return rec;
}

// --- SNN1 serialization ---------------------------------------------------

namespace {

void put_u16(std::string& b, uint16_t v) {
  b.push_back(static_cast<char>(v & 0xff));
  b.push_back(static_cast<char>(v >> 8));
}

void put_f32(std::string& b, float v) {
  uint32_t bits;
  std::memcpy(&bits, &v, 4);
  for (int i = 0; i < 4; ++i) b.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
}

struct Reader {
  const uint8_t* p;
  size_t n;
  size_t pos = 0;
  std::string path;

  void need(size_t k) const {
    if (pos + k > n)
      throw_data(path + ": truncated SNN1 payload at byte " + std::to_string(pos));
  }
  uint8_t u8() {
    need(1);
    return p[pos++];
  }
  uint16_t u16() {
    need(2);
    const uint16_t v = static_cast<uint16_t>(p[pos] | (p[pos + 1] << 8));
    pos += 2;
    return v;
  }
  float f32() {
    need(4);
    uint32_t bits = 0;
    for (int i = 0; i < 4; ++i) bits |= static_cast<uint32_t>(p[pos + i]) << (8 * i);
    pos += 4;
    float v;
    std::memcpy(&v, &bits, 4);
    return v;
  }
};

}  // namespace

void save_network(const Network& net, const std::string& path) {
  std::string buf;
  buf.append("SNN1", 4);
  put_u16(buf, 1);  // version
  buf.push_back(net.quantized ? 1 : 0);
  buf.push_back(0);  // reserved
  put_u16(buf, static_cast<uint16_t>(net.layer_count()));
  put_u16(buf, static_cast<uint16_t>(net.T));
  put_u16(buf, static_cast<uint16_t>(net.in_c));
  put_u16(buf, static_cast<uint16_t>(net.in_h));
  put_u16(buf, static_cast<uint16_t>(net.in_w));

  for (size_t l = 0; l < net.layer_count(); ++l) {
    const LayerSpec& s = net.specs[l];
    buf.push_back(static_cast<char>(s.kind));
    buf.push_back(s.fixed_weights ? 1 : 0);
    put_u16(buf, static_cast<uint16_t>(s.in_channels));
    put_u16(buf, static_cast<uint16_t>(s.out_channels));
    put_u16(buf, static_cast<uint16_t>(s.kernel));
    put_u16(buf, static_cast<uint16_t>(s.padding));
    put_u16(buf, static_cast<uint16_t>(s.stride));
    put_f32(buf, net.params[l].delta_curr);
    put_f32(buf, net.params[l].delta_volt);
    put_f32(buf, net.params[l].u_th);
    put_f32(buf, net.weight_scale[l]);

    const auto& w = net.weights[l];
    if (net.weight_scale[l] != 0.0f) {
      const float inv = 1.0f / net.weight_scale[l];
      for (float v : w) {
        const auto code = static_cast<int>(std::lrint(v * inv));
        buf.push_back(static_cast<char>(static_cast<int8_t>(code)));
      }
    } else if (s.kind == LayerKind::FC) {
      // Serialized FC layout is conventional row-major [out][in].
      for (int j = 0; j < s.out_channels; ++j)
        for (int i = 0; i < s.in_channels; ++i)
          put_f32(buf, w[static_cast<int64_t>(i) * s.out_channels + j]);
    } else {
      for (float v : w) put_f32(buf, v);
    }
  }

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw_data("cannot open " + path + " for writing");
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!out) throw_data("short write to " + path);
}

Network load_network(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw_data("cannot open " + path);
  std::string text((std::istreambuf_iterator<char>(in)),
                   std::istreambuf_iterator<char>());
  Reader r{reinterpret_cast<const uint8_t*>(text.data()), text.size(), 0, path};

  r.need(4);
  if (std::memcmp(text.data(), "SNN1", 4) != 0) throw_data(path + ": not an SNN1 file");
  r.pos = 4;
  const uint16_t version = r.u16();
  if (version != 1) throw_data(path + ": unsupported SNN1 version");
  const bool quantized = r.u8() != 0;
  r.u8();  // reserved
  const uint16_t layers = r.u16();

  Network net;
  net.quantized = quantized;
  net.T = r.u16();
  net.in_c = r.u16();
  net.in_h = r.u16();
  net.in_w = r.u16();

  int c = net.in_c, h = net.in_h, w = net.in_w;
  for (uint16_t l = 0; l < layers; ++l) {
    LayerSpec s;
    const uint8_t kind = r.u8();
    if (kind > 2) throw_data(path + ": bad layer kind at byte " + std::to_string(r.pos - 1));
    s.kind = static_cast<LayerKind>(kind);
    s.fixed_weights = r.u8() != 0;
    s.in_channels = r.u16();
    s.out_channels = r.u16();
    s.kernel = r.u16();
    s.padding = r.u16();
    s.stride = r.u16();
    NeuronParams p;
    p.delta_curr = r.f32();
    p.delta_volt = r.f32();
    p.u_th = r.f32();
    const float scale = r.f32();

    const LayerDims d = infer_dims(s, c, h, w);
    const int64_t count = weight_count(s);
    std::vector<float> weights(count);
    if (scale != 0.0f) {
      r.need(static_cast<size_t>(count));
      for (int64_t i = 0; i < count; ++i)
        weights[i] = static_cast<float>(static_cast<int8_t>(r.p[r.pos + i])) * scale;
      r.pos += static_cast<size_t>(count);
    } else if (s.kind == LayerKind::FC) {
      for (int j = 0; j < s.out_channels; ++j)
        for (int i = 0; i < s.in_channels; ++i)
          weights[static_cast<int64_t>(i) * s.out_channels + j] = r.f32();
    } else {
      for (int64_t i = 0; i < count; ++i) weights[i] = r.f32();
    }

    net.specs.push_back(s);
    net.dims.push_back(d);
    net.params.push_back(p);
    net.weight_scale.push_back(scale);
    net.weights.push_back(std::move(weights));
    c = d.out_c;
    h = d.out_h;
    w = d.out_w;
  }
  if (r.pos != r.n)
    throw_data(path + ": trailing bytes after layer " + std::to_string(layers));
  return net;
}

}  // namespace evd
