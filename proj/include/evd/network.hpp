#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "evd/event.hpp"

namespace evd {

// Dual-state LIF constants (current decay, voltage decay, firing threshold).
struct NeuronParams {
  float delta_curr = 0.75f;
  float delta_volt = 0.96875f;
  float u_th = 0.8f;
};

enum class LayerKind : uint8_t { AvgPool = 0, Conv = 1, FC = 2 };

struct LayerSpec {
  LayerKind kind = LayerKind::FC;
  int in_channels = 0;
  int out_channels = 0;
  int kernel = 0;
  int padding = 0;
  int stride = 1;
  bool fixed_weights = false;  // pooling: uniform 1/k^2, never trained
};

struct LayerDims {
  int in_c = 0, in_h = 0, in_w = 0;
  int out_c = 0, out_h = 0, out_w = 0;
  int64_t n_in() const { return static_cast<int64_t>(in_c) * in_h * in_w; }
  int64_t n_out() const { return static_cast<int64_t>(out_c) * out_h * out_w; }
};

// Layered spiking network. Weight layouts: Conv [out_c][in_c][ky][kx];
// FC transposed [in][out], which makes both the forward pass and the weight
// gradient contiguous per input spike; AvgPool a single shared value.
struct Network {
  int T = 50;
  int in_c = 2, in_h = 128, in_w = 128;
  std::vector<LayerSpec> specs;
  std::vector<LayerDims> dims;
  std::vector<NeuronParams> params;
  std::vector<std::vector<float>> weights;
  std::vector<float> weight_scale;  // per-layer quantization interval, 0 = float
  bool quantized = false;

  size_t layer_count() const { return specs.size(); }
  int output_channels() const { return specs.empty() ? 0 : dims.back().out_c; }
  bool learnable(size_t layer) const { return !specs[layer].fixed_weights; }
};

// The architecture of the dodging network: AvgP(4) -> Conv(2->16,3,p1) ->
// AvgP(2) -> Conv(16->32,3,p1) -> AvgP(2) -> FC(2048->512) -> FC(512->2),
// every stage followed by TS-LIF neurons.
std::vector<LayerSpec> default_arch();

// Validates the shape chain, installs fixed pooling weights and seeds the
// learnable ones uniformly in [-a, a], a = 3*sqrt(6/fan_in). The x3 keeps the
// randomly initialized network from being entirely silent.
Network build_network(const std::vector<LayerSpec>& specs, int T,
                      const NeuronParams& params, uint64_t seed,
                      int in_c = 2, int in_h = 128, int in_w = 128);

// Per-layer neuron state for step-at-a-time use.
struct LayerState {
  std::vector<float> c;  // membrane current
  std::vector<float> u;  // membrane voltage
  std::vector<float> o;  // previous output spikes, 0/1

  explicit LayerState(int64_t n = 0) { reset(n); }
  void reset(int64_t n) {
    c.assign(n, 0.0f);
    u.assign(n, 0.0f);
    o.assign(n, 0.0f);
  }
  int64_t size() const { return static_cast<int64_t>(c.size()); }
};

// One synchronous TS-LIF update across a layer; spikes land in state.o.
void lif_step(LayerState& state, std::span<const float> weighted_input,
              const NeuronParams& params);

// Everything a forward pass emits: per-layer spike rasters over all T steps,
// optional membrane traces for training, and output spike counts.
struct SpikeRecord {
  int T = 0;
  std::vector<int64_t> layer_sizes;
  std::vector<std::vector<uint8_t>> spikes;        // per layer, [t][neuron]
  std::vector<std::vector<float>> traces_u;        // per layer, [t][neuron]
  std::vector<std::vector<int32_t>> input_spikes;  // per step, sorted indices
  std::vector<int64_t> output_counts;

  bool spikes_equal(const SpikeRecord& other) const {
    return T == other.T && layer_sizes == other.layer_sizes && spikes == other.spikes;
  }
};

// Sparsity counters from the event-driven path.
struct AsyncStats {
  std::vector<int64_t> neuron_updates;   // per layer: neuron-step updates
  std::vector<int64_t> touched_neurons;  // per layer: distinct neurons touched
};

// Dense synchronous forward: the input field slice at step t drives the whole
// stack, every neuron updated every step.
SpikeRecord forward_sync(const Network& net, const EventField& field,
                         bool record_traces = false);

// Shared engine with explicit per-step input spike lists (each list sorted
// ascending). forward_sync and the replicated-frame baseline both reduce to
// this.
SpikeRecord forward_with_inputs(const Network& net,
                                const std::vector<std::vector<int32_t>>& step_inputs,
                                bool record_traces = false);

// Event-driven forward: neurons are touched only when they receive input or
// their state may still reach threshold; decay over silent gaps is caught up
// with the exact step arithmetic, so the emitted spikes are bit-identical to
// forward_sync over to_event_field.
SpikeRecord forward_async(const Network& net, const EventStream& stream,
                          AsyncStats* stats = nullptr);

// "SNN1" container; quantized layers store int8 codes plus their interval.
void save_network(const Network& net, const std::string& path);
Network load_network(const std::string& path);

}  // namespace evd
