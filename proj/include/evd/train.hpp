#pragma once

#include <cstdint>
#include <vector>

#include "evd/event.hpp"
#include "evd/network.hpp"

namespace evd {

// Spike-count targets: N_DT spikes on the channel matching the approach
// direction, N_DF on every other channel, over T steps and M channels.
struct LossSpec {
  int n_dt = 30;
  int n_df = 10;
  int steps = 50;    // T
  int channels = 2;  // M

  void validate() const;
};

// The (N_DT, N_DF) triples paired with the three standard windows.
LossSpec loss_spec_for_window(int window_ms, int channels = 2);

// L = 1/2 * sum_i ((D[i] - S[i]) / T)^2
double spike_count_loss(const std::vector<int64_t>& counts, int true_channel,
                        const LossSpec& spec);

// dL/dS[i] = (S[i] - D[i]) / T^2
std::vector<double> spike_count_loss_grad(const std::vector<int64_t>& counts,
                                          int true_channel, const LossSpec& spec);

// Discrete impulse responses of the current and voltage recursions:
// curr[0] = volt[0] = 1, curr[t] = dc*curr[t-1],
// volt[t] = dv*volt[t-1] + curr[t].
struct ResponseKernels {
  std::vector<double> curr;
  std::vector<double> volt;
};

ResponseKernels response_kernels(double delta_curr, double delta_volt, int steps);

// Spike-escape surrogate derivative of the fire gate.
struct SurrogateSpec {
  double tau_n = 1.0;
  double tau_d = 1.25;
  double u_th = 0.8;
};

double surrogate_grad(double u, const SurrogateSpec& spec);

// Per-layer weight gradients, congruent with Network::weights layouts.
// Fixed (pooling) layers keep an empty slot.
struct Gradients {
  std::vector<std::vector<double>> weight;

  void init_like(const Network& net);
  void accumulate(const Gradients& other);
  void scale(double a);
};

// Reset-free convolution backward pass: starting from the spike-count loss,
// alternates e[n] = W^T d[n] with the temporal correlation
// d[n] = sum_{m>=n} e[m] * f_s'(u[m]) * eps_volt[m-n], and accumulates
// dL/dW = sum_n d[n] (x) s_in[n]. The record must carry membrane traces
// (forward with record_traces = true).
void backward(const Network& net, const SpikeRecord& record, int true_channel,
              const LossSpec& loss, const SurrogateSpec& surrogate,
              Gradients& grads);

enum class Optimizer { Adam, Sgd };

struct AdamState {
  std::vector<std::vector<double>> m, v;
  int64_t step = 0;

  void init_like(const Network& net);
};

struct OptimizerConfig {
  Optimizer kind = Optimizer::Adam;
  double lr = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// In-place update of the learnable layers.
void sgd_adam_step(Network& net, const Gradients& grads, AdamState& state,
                   const OptimizerConfig& config);

struct Sample {
  EventStream stream;
  int label = 0;
};

struct TrainConfig {
  int epochs = 10;
  int batch_size = 16;
  OptimizerConfig optimizer;
  LossSpec loss;
  SurrogateSpec surrogate;
  uint64_t seed = 1;
};

struct EpochStats {
  double loss = 0;
  double accuracy = 0;
};

struct TrainHistory {
  std::vector<EpochStats> epochs;
};

// Mini-batch training over event streams: forward_sync on each sample's
// event field, spike-count loss, backward, optimizer step per batch.
// Deterministic for a fixed seed, sample order and batch size.
TrainHistory fit(Network& net, const std::vector<Sample>& dataset,
                 const TrainConfig& config);

}  // namespace evd
