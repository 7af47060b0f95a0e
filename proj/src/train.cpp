#include "evd/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>

#include "evd/error.hpp"
#include "evd/kernels.hpp"
#include "evd/rng.hpp"

namespace evd {

void LossSpec::validate() const {
  if (!(0 < n_df && n_df < n_dt && n_dt < steps))
    throw_data("loss spec needs 0 < N_DF < N_DT < T");
  if (channels < 2) throw_data("loss spec needs at least two channels");
}

LossSpec loss_spec_for_window(int window_ms, int channels) {
  LossSpec spec;
  spec.channels = channels;
  spec.steps = window_ms;  // 1 ms per step
  switch (window_ms) {
    case 30:
      spec.n_dt = 25;
      spec.n_df = 5;
      break;
    case 50:
      spec.n_dt = 30;
      spec.n_df = 10;
      break;
    case 100:
      spec.n_dt = 70;
      spec.n_df = 10;
      break;
    default:
      throw_data("no default loss spec for window " + std::to_string(window_ms) +
                 " ms; set N_DT/N_DF explicitly");
  }
  return spec;
}

double spike_count_loss(const std::vector<int64_t>& counts, int true_channel,
                        const LossSpec& spec) {
  spec.validate();
  if (static_cast<int>(counts.size()) != spec.channels)
    throw_data("spike count vector does not match channel count");
  if (true_channel < 0 || true_channel >= spec.channels)
    throw_data("true channel out of range");
  double loss = 0;
  for (int i = 0; i < spec.channels; ++i) {
    const double desired = i == true_channel ? spec.n_dt : spec.n_df;
    const double diff = (desired - static_cast<double>(counts[i])) / spec.steps;
    loss += diff * diff;
  }
  return 0.5 * loss;
}

std::vector<double> spike_count_loss_grad(const std::vector<int64_t>& counts,
                                          int true_channel, const LossSpec& spec) {
  spec.validate();
  if (static_cast<int>(counts.size()) != spec.channels)
    throw_data("spike count vector does not match channel count");
  if (true_channel < 0 || true_channel >= spec.channels)
    throw_data("true channel out of range");
  std::vector<double> grad(spec.channels);
  const double inv_t2 = 1.0 / (static_cast<double>(spec.steps) * spec.steps);
  for (int i = 0; i < spec.channels; ++i) {
    const double desired = i == true_channel ? spec.n_dt : spec.n_df;
    grad[i] = (static_cast<double>(counts[i]) - desired) * inv_t2;
  }
  return grad;
}

ResponseKernels response_kernels(double delta_curr, double delta_volt, int steps) {
  if (steps < 1) throw_data("response kernels need T >= 1");
  ResponseKernels k;
  k.curr.resize(steps);
  k.volt.resize(steps);
  k.curr[0] = 1.0;
  k.volt[0] = 1.0;
  for (int t = 1; t < steps; ++t) {
    k.curr[t] = delta_curr * k.curr[t - 1];
    k.volt[t] = delta_volt * k.volt[t - 1] + k.curr[t];
  }
  return k;
}

double surrogate_grad(double u, const SurrogateSpec& spec) {
  const double scale = spec.tau_d * spec.u_th;
  return spec.tau_n / scale * std::exp(-std::fabs(u - spec.u_th) / scale);
}

void Gradients::init_like(const Network& net) {
  weight.assign(net.layer_count(), {});
  for (size_t l = 0; l < net.layer_count(); ++l)
    if (net.learnable(l)) weight[l].assign(net.weights[l].size(), 0.0);
}

void Gradients::accumulate(const Gradients& other) {
  for (size_t l = 0; l < weight.size(); ++l)
    for (size_t i = 0; i < weight[l].size(); ++i) weight[l][i] += other.weight[l][i];
}

void Gradients::scale(double a) {
  for (auto& w : weight)
    for (double& v : w) v *= a;
}

namespace {

// e[prev] = W^T d for one time step, writing the full previous-layer row.
void backprop_linear(const LayerSpec& s, const LayerDims& d, const float* w,
                     const double* delta, double* e_prev) {
  switch (s.kind) {
    case LayerKind::AvgPool: {
      const float w0 = w[0];
      kern::parallel_for(d.in_c, [&](int64_t lo, int64_t hi) {
        for (int64_t ci = lo; ci < hi; ++ci) {
          const double* drow = delta + ci * d.out_h * d.out_w;
          double* erow = e_prev + ci * d.in_h * d.in_w;
          for (int y = 0; y < d.in_h; ++y)
            for (int x = 0; x < d.in_w; ++x)
              erow[y * d.in_w + x] =
                  w0 * drow[(y / s.kernel) * d.out_w + x / s.kernel];
        }
      });
      break;
    }
    case LayerKind::Conv: {
      const int k = s.kernel;
      const int64_t wstride_ci = static_cast<int64_t>(k) * k;
      const int64_t wstride_co = wstride_ci * s.in_channels;
      kern::parallel_for(d.in_c, [&](int64_t lo, int64_t hi) {
        for (int64_t ci = lo; ci < hi; ++ci) {
          double* eplane = e_prev + ci * d.in_h * d.in_w;
          std::memset(eplane, 0,
                      static_cast<size_t>(d.in_h) * d.in_w * sizeof(double));
          for (int co = 0; co < d.out_c; ++co) {
            const double* dplane = delta + static_cast<int64_t>(co) * d.out_h * d.out_w;
            const float* wrow = w + co * wstride_co + ci * wstride_ci;
            for (int ky = 0; ky < k; ++ky) {
              for (int kx = 0; kx < k; ++kx) {
                const double wv = wrow[ky * k + kx];
                if (wv == 0.0) continue;
                // e[ci][y][x] += w * d[co][y+p-ky][x+p-kx] over valid spans
                const int y0 = std::max(0, ky - s.padding);
                const int y1 = std::min(d.in_h - 1, d.out_h - 1 + ky - s.padding);
                const int x0 = std::max(0, kx - s.padding);
                const int x1 = std::min(d.in_w - 1, d.out_w - 1 + kx - s.padding);
                if (x1 < x0) continue;
                for (int y = y0; y <= y1; ++y) {
                  const int oy = y + s.padding - ky;
                  kern::active().axpy_d(
                      x1 - x0 + 1, wv,
                      dplane + static_cast<int64_t>(oy) * d.out_w + (x0 + s.padding - kx),
                      eplane + static_cast<int64_t>(y) * d.in_w + x0);
                }
              }
            }
          }
        }
      });
      break;
    }
    case LayerKind::FC: {
      kern::parallel_for(s.in_channels, [&](int64_t lo, int64_t hi) {
        for (int64_t i = lo; i < hi; ++i)
          e_prev[i] = kern::active().dot_fd(
              s.out_channels, w + i * s.out_channels, delta);
      });
      break;
    }
  }
}

// dL/dW += sum over input spikes of this step.
void accumulate_weight_grad(const LayerSpec& s, const LayerDims& d,
                            const uint8_t* in_spikes_row, const double* delta,
                            double* grad) {
  switch (s.kind) {
    case LayerKind::AvgPool:
      break;  // fixed
    case LayerKind::Conv: {
      const int k = s.kernel;
      const int64_t wstride_ci = static_cast<int64_t>(k) * k;
      const int64_t wstride_co = wstride_ci * s.in_channels;
      const int hw = d.in_h * d.in_w;
      for (int64_t idx = 0; idx < static_cast<int64_t>(d.in_c) * hw; ++idx) {
        if (!in_spikes_row[idx]) continue;
        const int ci = static_cast<int>(idx / hw);
        const int rem = static_cast<int>(idx % hw);
        const int y = rem / d.in_w;
        const int x = rem % d.in_w;
        for (int co = 0; co < d.out_c; ++co) {
          const double* dplane = delta + static_cast<int64_t>(co) * d.out_h * d.out_w;
          double* grow = grad + co * wstride_co + ci * wstride_ci;
          for (int ky = 0; ky < k; ++ky) {
            const int oy = y + s.padding - ky;
            if (oy < 0 || oy >= d.out_h) continue;
            for (int kx = 0; kx < k; ++kx) {
              const int ox = x + s.padding - kx;
              if (ox < 0 || ox >= d.out_w) continue;
              grow[ky * k + kx] += dplane[static_cast<int64_t>(oy) * d.out_w + ox];
            }
          }
        }
      }
      break;
    }
    case LayerKind::FC: {
      for (int i = 0; i < s.in_channels; ++i)
        if (in_spikes_row[i])
          kern::active().axpy_d(s.out_channels, 1.0, delta,
                                grad + static_cast<int64_t>(i) * s.out_channels);
      break;
    }
  }
}

// Same as above but from a sparse index list (the recorded network input).
void accumulate_weight_grad_sparse(const LayerSpec& s, const LayerDims& d,
                                   const std::vector<int32_t>& in_indices,
                                   const double* delta, double* grad) {
  std::vector<uint8_t> row(static_cast<size_t>(d.n_in()), 0);
  for (int32_t i : in_indices) row[i] = 1;
  accumulate_weight_grad(s, d, row.data(), delta, grad);
}

}  // namespace

void backward(const Network& net, const SpikeRecord& record, int true_channel,
              const LossSpec& loss, const SurrogateSpec& surrogate,
              Gradients& grads) {
  const size_t nl = net.layer_count();
  if (record.traces_u.size() != nl || record.traces_u.empty())
    throw_data("backward needs membrane traces; run the forward in training mode");
  if (record.T != loss.steps || record.T != net.T)
    throw_data("loss spec T does not match the record");
  if (static_cast<int64_t>(loss.channels) != net.dims.back().n_out())
    throw_data("loss spec channels do not match the network output");
  if (grads.weight.size() != nl) grads.init_like(net);

  int64_t min_learn = -1;
  for (size_t l = 0; l < nl; ++l)
    if (net.learnable(l)) {
      min_learn = static_cast<int64_t>(l);
      break;
    }
  if (min_learn < 0) return;

  const int T = net.T;
  const std::vector<double> e_top =
      spike_count_loss_grad(record.output_counts, true_channel, loss);

  std::vector<double> e_buf, g_buf, d_buf, d_above;
  for (int64_t l = static_cast<int64_t>(nl) - 1; l >= min_learn; --l) {
    const int64_t n = net.dims[l].n_out();
    e_buf.resize(static_cast<size_t>(T) * n);

    if (l == static_cast<int64_t>(nl) - 1) {
      for (int t = 0; t < T; ++t)
        for (int64_t j = 0; j < n; ++j) e_buf[static_cast<size_t>(t) * n + j] = e_top[j];
    } else {
      // e^l[t] = (W^{l+1})^T d^{l+1}[t]
      const int64_t n_above = net.dims[l + 1].n_out();
      for (int t = 0; t < T; ++t)
        backprop_linear(net.specs[l + 1], net.dims[l + 1], net.weights[l + 1].data(),
                        d_above.data() + static_cast<size_t>(t) * n_above,
                        e_buf.data() + static_cast<size_t>(t) * n);
    }

    // g[t] = e[t] * f_s'(u[t])
    g_buf.resize(static_cast<size_t>(T) * n);
    const float* traces = record.traces_u[l].data();
    const SurrogateSpec layer_surrogate{surrogate.tau_n, surrogate.tau_d,
                                        net.params[l].u_th};
    kern::parallel_for(static_cast<int64_t>(T) * n, [&](int64_t lo, int64_t hi) {
      for (int64_t i = lo; i < hi; ++i)
        g_buf[i] = e_buf[i] * surrogate_grad(traces[i], layer_surrogate);
    });

    // d[t] = sum_{m>=t} eps_volt[m-t] * g[m]
    const ResponseKernels kernels =
        response_kernels(net.params[l].delta_curr, net.params[l].delta_volt, T);
    d_buf.assign(static_cast<size_t>(T) * n, 0.0);
    kern::parallel_for(T, [&](int64_t lo, int64_t hi) {
      for (int64_t t = lo; t < hi; ++t) {
        double* drow = d_buf.data() + static_cast<size_t>(t) * n;
        for (int m = static_cast<int>(t); m < T; ++m)
          kern::active().axpy_d(static_cast<int>(n), kernels.volt[m - t],
                                g_buf.data() + static_cast<size_t>(m) * n, drow);
      }
    });

    if (net.learnable(l)) {
      double* grad = grads.weight[l].data();
      for (int t = 0; t < T; ++t) {
        const double* drow = d_buf.data() + static_cast<size_t>(t) * n;
        if (l == 0) {
          if (record.input_spikes.empty())
            throw_data("backward over the first layer needs recorded input spikes");
          accumulate_weight_grad_sparse(net.specs[0], net.dims[0],
                                        record.input_spikes[t], drow, grad);
        } else {
          const uint8_t* srow =
              record.spikes[l - 1].data() +
              static_cast<size_t>(t) * net.dims[l - 1].n_out();
          accumulate_weight_grad(net.specs[l], net.dims[l], srow, drow, grad);
        }
      }
    }
    d_above = std::move(d_buf);
    d_buf.clear();
  }
}

void AdamState::init_like(const Network& net) {
  m.assign(net.layer_count(), {});
  v.assign(net.layer_count(), {});
  step = 0;
  for (size_t l = 0; l < net.layer_count(); ++l)
    if (net.learnable(l)) {
      m[l].assign(net.weights[l].size(), 0.0);
      v[l].assign(net.weights[l].size(), 0.0);
    }
}

void sgd_adam_step(Network& net, const Gradients& grads, AdamState& state,
                   const OptimizerConfig& config) {
  if (state.m.size() != net.layer_count()) state.init_like(net);
  if (config.kind == Optimizer::Sgd) {
    for (size_t l = 0; l < net.layer_count(); ++l) {
      if (!net.learnable(l)) continue;
      auto& w = net.weights[l];
      for (size_t i = 0; i < w.size(); ++i)
        w[i] = static_cast<float>(w[i] - config.lr * grads.weight[l][i]);
    }
    return;
  }

  ++state.step;
  const double bc1 = 1.0 - std::pow(config.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(config.beta2, static_cast<double>(state.step));
  for (size_t l = 0; l < net.layer_count(); ++l) {
    if (!net.learnable(l)) continue;
    auto& w = net.weights[l];
    auto& m = state.m[l];
    auto& v = state.v[l];
    const auto& g = grads.weight[l];
    for (size_t i = 0; i < w.size(); ++i) {
      m[i] = config.beta1 * m[i] + (1.0 - config.beta1) * g[i];
      v[i] = config.beta2 * v[i] + (1.0 - config.beta2) * g[i] * g[i];
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      w[i] = static_cast<float>(w[i] - config.lr * mhat / (std::sqrt(vhat) + config.eps));
    }
  }
}

TrainHistory fit(Network& net, const std::vector<Sample>& dataset,
                 const TrainConfig& config) {
  if (dataset.empty()) throw_data("training needs a non-empty dataset");
  config.loss.validate();
  if (config.loss.steps != net.T)
    throw_data("loss spec T must match the network time steps");
  if (static_cast<int64_t>(config.loss.channels) != net.dims.back().n_out())
    throw_data("loss spec channels must match the network output");
  for (const Sample& s : dataset)
    if (s.label < 0 || s.label >= config.loss.channels)
      throw_data("sample label out of range");
  if (config.batch_size < 1) throw_data("batch size must be >= 1");

  Rng rng(config.seed);
  AdamState opt_state;
  opt_state.init_like(net);

  TrainHistory history;
  std::vector<size_t> order(dataset.size());
  std::iota(order.begin(), order.end(), 0);

  Gradients batch_grads;
  batch_grads.init_like(net);

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    for (size_t i = order.size(); i > 1; --i)
      std::swap(order[i - 1], order[rng.below(i)]);

    double epoch_loss = 0;
    int64_t correct = 0;
    size_t pos = 0;
    while (pos < order.size()) {
      const size_t batch_end = std::min(order.size(), pos + config.batch_size);
      const auto batch_n = static_cast<double>(batch_end - pos);
      for (auto& w : batch_grads.weight) std::fill(w.begin(), w.end(), 0.0);

      for (size_t k = pos; k < batch_end; ++k) {
        const Sample& sample = dataset[order[k]];
        const EventField field = to_event_field(sample.stream, net.T);
        const SpikeRecord record = forward_sync(net, field, true);
        epoch_loss += spike_count_loss(record.output_counts, sample.label, config.loss);
        const auto best = std::max_element(record.output_counts.begin(),
                                           record.output_counts.end());
        if (static_cast<int>(best - record.output_counts.begin()) == sample.label)
          ++correct;
        backward(net, record, sample.label, config.loss, config.surrogate,
                 batch_grads);
      }
      batch_grads.scale(1.0 / batch_n);
      sgd_adam_step(net, batch_grads, opt_state, config.optimizer);
      pos = batch_end;
    }

    EpochStats stats;
    stats.loss = epoch_loss / static_cast<double>(dataset.size());
    stats.accuracy = static_cast<double>(correct) / static_cast<double>(dataset.size());
    if (!std::isfinite(stats.loss)) throw_numeric("training loss diverged");
    history.epochs.push_back(stats);
  }
  return history;
}

}  // namespace evd
