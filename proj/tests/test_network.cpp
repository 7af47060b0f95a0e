#include <cmath>
#include <filesystem>

#include "doctest.h"
#include "evd/error.hpp"
#include "evd/event.hpp"
#include "evd/network.hpp"
#include "evd/rng.hpp"
#include "helpers.hpp"

using namespace evd;

TEST_CASE("lif_step stays quiet with zero state and zero input") {
  LayerState s(4);
  const std::vector<float> zero(4, 0.0f);
  for (int t = 0; t < 10; ++t) {
    lif_step(s, zero, NeuronParams{});
    for (float o : s.o) CHECK(o == 0.0f);
    for (float u : s.u) CHECK(u == 0.0f);
  }
}

TEST_CASE("lif_step reproduces the three-step impulse trace") {
  // impulse 1.0 at the first step, defaults: spike, silent, spike
  LayerState s(1);
  const NeuronParams p;

  lif_step(s, std::vector<float>{1.0f}, p);
  CHECK(s.c[0] == 1.0f);
  CHECK(s.u[0] == 1.0f);
  CHECK(s.o[0] == 1.0f);

  lif_step(s, std::vector<float>{0.0f}, p);
  CHECK(s.c[0] == 0.75f);
  CHECK(s.u[0] == 0.75f);  // reset gate wiped the carried voltage
  CHECK(s.o[0] == 0.0f);

  lif_step(s, std::vector<float>{0.0f}, p);
  CHECK(s.c[0] == 0.5625f);
  CHECK(s.u[0] == doctest::Approx(1.2890625).epsilon(1e-7));
  CHECK(s.o[0] == 1.0f);
}

TEST_CASE("lif_step threshold comparison is inclusive") {
  LayerState s(1);
  NeuronParams p;
  p.delta_volt = 0.5f;
  lif_step(s, std::vector<float>{p.u_th}, p);  // u lands exactly on u_th
  CHECK(s.u[0] == p.u_th);
  CHECK(s.o[0] == 1.0f);
}

TEST_CASE("constant input below the steady-state bound never fires") {
  const NeuronParams p;
  const double bound = p.u_th * (1.0 - p.delta_volt) * (1.0 - p.delta_curr);
  LayerState s(1);
  const std::vector<float> in{static_cast<float>(bound * 0.99)};
  for (int t = 0; t < 2000; ++t) {
    lif_step(s, in, p);
    CHECK(s.o[0] == 0.0f);
  }
  // and slightly above it eventually does
  LayerState s2(1);
  const std::vector<float> in2{static_cast<float>(bound * 1.05)};
  bool fired = false;
  for (int t = 0; t < 2000 && !fired; ++t) {
    lif_step(s2, in2, p);
    fired = s2.o[0] != 0.0f;
  }
  CHECK(fired);
}

TEST_CASE("voltage equals current right after a spike (reset correctness)") {
  LayerState s(1);
  const NeuronParams p;
  lif_step(s, std::vector<float>{2.0f}, p);
  REQUIRE(s.o[0] == 1.0f);
  lif_step(s, std::vector<float>{0.3f}, p);
  CHECK(s.u[0] == s.c[0]);  // dv*u*(1-1) + c == c exactly
}

TEST_CASE("default architecture wires 2048 into the first FC") {
  const Network net = build_network(default_arch(), 50, NeuronParams{}, 1);
  REQUIRE(net.layer_count() == 7);
  CHECK(net.dims[4].n_out() == 2048);  // 32 * 8 * 8 after three pools
  CHECK(net.specs[5].in_channels == 2048);
  CHECK(net.dims[6].n_out() == 2);
  CHECK(net.output_channels() == 2);
}

TEST_CASE("build_network is deterministic per seed") {
  const Network a = build_network(default_arch(), 50, NeuronParams{}, 7);
  const Network b = build_network(default_arch(), 50, NeuronParams{}, 7);
  for (size_t l = 0; l < a.layer_count(); ++l) CHECK(a.weights[l] == b.weights[l]);
  const Network c = build_network(default_arch(), 50, NeuronParams{}, 8);
  CHECK(a.weights[1] != c.weights[1]);
}

TEST_CASE("build_network rejects a mismatched FC chain") {
  auto specs = default_arch();
  specs[5].in_channels = 1024;  // should be 2048
  CHECK_THROWS_AS(build_network(specs, 50, NeuronParams{}, 1), Error);
}

TEST_CASE("pooling weights are fixed and uniform") {
  const Network net = build_network(default_arch(), 50, NeuronParams{}, 1);
  CHECK(net.weights[0].size() == 1);
  CHECK(net.weights[0][0] == 1.0f / 16.0f);
  CHECK(net.specs[0].fixed_weights);
  CHECK_FALSE(net.learnable(0));
  CHECK(net.learnable(1));
}

TEST_CASE("forward_sync of an all-zero field is silent everywhere") {
  Rng rng(211);
  const Network net = evd::testing::random_small_net(rng, 20);
  EventStream empty;
  empty.width = 16;
  empty.height = 16;
  empty.window_us = 20000;
  const SpikeRecord rec = forward_sync(net, to_event_field(empty, 20));
  for (const auto& layer : rec.spikes)
    for (uint8_t s : layer) CHECK(s == 0);
  for (int64_t c : rec.output_counts) CHECK(c == 0);
}

TEST_CASE("output spike counts are bounded by T") {
  Rng rng(223);
  for (int iter = 0; iter < 5; ++iter) {
    const Network net = evd::testing::random_small_net(rng, 15);
    const EventStream s = evd::testing::random_small_stream(rng, 15000);
    const SpikeRecord rec = forward_sync(net, to_event_field(s, 15));
    for (int64_t c : rec.output_counts) {
      CHECK(c >= 0);
      CHECK(c <= 15);
    }
  }
}

TEST_CASE("a persistent bright block drives the input pooling layer") {
  const Network net = build_network(default_arch(), 10, NeuronParams{}, 3);
  EventField field;
  field.steps = 10;
  field.height = 128;
  field.width = 128;
  field.data.assign(field.slice_size() * 10, 0);
  for (int t = 0; t < 10; ++t)
    for (int y = 0; y < 4; ++y)
      for (int x = 0; x < 4; ++x) field.data[field.index(t, 1, y, x)] = 1;
  const SpikeRecord rec = forward_sync(net, field);
  int64_t pool_spikes = 0;
  for (uint8_t s : rec.spikes[0]) pool_spikes += s;
  CHECK(pool_spikes > 0);
}

TEST_CASE("forward_async of the empty stream is silent") {
  Rng rng(227);
  const Network net = evd::testing::random_small_net(rng, 12);
  EventStream empty;
  empty.width = 16;
  empty.height = 16;
  empty.window_us = 12000;
  AsyncStats stats;
  const SpikeRecord rec = forward_async(net, empty, &stats);
  for (const auto& layer : rec.spikes)
    for (uint8_t s : layer) CHECK(s == 0);
  for (int64_t updates : stats.neuron_updates) CHECK(updates == 0);
}

TEST_CASE("forward_async touches at most the fan-out of a lone event") {
  const Network net = build_network(default_arch(), 10, NeuronParams{}, 5);
  EventStream s;
  s.width = 128;
  s.height = 128;
  s.window_us = 10000;
  s.events.push_back({500, 40, 40, 1});
  AsyncStats stats;
  forward_async(net, s, &stats);
  // one pixel lands in exactly one 4x4 pooling cell
  CHECK(stats.touched_neurons[0] <= 1);
}

TEST_CASE("async and sync paths emit bit-identical spikes") {
  Rng rng(229);
  for (int iter = 0; iter < 12; ++iter) {
    const int T = 10 + static_cast<int>(rng.below(30));
    const Network net = evd::testing::random_small_net(rng, T);
    const EventStream s =
        evd::testing::random_small_stream(rng, static_cast<uint32_t>(T) * 1000);
    const SpikeRecord sync = forward_sync(net, to_event_field(s, T));
    const SpikeRecord async = forward_async(net, s);
    CHECK(async.spikes_equal(sync));
    CHECK(async.output_counts == sync.output_counts);
  }
}

TEST_CASE("async catch-up across a long silent gap stays exact") {
  Rng rng(233);
  const int T = 40;
  const Network net = evd::testing::random_small_net(rng, T);
  // burst at the start, then silence, then a late burst
  std::vector<Event> events;
  for (int i = 0; i < 30; ++i)
    events.push_back({static_cast<uint32_t>(rng.below(1000)),
                      static_cast<uint16_t>(rng.below(16)),
                      static_cast<uint16_t>(rng.below(16)),
                      static_cast<uint8_t>(rng.below(2))});
  for (int i = 0; i < 30; ++i)
    events.push_back({static_cast<uint32_t>(38000 + rng.below(2000)),
                      static_cast<uint16_t>(rng.below(16)),
                      static_cast<uint16_t>(rng.below(16)),
                      static_cast<uint8_t>(rng.below(2))});
  const EventStream s = validate_stream(std::move(events), 16, 16, 40000);
  const SpikeRecord sync = forward_sync(net, to_event_field(s, T));
  const SpikeRecord async = forward_async(net, s);
  CHECK(async.spikes_equal(sync));
}

TEST_CASE("forward_async rejects a resolution mismatch") {
  Rng rng(239);
  const Network net = evd::testing::random_small_net(rng, 10);
  EventStream s;
  s.width = 32;
  s.height = 32;
  s.window_us = 10000;
  CHECK_THROWS_AS(forward_async(net, s), Error);
}

TEST_CASE("forward_sync rejects a bin-count mismatch") {
  Rng rng(241);
  const Network net = evd::testing::random_small_net(rng, 10);
  EventStream s;
  s.width = 16;
  s.height = 16;
  s.window_us = 10000;
  CHECK_THROWS_AS(forward_sync(net, to_event_field(s, 12)), Error);
}

TEST_CASE("SNN1 roundtrip preserves the network exactly") {
  Rng rng(251);
  const auto path = (std::filesystem::temp_directory_path() / "evd_net.snn").string();
  for (int iter = 0; iter < 5; ++iter) {
    const Network net = evd::testing::random_small_net(rng, 17);
    save_network(net, path);
    const Network back = load_network(path);
    CHECK(back.T == net.T);
    REQUIRE(back.layer_count() == net.layer_count());
    for (size_t l = 0; l < net.layer_count(); ++l) {
      CHECK(back.weights[l] == net.weights[l]);
      CHECK(back.specs[l].kind == net.specs[l].kind);
      CHECK(back.params[l].u_th == net.params[l].u_th);
    }
    // behavioral identity
    const EventStream s = evd::testing::random_small_stream(rng, 17000);
    CHECK(forward_async(net, s).spikes_equal(forward_async(back, s)));
  }
  std::filesystem::remove(path);
}

TEST_CASE("load_network rejects corrupted payloads") {
  const auto path = (std::filesystem::temp_directory_path() / "evd_bad.snn").string();
  Rng rng(257);
  const Network net = evd::testing::random_small_net(rng, 9);
  save_network(net, path);
  auto size = std::filesystem::file_size(path);
  std::filesystem::resize_file(path, size - 3);
  CHECK_THROWS_AS(load_network(path), Error);
  std::filesystem::remove(path);
}
