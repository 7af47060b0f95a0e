#include <unistd.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <tuple>

#include "doctest.h"
#include "evd/error.hpp"
#include "evd/event.hpp"
#include "evd/rng.hpp"
#include "evd/scene.hpp"

using namespace evd;

namespace {

EventStream random_stream(Rng& rng, uint16_t w = 128, uint16_t h = 128,
                          uint32_t window = 50000, int max_events = 400) {
  std::vector<Event> events;
  const int n = static_cast<int>(rng.below(max_events + 1));
  for (int i = 0; i < n; ++i) {
    events.push_back({static_cast<uint32_t>(rng.below(window)),
                      static_cast<uint16_t>(rng.below(w)),
                      static_cast<uint16_t>(rng.below(h)),
                      static_cast<uint8_t>(rng.below(2))});
  }
  return validate_stream(std::move(events), w, h, window);
}

struct TempDir {
  std::filesystem::path path;
  TempDir() {
    path = std::filesystem::temp_directory_path() /
           ("evd_test_" + std::to_string(::getpid()) + "_" +
            std::to_string(counter()++));
    std::filesystem::create_directories(path);
  }
  ~TempDir() { std::filesystem::remove_all(path); }
  static int& counter() {
    static int c = 0;
    return c;
  }
  std::string file(const std::string& name) const { return (path / name).string(); }
};

}  // namespace

TEST_CASE("validate_stream accepts the empty list") {
  const EventStream s = validate_stream({}, 128, 128, 50000);
  CHECK(s.empty());
  CHECK(s.width == 128);
}

TEST_CASE("validate_stream accepts a single in-bounds event") {
  const EventStream s = validate_stream({{10, 5, 5, 1}}, 128, 128, 50000);
  REQUIRE(s.size() == 1);
  CHECK(s.events[0] == Event{10, 5, 5, 1});
}

TEST_CASE("validate_stream rejects out-of-bounds coordinates") {
  CHECK_THROWS_WITH_AS(validate_stream({{10, 200, 5, 1}}, 128, 128, 50000),
                       doctest::Contains("x out of bounds"), Error);
  CHECK_THROWS_WITH_AS(validate_stream({{10, 5, 200, 1}}, 128, 128, 50000),
                       doctest::Contains("y out of bounds"), Error);
  CHECK_THROWS_WITH_AS(validate_stream({{10, 5, 5, 2}}, 128, 128, 50000),
                       doctest::Contains("polarity"), Error);
  CHECK_THROWS_WITH_AS(validate_stream({{50000, 5, 5, 1}}, 128, 128, 50000),
                       doctest::Contains("timestamp"), Error);
}

TEST_CASE("validate_stream sorts by time, stable on ties") {
  const EventStream s = validate_stream(
      {{20, 1, 1, 0}, {10, 2, 2, 1}, {10, 3, 3, 0}}, 128, 128, 50000);
  CHECK(s.events[0].x == 2);
  CHECK(s.events[1].x == 3);  // same timestamp keeps input order
  CHECK(s.events[2].x == 1);
}

TEST_CASE("to_event_field places a single event in the first bin") {
  const EventStream s = validate_stream({{0, 3, 4, 1}}, 128, 128, 50000);
  const EventField f = to_event_field(s, 50);
  CHECK(f.at(0, 1, 4, 3) == 1);
  size_t sum = 0;
  for (uint8_t v : f.data) sum += v;
  CHECK(sum == 1);
}

TEST_CASE("to_event_field clamps duplicate hits to one") {
  const EventStream s =
      validate_stream({{100, 3, 4, 1}, {200, 3, 4, 1}}, 128, 128, 50000);
  const EventField f = to_event_field(s, 50);
  CHECK(f.at(0, 1, 4, 3) == 1);
  size_t sum = 0;
  for (uint8_t v : f.data) sum += v;
  CHECK(sum == 1);
}

TEST_CASE("to_event_field right edge lands in the last bin") {
  const EventStream s = validate_stream({{49999, 0, 0, 0}}, 128, 128, 50000);
  const EventField f = to_event_field(s, 50);
  CHECK(f.at(49, 0, 0, 0) == 1);
  CHECK(event_bin(49999, 50, 50000) == 49);
  CHECK(event_bin(50000, 50, 50000) == 49);  // inclusive capture tolerance
}

TEST_CASE("to_event_field rejects non-positive bin counts") {
  const EventStream s = validate_stream({}, 128, 128, 50000);
  CHECK_THROWS_AS(to_event_field(s, 0), Error);
}

TEST_CASE("event field sums match distinct cells and bins stay in range") {
  Rng rng(7);
  for (int iter = 0; iter < 20; ++iter) {
    const EventStream s = random_stream(rng);
    const int T = 10 + static_cast<int>(rng.below(90));
    const EventField f = to_event_field(s, T);
    std::set<std::tuple<int, int, int, int>> cells;
    for (const Event& e : s.events) {
      const int bin = event_bin(e.t, T, s.window_us);
      CHECK(bin >= 0);
      CHECK(bin < T);
      cells.insert({bin, e.p, e.y, e.x});
    }
    size_t sum = 0;
    for (uint8_t v : f.data) sum += v;
    CHECK(sum == cells.size());
    CHECK(sum <= s.size());
  }
}

TEST_CASE("generate_scene: noiseless events stay on the swept footprint") {
  SceneConfig cfg;
  cfg.noise_rate = 0;
  cfg.start_x = 20;
  cfg.end_x = 100;
  cfg.start_y = cfg.end_y = 64;
  cfg.radius = 10;
  const SceneResult r = generate_scene(cfg);
  REQUIRE(!r.stream.empty());
  CHECK(r.label == 0);
  for (const Event& e : r.stream.events) {
    // distance from the trajectory position at the event's time
    const double a = static_cast<double>(e.t) / cfg.window_us;
    const double cx = cfg.start_x + (cfg.end_x - cfg.start_x) * a;
    const double dx = e.x - cx;
    const double dy = e.y - cfg.start_y;
    CHECK(std::sqrt(dx * dx + dy * dy) <= cfg.radius + 2.5);
  }
}

TEST_CASE("generate_scene is deterministic per seed") {
  SceneConfig cfg;
  cfg.noise_rate = 2.0;
  cfg.seed = 42;
  const SceneResult a = generate_scene(cfg);
  const SceneResult b = generate_scene(cfg);
  CHECK(a.stream == b.stream);
  CHECK(a.is_object == b.is_object);
}

TEST_CASE("generate_scene rejects a trajectory that never enters the frame") {
  SceneConfig cfg;
  cfg.start_x = -500;
  cfg.end_x = -400;
  CHECK_THROWS_AS(generate_scene(cfg), Error);
}

TEST_CASE("generate_scene noise count follows the Poisson mean") {
  SceneConfig cfg;
  cfg.contrast = 0;  // noise only
  cfg.noise_rate = 1.0;
  cfg.window_us = 100000;
  const double lambda = cfg.noise_rate * 128.0 * 128.0 * 0.1;
  double total = 0;
  for (int seed = 0; seed < 100; ++seed) {
    cfg.seed = seed;
    total += static_cast<double>(generate_scene(cfg).stream.size());
  }
  const double mean = total / 100.0;
  CHECK(std::fabs(mean - lambda) <= 3.0 * std::sqrt(lambda) / 10.0);
}

TEST_CASE("inject_noise identity at rate zero") {
  Rng rng(3);
  const EventStream s = random_stream(rng);
  CHECK(inject_noise(s, 0.0, 9) == s);
}

TEST_CASE("inject_noise never removes events and keeps order") {
  Rng rng(4);
  const EventStream s = random_stream(rng);
  const EventStream noisy = inject_noise(s, 5.0, 11);
  CHECK(noisy.size() >= s.size());
  for (size_t i = 1; i < noisy.events.size(); ++i)
    CHECK(noisy.events[i - 1].t <= noisy.events[i].t);
  // originals survive exactly, in order
  size_t j = 0;
  for (const Event& e : noisy.events)
    if (j < s.events.size() && e == s.events[j]) ++j;
  CHECK(j == s.size());
}

TEST_CASE("inject_noise mean added count matches r*A*W") {
  EventStream empty;
  empty.window_us = 100000;
  const double rate = 1.0;
  const double lambda = rate * 128.0 * 128.0 * 0.1;
  double total = 0;
  for (int seed = 0; seed < 100; ++seed)
    total += static_cast<double>(inject_noise(empty, rate, seed).size());
  const double mean = total / 100.0;
  CHECK(std::fabs(mean - lambda) <= 3.0 * std::sqrt(lambda) / 10.0);
}

TEST_CASE("stream file roundtrip is the identity") {
  TempDir dir;
  Rng rng(5);
  for (int iter = 0; iter < 10; ++iter) {
    const EventStream s = random_stream(rng);
    const std::string path = dir.file("s.evs");
    write_stream(s, path);
    CHECK(read_stream(path) == s);
  }
}

TEST_CASE("empty stream roundtrip keeps metadata") {
  TempDir dir;
  EventStream s;
  s.width = 64;
  s.height = 32;
  s.window_us = 30000;
  const std::string path = dir.file("empty.evs");
  write_stream(s, path);
  const EventStream back = read_stream(path);
  CHECK(back.empty());
  CHECK(back.width == 64);
  CHECK(back.height == 32);
  CHECK(back.window_us == 30000);
}

TEST_CASE("CSV read accepts the documented format") {
  TempDir dir;
  const std::string path = dir.file("s.csv");
  {
    std::ofstream out(path);
    out << "# 128,128,50000\n";
    out << "t_us,x,y,p\n";
    out << "10,5,6,1\n";
    out << "20,7,8,0\n";
  }
  const EventStream s = read_stream(path);
  REQUIRE(s.size() == 2);
  CHECK(s.events[0] == Event{10, 5, 6, 1});
  CHECK(s.events[1] == Event{20, 7, 8, 0});
  CHECK(s.window_us == 50000);
}

TEST_CASE("CSV read rejects negative timestamps") {
  TempDir dir;
  const std::string path = dir.file("neg.csv");
  {
    std::ofstream out(path);
    out << "# 128,128,50000\n-5,1,1,1\n";
  }
  CHECK_THROWS_WITH_AS(read_stream(path), doctest::Contains("negative"), Error);
}

TEST_CASE("binary read reports the byte offset of truncation") {
  TempDir dir;
  EventStream s = validate_stream({{10, 1, 1, 1}, {20, 2, 2, 0}}, 128, 128, 50000);
  const std::string path = dir.file("trunc.evs");
  write_stream(s, path);
  // chop the last record in half
  std::filesystem::resize_file(path, 16 + 8 + 4);
  CHECK_THROWS_WITH_AS(read_stream(path), doctest::Contains("byte offset"), Error);
}
