#include "evd/kernels.hpp"

#include <atomic>
#include <cstdlib>
#include <thread>
#include <vector>

#include "evd/error.hpp"

namespace evd::kern {

namespace {

const Kernels* pick_default() {
#if defined(__x86_64__) && defined(EVD_BUILD_AVX2)
  if (avx2_supported()) return &avx2();
#endif
  return &scalar();
}

const Kernels* g_active = nullptr;
int g_threads = 0;

const Kernels* resolve(const std::string& name) {
  if (name == "scalar") return &scalar();
#if defined(__x86_64__) && defined(EVD_BUILD_AVX2)
  if (name == "avx2") {
    if (!avx2_supported()) throw_usage("avx2 kernels requested but CPU lacks AVX2");
    return &avx2();
  }
#endif
  throw_usage("unknown kernel variant '" + name + "'");
}

}  // namespace

bool avx2_supported() {
#if defined(__x86_64__) && defined(EVD_BUILD_AVX2)
  return __builtin_cpu_supports("avx2");
#else
  return false;
#endif
}

const Kernels& active() {
  if (!g_active) {
    if (const char* env = std::getenv("EVD_KERNELS"))
      g_active = resolve(env);
    else
      g_active = pick_default();
  }
  return *g_active;
}

void select(const std::string& name) { g_active = resolve(name); }

void set_threads(int threads) { g_threads = threads; }

int threads() {
  if (g_threads > 0) return g_threads;
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw > 4 ? 4 : hw);
}

void parallel_for(int64_t n, const std::function<void(int64_t, int64_t)>& fn) {
  const int nt = threads();
  if (n <= 0) return;
  if (nt <= 1 || n < 1024) {
    fn(0, n);
    return;
  }
  const int workers = static_cast<int>(std::min<int64_t>(nt, n));
  std::vector<std::thread> pool;
  pool.reserve(workers - 1);
  const int64_t chunk = (n + workers - 1) / workers;
  for (int w = 1; w < workers; ++w) {
    const int64_t lo = w * chunk;
    const int64_t hi = std::min<int64_t>(n, lo + chunk);
    if (lo >= hi) break;
    pool.emplace_back([&fn, lo, hi] { fn(lo, hi); });
  }
  fn(0, std::min<int64_t>(n, chunk));
  for (auto& t : pool) t.join();
}

}  // namespace evd::kern
