#pragma once

#include <cstdint>
#include <functional>
#include <string>

namespace evd::kern {

// Data-parallel inner loops behind the simulator. Every operation exists as a
// scalar reference and (on x86) an AVX2 variant; the active table is picked at
// runtime. Elementwise kernels (lif_step, axpy) must be bit-identical across
// variants: they perform the same mul/add sequence per element and the build
// disables fp contraction. Reduction kernels (dot) may differ in summation
// order and are equivalence-tested under a tolerance instead.
struct Kernels {
  const char* name;

  // One TS-LIF update over n neurons:
  //   c' = dc*c + in
  //   u' = (dv*u)*(1-o) + c'
  //   o' = u' >= uth
  // o is the previous spike on entry (as 0/1 float) and the new one on exit.
  void (*lif_step)(int n, float dc, float dv, float uth, const float* in,
                   float* c, float* u, float* o);

  // y += a*x
  void (*axpy_f)(int n, float a, const float* x, float* y);
  void (*axpy_d)(int n, double a, const double* x, double* y);

  // sum_i x[i]*y[i], accumulated in double.
  double (*dot_fd)(int n, const float* x, const double* y);
  double (*dot_ff)(int n, const float* x, const float* y);
};

const Kernels& scalar();
#ifdef __x86_64__
const Kernels& avx2();  // only valid to call when avx2_supported()
#endif
bool avx2_supported();

// Active table: AVX2 when the CPU has it, scalar otherwise. The EVD_KERNELS
// environment variable ("scalar" / "avx2") or select() overrides the choice.
const Kernels& active();
void select(const std::string& name);

// Static-partition parallel map over [0, n). Each index is written by exactly
// one worker, so results are identical for any worker count. thread count 0
// means "use the configured default" (see set_threads).
void parallel_for(int64_t n, const std::function<void(int64_t, int64_t)>& fn);
void set_threads(int threads);
int threads();

}  // namespace evd::kern
