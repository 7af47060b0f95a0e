#include "evd/kernels.hpp"

namespace evd::kern {

namespace {

void lif_step_scalar(int n, float dc, float dv, float uth, const float* in,
                     float* c, float* u, float* o) {
  for (int i = 0; i < n; ++i) {
    const float ci = dc * c[i] + in[i];
    const float ui = (dv * u[i]) * (1.0f - o[i]) + ci;
    c[i] = ci;
    u[i] = ui;
    o[i] = ui >= uth ? 1.0f : 0.0f;
  }
}

void axpy_f_scalar(int n, float a, const float* x, float* y) {
  for (int i = 0; i < n; ++i) y[i] = y[i] + a * x[i];
}

void axpy_d_scalar(int n, double a, const double* x, double* y) {
  for (int i = 0; i < n; ++i) y[i] = y[i] + a * x[i];
}

double dot_fd_scalar(int n, const float* x, const double* y) {
  double acc = 0.0;
  for (int i = 0; i < n; ++i) acc += static_cast<double>(x[i]) * y[i];
  return acc;
}

double dot_ff_scalar(int n, const float* x, const float* y) {
  double acc = 0.0;
  for (int i = 0; i < n; ++i) acc += static_cast<double>(x[i]) * static_cast<double>(y[i]);
  return acc;
}

}  // namespace

const Kernels& scalar() {
  static const Kernels table = {
      "scalar", lif_step_scalar, axpy_f_scalar, axpy_d_scalar,
      dot_fd_scalar, dot_ff_scalar,
  };
  return table;
}

}  // namespace evd::kern
