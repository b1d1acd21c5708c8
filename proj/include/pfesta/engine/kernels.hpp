#pragma once

#include <cstddef>
#include <span>

// Dense compute kernels behind the autograd ops.
//
// Every kernel exists twice: a serial reference in `kernels::serial` and an
// OpenMP version in `kernels::parallel`. The parallel versions split work only
// over independent output rows/channels and keep the per-element summation
// order of the serial loop, so both produce bit-identical results. The
// dispatching entry points in `kernels::` pick one based on problem size and
// the global switch below.
namespace pfesta::kernels {

struct Conv2dGeometry {
  std::size_t in_channels;
  std::size_t in_h;
  std::size_t in_w;
  std::size_t out_channels;
  std::size_t kernel;
  std::size_t stride;
  std::size_t pad;

  std::size_t out_h() const { return (in_h + 2 * pad - kernel) / stride + 1; }
  std::size_t out_w() const { return (in_w + 2 * pad - kernel) / stride + 1; }
};

#define PFESTA_KERNEL_DECLS                                                                        \
  /* c[m x n] = a[m x k] * b[k x n] */                                                             \
  template <typename T>                                                                            \
  void gemm_nn(std::span<const T> a, std::span<const T> b, std::span<T> c, std::size_t m,         \
               std::size_t k, std::size_t n);                                                      \
  /* c[m x k] = g[m x n] * b[k x n]^T */                                                           \
  template <typename T>                                                                            \
  void gemm_nt(std::span<const T> g, std::span<const T> b, std::span<T> c, std::size_t m,         \
               std::size_t k, std::size_t n);                                                      \
  /* c[k x n] = a[m x k]^T * g[m x n] */                                                           \
  template <typename T>                                                                            \
  void gemm_tn(std::span<const T> a, std::span<const T> g, std::span<T> c, std::size_t m,         \
               std::size_t k, std::size_t n);                                                      \
  template <typename T>                                                                            \
  void conv2d_forward(const Conv2dGeometry& geo, std::span<const T> input, std::span<const T> weight, \
                      std::span<const T> bias, std::span<T> output);                               \
  /* grad_weight and grad_bias are overwritten */                                                  \
  template <typename T>                                                                            \
  void conv2d_backward_weight(const Conv2dGeometry& geo, std::span<const T> input,                 \
                              std::span<const T> grad_out, std::span<T> grad_weight,               \
                              std::span<T> grad_bias);                                             \
  /* grad_input is overwritten */                                                                  \
  template <typename T>                                                                            \
  void conv2d_backward_input(const Conv2dGeometry& geo, std::span<const T> weight,                 \
                             std::span<const T> grad_out, std::span<T> grad_input);

namespace serial {
PFESTA_KERNEL_DECLS
}  // namespace serial

namespace parallel {
PFESTA_KERNEL_DECLS
}  // namespace parallel

PFESTA_KERNEL_DECLS

#undef PFESTA_KERNEL_DECLS

// Enables the OpenMP kernels for problems above a small work threshold.
// Defaults to on when the library was built with OpenMP.
void set_parallel(bool enabled);
bool parallel_enabled();
bool built_with_openmp();

}  // namespace pfesta::kernels
