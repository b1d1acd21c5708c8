#include <algorithm>
#include <atomic>
#include <cstddef>
#include <vector>

#include "pfesta/engine/kernels.hpp"

namespace pfesta::kernels {

namespace parallel {

using Index = std::ptrdiff_t;

template <typename T>
void gemm_nn(std::span<const T> a, std::span<const T> b, std::span<T> c, std::size_t m, std::size_t k,
             std::size_t n) {
#pragma omp parallel for schedule(static)
  for (Index i = 0; i < static_cast<Index>(m); ++i) {
    T* __restrict crow = c.data() + i * n;
    std::fill(crow, crow + n, T{0});
    for (std::size_t p = 0; p < k; ++p) {
      const T av = a[i * k + p];
      const T* __restrict brow = b.data() + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

template <typename T>
void gemm_nt(std::span<const T> g, std::span<const T> b, std::span<T> c, std::size_t m, std::size_t k,
             std::size_t n) {
  // b transposed once, so each c[i, p] still sums over j in ascending order
  std::vector<T> bt(k * n);
  for (std::size_t p = 0; p < k; ++p)
    for (std::size_t j = 0; j < n; ++j) bt[j * k + p] = b[p * n + j];
#pragma omp parallel for schedule(static)
  for (Index i = 0; i < static_cast<Index>(m); ++i) {
    T* __restrict crow = c.data() + i * k;
    const T* __restrict grow = g.data() + i * n;
    std::fill(crow, crow + k, T{0});
    for (std::size_t j = 0; j < n; ++j) {
      const T gv = grow[j];
      const T* __restrict brow = bt.data() + j * k;
      for (std::size_t p = 0; p < k; ++p) crow[p] += gv * brow[p];
    }
  }
}

template <typename T>
void gemm_tn(std::span<const T> a, std::span<const T> g, std::span<T> c, std::size_t m, std::size_t k,
             std::size_t n) {
#pragma omp parallel for schedule(static)
  for (Index p = 0; p < static_cast<Index>(k); ++p) {
    T* __restrict crow = c.data() + p * n;
    std::fill(crow, crow + n, T{0});
    for (std::size_t i = 0; i < m; ++i) {
      const T av = a[i * k + p];
      const T* __restrict grow = g.data() + i * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * grow[j];
    }
  }
}

namespace {
inline bool inside(std::ptrdiff_t v, std::size_t limit) { return v >= 0 && v < static_cast<std::ptrdiff_t>(limit); }
}  // namespace

template <typename T>
void conv2d_forward(const Conv2dGeometry& geo, std::span<const T> input, std::span<const T> weight,
                    std::span<const T> bias, std::span<T> output) {
  const std::size_t oh = geo.out_h(), ow = geo.out_w(), ks = geo.kernel;
  const auto pad = static_cast<std::ptrdiff_t>(geo.pad);
#pragma omp parallel for schedule(static)
  for (Index oi = 0; oi < static_cast<Index>(geo.out_channels); ++oi) {
    const auto o = static_cast<std::size_t>(oi);
    for (std::size_t y = 0; y < oh; ++y) {
      for (std::size_t x = 0; x < ow; ++x) {
        T acc = bias.empty() ? T{0} : bias[o];
        for (std::size_t c = 0; c < geo.in_channels; ++c) {
          for (std::size_t ky = 0; ky < ks; ++ky) {
            const auto iy = static_cast<std::ptrdiff_t>(y * geo.stride + ky) - pad;
            if (!inside(iy, geo.in_h)) continue;
            for (std::size_t kx = 0; kx < ks; ++kx) {
              const auto ix = static_cast<std::ptrdiff_t>(x * geo.stride + kx) - pad;
              if (!inside(ix, geo.in_w)) continue;
              acc += weight[((o * geo.in_channels + c) * ks + ky) * ks + kx] *
                     input[(c * geo.in_h + static_cast<std::size_t>(iy)) * geo.in_w + static_cast<std::size_t>(ix)];
            }
          }
        }
        output[(o * oh + y) * ow + x] = acc;
      }
    }
  }
}

template <typename T>
void conv2d_backward_weight(const Conv2dGeometry& geo, std::span<const T> input, std::span<const T> grad_out,
                            std::span<T> grad_weight, std::span<T> grad_bias) {
  const std::size_t oh = geo.out_h(), ow = geo.out_w(), ks = geo.kernel;
  const auto pad = static_cast<std::ptrdiff_t>(geo.pad);
#pragma omp parallel for schedule(static)
  for (Index oi = 0; oi < static_cast<Index>(geo.out_channels); ++oi) {
    const auto o = static_cast<std::size_t>(oi);
    if (!grad_bias.empty()) {
      T acc{0};
      for (std::size_t i = 0; i < oh * ow; ++i) acc += grad_out[o * oh * ow + i];
      grad_bias[o] = acc;
    }
    for (std::size_t c = 0; c < geo.in_channels; ++c) {
      for (std::size_t ky = 0; ky < ks; ++ky) {
        for (std::size_t kx = 0; kx < ks; ++kx) {
          T acc{0};
          for (std::size_t y = 0; y < oh; ++y) {
            const auto iy = static_cast<std::ptrdiff_t>(y * geo.stride + ky) - pad;
            if (!inside(iy, geo.in_h)) continue;
            for (std::size_t x = 0; x < ow; ++x) {
              const auto ix = static_cast<std::ptrdiff_t>(x * geo.stride + kx) - pad;
              if (!inside(ix, geo.in_w)) continue;
              acc += grad_out[(o * oh + y) * ow + x] *
                     input[(c * geo.in_h + static_cast<std::size_t>(iy)) * geo.in_w + static_cast<std::size_t>(ix)];
            }
          }
          grad_weight[((o * geo.in_channels + c) * ks + ky) * ks + kx] = acc;
        }
      }
    }
  }
}

template <typename T>
void conv2d_backward_input(const Conv2dGeometry& geo, std::span<const T> weight, std::span<const T> grad_out,
                           std::span<T> grad_input) {
  const std::size_t oh = geo.out_h(), ow = geo.out_w(), ks = geo.kernel;
  const auto pad = static_cast<std::ptrdiff_t>(geo.pad);
#pragma omp parallel for schedule(static)
  for (Index ci = 0; ci < static_cast<Index>(geo.in_channels); ++ci) {
    const auto c = static_cast<std::size_t>(ci);
    T* gin = grad_input.data() + c * geo.in_h * geo.in_w;
    std::fill(gin, gin + geo.in_h * geo.in_w, T{0});
    for (std::size_t o = 0; o < geo.out_channels; ++o) {
      for (std::size_t y = 0; y < oh; ++y) {
        for (std::size_t x = 0; x < ow; ++x) {
          const T g = grad_out[(o * oh + y) * ow + x];
          for (std::size_t ky = 0; ky < ks; ++ky) {
            const auto iy = static_cast<std::ptrdiff_t>(y * geo.stride + ky) - pad;
            if (!inside(iy, geo.in_h)) continue;
            for (std::size_t kx = 0; kx < ks; ++kx) {
              const auto ix = static_cast<std::ptrdiff_t>(x * geo.stride + kx) - pad;
              if (!inside(ix, geo.in_w)) continue;
              gin[static_cast<std::size_t>(iy) * geo.in_w + static_cast<std::size_t>(ix)] +=
                  weight[((o * geo.in_channels + c) * ks + ky) * ks + kx] * g;
            }
          }
        }
      }
    }
  }
}

}  // namespace parallel

namespace {

#ifdef _OPENMP
std::atomic<bool> g_parallel{true};
#else
std::atomic<bool> g_parallel{false};
#endif

// Below this many multiply-adds the thread fork costs more than it saves.
constexpr std::size_t kMinParallelWork = 1u << 15;

bool use_parallel(std::size_t work) { return g_parallel.load(std::memory_order_relaxed) && work >= kMinParallelWork; }

}  // namespace

void set_parallel(bool enabled) { g_parallel.store(enabled && built_with_openmp()); }
bool parallel_enabled() { return g_parallel.load(); }

bool built_with_openmp() {
#ifdef _OPENMP
  return true;
#else
  return false;
#endif
}

template <typename T>
void gemm_nn(std::span<const T> a, std::span<const T> b, std::span<T> c, std::size_t m, std::size_t k,
             std::size_t n) {
  if (use_parallel(m * k * n)) {
    parallel::gemm_nn(a, b, c, m, k, n);
  } else {
    serial::gemm_nn(a, b, c, m, k, n);
  }
}

template <typename T>
void gemm_nt(std::span<const T> g, std::span<const T> b, std::span<T> c, std::size_t m, std::size_t k,
             std::size_t n) {
  if (use_parallel(m * k * n)) {
    parallel::gemm_nt(g, b, c, m, k, n);
  } else {
    serial::gemm_nt(g, b, c, m, k, n);
  }
}

template <typename T>
void gemm_tn(std::span<const T> a, std::span<const T> g, std::span<T> c, std::size_t m, std::size_t k,
             std::size_t n) {
  if (use_parallel(m * k * n)) {
    parallel::gemm_tn(a, g, c, m, k, n);
  } else {
    serial::gemm_tn(a, g, c, m, k, n);
  }
}

namespace {
std::size_t conv_work(const Conv2dGeometry& geo) {
  return geo.out_channels * geo.out_h() * geo.out_w() * geo.in_channels * geo.kernel * geo.kernel;
}
}  // namespace

template <typename T>
void conv2d_forward(const Conv2dGeometry& geo, std::span<const T> input, std::span<const T> weight,
                    std::span<const T> bias, std::span<T> output) {
  if (use_parallel(conv_work(geo))) {
    parallel::conv2d_forward(geo, input, weight, bias, output);
  } else {
    serial::conv2d_forward(geo, input, weight, bias, output);
  }
}

template <typename T>
void conv2d_backward_weight(const Conv2dGeometry& geo, std::span<const T> input, std::span<const T> grad_out,
                            std::span<T> grad_weight, std::span<T> grad_bias) {
  if (use_parallel(conv_work(geo))) {
    parallel::conv2d_backward_weight(geo, input, grad_out, grad_weight, grad_bias);
  } else {
    serial::conv2d_backward_weight(geo, input, grad_out, grad_weight, grad_bias);
  }
}

template <typename T>
void conv2d_backward_input(const Conv2dGeometry& geo, std::span<const T> weight, std::span<const T> grad_out,
                           std::span<T> grad_input) {
  if (use_parallel(conv_work(geo))) {
    parallel::conv2d_backward_input(geo, weight, grad_out, grad_input);
  } else {
    serial::conv2d_backward_input(geo, weight, grad_out, grad_input);
  }
}

#define PFESTA_INSTANTIATE_NS(NS, T)                                                                           \
  template void NS::gemm_nn<T>(std::span<const T>, std::span<const T>, std::span<T>, std::size_t, std::size_t, \
                               std::size_t);                                                                   \
  template void NS::gemm_nt<T>(std::span<const T>, std::span<const T>, std::span<T>, std::size_t, std::size_t, \
                               std::size_t);                                                                   \
  template void NS::gemm_tn<T>(std::span<const T>, std::span<const T>, std::span<T>, std::size_t, std::size_t, \
                               std::size_t);                                                                   \
  template void NS::conv2d_forward<T>(const Conv2dGeometry&, std::span<const T>, std::span<const T>,          \
                                      std::span<const T>, std::span<T>);                                      \
  template void NS::conv2d_backward_weight<T>(const Conv2dGeometry&, std::span<const T>, std::span<const T>,  \
                                              std::span<T>, std::span<T>);                                    \
  template void NS::conv2d_backward_input<T>(const Conv2dGeometry&, std::span<const T>, std::span<const T>,   \
                                             std::span<T>);

PFESTA_INSTANTIATE_NS(parallel, float)
PFESTA_INSTANTIATE_NS(parallel, double)
PFESTA_INSTANTIATE_NS(pfesta::kernels, float)
PFESTA_INSTANTIATE_NS(pfesta::kernels, double)
#undef PFESTA_INSTANTIATE_NS

}  // namespace pfesta::kernels
