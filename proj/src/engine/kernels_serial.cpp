#include "pfesta/engine/kernels.hpp"

#include <algorithm>
#include <vector>

namespace pfesta::kernels::serial {

template <typename T>
void gemm_nn(std::span<const T> a, std::span<const T> b, std::span<T> c, std::size_t m, std::size_t k,
             std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
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
  for (std::size_t i = 0; i < m; ++i) {
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
  for (std::size_t p = 0; p < k; ++p) {
    T* __restrict crow = c.data() + p * n;
    std::fill(crow, crow + n, T{0});
    for (std::size_t i = 0; i < m; ++i) {
      const T av = a[i * k + p];
      const T* __restrict grow = g.data() + i * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * grow[j];
    }
  }
}

template <typename T>
void conv2d_forward(const Conv2dGeometry& geo, std::span<const T> input, std::span<const T> weight,
                    std::span<const T> bias, std::span<T> output) {
  const std::size_t oh = geo.out_h(), ow = geo.out_w(), ks = geo.kernel;
  for (std::size_t o = 0; o < geo.out_channels; ++o) {
    for (std::size_t y = 0; y < oh; ++y) {
      for (std::size_t x = 0; x < ow; ++x) {
        T acc = bias.empty() ? T{0} : bias[o];
        for (std::size_t c = 0; c < geo.in_channels; ++c) {
          for (std::size_t ky = 0; ky < ks; ++ky) {
            const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(y * geo.stride + ky) - static_cast<std::ptrdiff_t>(geo.pad);
            if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(geo.in_h)) continue;
            for (std::size_t kx = 0; kx < ks; ++kx) {
              const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(x * geo.stride + kx) - static_cast<std::ptrdiff_t>(geo.pad);
              if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(geo.in_w)) continue;
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
  for (std::size_t o = 0; o < geo.out_channels; ++o) {
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
            const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(y * geo.stride + ky) - static_cast<std::ptrdiff_t>(geo.pad);
            if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(geo.in_h)) continue;
            for (std::size_t x = 0; x < ow; ++x) {
              const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(x * geo.stride + kx) - static_cast<std::ptrdiff_t>(geo.pad);
              if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(geo.in_w)) continue;
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
  for (std::size_t c = 0; c < geo.in_channels; ++c) {
    T* gin = grad_input.data() + c * geo.in_h * geo.in_w;
    std::fill(gin, gin + geo.in_h * geo.in_w, T{0});
    for (std::size_t o = 0; o < geo.out_channels; ++o) {
      for (std::size_t y = 0; y < oh; ++y) {
        for (std::size_t x = 0; x < ow; ++x) {
          const T g = grad_out[(o * oh + y) * ow + x];
          for (std::size_t ky = 0; ky < ks; ++ky) {
            const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(y * geo.stride + ky) - static_cast<std::ptrdiff_t>(geo.pad);
            if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(geo.in_h)) continue;
            for (std::size_t kx = 0; kx < ks; ++kx) {
              const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(x * geo.stride + kx) - static_cast<std::ptrdiff_t>(geo.pad);
              if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(geo.in_w)) continue;
              gin[static_cast<std::size_t>(iy) * geo.in_w + static_cast<std::size_t>(ix)] +=
                  weight[((o * geo.in_channels + c) * ks + ky) * ks + kx] * g;
            }
          }
        }
      }
    }
  }
}

#define PFESTA_INSTANTIATE(T)                                                                                  \
  template void gemm_nn<T>(std::span<const T>, std::span<const T>, std::span<T>, std::size_t, std::size_t,    \
                           std::size_t);                                                                       \
  template void gemm_nt<T>(std::span<const T>, std::span<const T>, std::span<T>, std::size_t, std::size_t,    \
                           std::size_t);                                                                       \
  template void gemm_tn<T>(std::span<const T>, std::span<const T>, std::span<T>, std::size_t, std::size_t,    \
                           std::size_t);                                                                       \
  template void conv2d_forward<T>(const Conv2dGeometry&, std::span<const T>, std::span<const T>,              \
                                  std::span<const T>, std::span<T>);                                          \
  template void conv2d_backward_weight<T>(const Conv2dGeometry&, std::span<const T>, std::span<const T>,      \
                                          std::span<T>, std::span<T>);                                        \
  template void conv2d_backward_input<T>(const Conv2dGeometry&, std::span<const T>, std::span<const T>,       \
                                         std::span<T>);

PFESTA_INSTANTIATE(float)
PFESTA_INSTANTIATE(double)
#undef PFESTA_INSTANTIATE

}  // namespace pfesta::kernels::serial
