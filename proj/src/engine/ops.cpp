#include "pfesta/engine/ops.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <numbers>

#include "pfesta/engine/kernels.hpp"

namespace pfesta::ops {

namespace {

template <typename T>
using Tn = BasicTensor<T>;

template <typename T>
BasicGraph<T>& same_graph(V<T> a, V<T> b) {
  if (a.graph == nullptr || a.graph != b.graph) throw ContractError("operands belong to different graphs");
  return *a.graph;
}

[[noreturn]] void mismatch(const char* op, const Shape& a, const Shape& b) {
  throw DimensionError(std::string(op) + ": incompatible shapes " + shape_string(a) + " and " + shape_string(b));
}

void require_rank(const char* op, const Shape& s, std::size_t rank) {
  if (s.size() != rank) {
    throw DimensionError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " + shape_string(s));
  }
}

// Row broadcast: b is rank-1 with length equal to the last dim of a.
bool is_row_broadcast(const Shape& a, const Shape& b) {
  return b.size() == 1 && !a.empty() && a.back() == b[0] && a != b;
}

template <typename T>
T softplus(T x) {
  return x > T{0} ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

template <typename T>
T sigmoid_scalar(T x) {
  if (x >= T{0}) {
    const T e = std::exp(-x);
    return T{1} / (T{1} + e);
  }
  const T e = std::exp(x);
  return e / (T{1} + e);
}

}  // namespace

template <typename T>
V<T> matmul(V<T> a, V<T> b) {
  auto& g = same_graph(a, b);
  const auto& as = a.shape();
  const auto& bs = b.shape();
  if (as.size() != 2 || bs.size() != 2 || as[1] != bs[0]) mismatch("matmul", as, bs);
  const std::size_t m = as[0], k = as[1], n = bs[1];
  Tn<T> out(Shape{m, n});
  kernels::gemm_nn<T>(a.value().data(), b.value().data(), out.data(), m, k, n);
  const std::size_t ia = a.id, ib = b.id;
  return g.record(std::move(out), {ia, ib}, [ia, ib, m, k, n](BasicGraph<T>& gr, const Tn<T>& go) {
    if (gr.requires_grad(ia)) {
      Tn<T> da(Shape{m, k});
      kernels::gemm_nt<T>(go.data(), gr.value(ib).data(), da.data(), m, k, n);
      gr.accumulate(ia, std::move(da));
    }
    if (gr.requires_grad(ib)) {
      Tn<T> db(Shape{k, n});
      kernels::gemm_tn<T>(gr.value(ia).data(), go.data(), db.data(), m, k, n);
      gr.accumulate(ib, std::move(db));
    }
  });
}

namespace {

// Shared implementation of add/sub/mul with optional row broadcast of b.
enum class Binary { Add, Sub, Mul };

template <typename T>
V<T> binary(V<T> a, V<T> b, Binary kind, const char* name) {
  auto& g = same_graph(a, b);
  const auto& as = a.shape();
  const auto& bs = b.shape();
  const bool bcast = is_row_broadcast(as, bs);
  if (!bcast && as != bs) mismatch(name, as, bs);
  const std::size_t width = bcast ? bs[0] : a.value().size();
  const auto av = a.value().data();
  const auto bv = b.value().data();
  Tn<T> out(as);
  auto o = out.data();
  for (std::size_t i = 0; i < o.size(); ++i) {
    const T y = bv[i % width];
    switch (kind) {
      case Binary::Add: o[i] = av[i] + y; break;
      case Binary::Sub: o[i] = av[i] - y; break;
      case Binary::Mul: o[i] = av[i] * y; break;
    }
  }
  const std::size_t ia = a.id, ib = b.id;
  const Shape bshape = bs;
  return g.record(std::move(out), {ia, ib}, [ia, ib, kind, width, bshape](BasicGraph<T>& gr, const Tn<T>& go) {
    const auto gv = go.data();
    if (gr.requires_grad(ia)) {
      if (kind == Binary::Mul) {
        Tn<T> da(go.shape());
        const auto bv2 = gr.value(ib).data();
        for (std::size_t i = 0; i < gv.size(); ++i) da[i] = gv[i] * bv2[i % width];
        gr.accumulate(ia, std::move(da));
      } else {
        gr.accumulate(ia, go);
      }
    }
    if (gr.requires_grad(ib)) {
      Tn<T> db(bshape);
      const auto av2 = gr.value(ia).data();
      for (std::size_t i = 0; i < gv.size(); ++i) {
        T contrib = gv[i];
        if (kind == Binary::Sub) contrib = -contrib;
        if (kind == Binary::Mul) contrib *= av2[i];
        db[i % width] += contrib;
      }
      gr.accumulate(ib, std::move(db));
    }
  });
}

}  // namespace

template <typename T>
V<T> add(V<T> a, V<T> b) {
  return binary(a, b, Binary::Add, "add");
}
template <typename T>
V<T> sub(V<T> a, V<T> b) {
  return binary(a, b, Binary::Sub, "sub");
}
template <typename T>
V<T> mul(V<T> a, V<T> b) {
  return binary(a, b, Binary::Mul, "mul");
}

template <typename T>
V<T> scale(V<T> a, T factor) {
  Tn<T> out = a.value();
  for (auto& v : out.data()) v *= factor;
  const std::size_t ia = a.id;
  return a.graph->record(std::move(out), {ia}, [ia, factor](BasicGraph<T>& gr, const Tn<T>& go) {
    Tn<T> da = go;
    for (auto& v : da.data()) v *= factor;
    gr.accumulate(ia, std::move(da));
  });
}

namespace {
struct AxisLayout {
  std::size_t outer, extent, inner;
};

AxisLayout axis_layout(const Shape& s, std::size_t axis) {
  if (axis >= s.size()) {
    throw DimensionError("axis " + std::to_string(axis) + " out of range for shape " + shape_string(s));
  }
  AxisLayout l{1, s[axis], 1};
  for (std::size_t i = 0; i < axis; ++i) l.outer *= s[i];
  for (std::size_t i = axis + 1; i < s.size(); ++i) l.inner *= s[i];
  return l;
}
}  // namespace

template <typename T>
V<T> softmax(V<T> x, std::size_t axis) {
  const auto l = axis_layout(x.shape(), axis);
  const auto xv = x.value().data();
  Tn<T> out(x.shape());
  auto o = out.data();
  for (std::size_t a = 0; a < l.outer; ++a) {
    for (std::size_t c = 0; c < l.inner; ++c) {
      const std::size_t base = a * l.extent * l.inner + c;
      T mx = xv[base];
      for (std::size_t j = 1; j < l.extent; ++j) mx = std::max(mx, xv[base + j * l.inner]);
      T total{0};
      for (std::size_t j = 0; j < l.extent; ++j) {
        const T e = std::exp(xv[base + j * l.inner] - mx);
        o[base + j * l.inner] = e;
        total += e;
      }
      for (std::size_t j = 0; j < l.extent; ++j) o[base + j * l.inner] /= total;
    }
  }
  const std::size_t ix = x.id;
  const std::size_t self = x.graph->size();
  return x.graph->record(std::move(out), {ix}, [ix, l, self](BasicGraph<T>& gr, const Tn<T>& go) {
    const auto y = gr.value(self).data();
    const auto gv = go.data();
    Tn<T> dx(go.shape());
    for (std::size_t a = 0; a < l.outer; ++a) {
      for (std::size_t c = 0; c < l.inner; ++c) {
        const std::size_t base = a * l.extent * l.inner + c;
        T dot{0};
        for (std::size_t j = 0; j < l.extent; ++j) dot += gv[base + j * l.inner] * y[base + j * l.inner];
        for (std::size_t j = 0; j < l.extent; ++j) {
          const std::size_t p = base + j * l.inner;
          dx[p] = y[p] * (gv[p] - dot);
        }
      }
    }
    gr.accumulate(ix, std::move(dx));
  });
}

template <typename T>
V<T> layer_norm(V<T> x, V<T> gamma, V<T> beta, T eps) {
  auto& g = same_graph(x, gamma);
  same_graph(x, beta);
  if (eps < T{0}) throw ContractError("layer_norm eps must be >= 0");
  const auto& xs = x.shape();
  const std::size_t d = xs.back();
  if (gamma.shape() != Shape{d}) mismatch("layer_norm(gamma)", xs, gamma.shape());
  if (beta.shape() != Shape{d}) mismatch("layer_norm(beta)", xs, beta.shape());
  const std::size_t rows = x.value().size() / d;
  const auto xv = x.value().data();
  const auto gm = gamma.value().data();
  const auto bt = beta.value().data();
  Tn<T> out(xs);
  // Per-row normalized values and inverse std, kept for backward.
  auto xhat = std::make_shared<std::vector<T>>(xv.size());
  auto inv_std = std::make_shared<std::vector<T>>(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const T* row = xv.data() + r * d;
    T mu{0};
    for (std::size_t j = 0; j < d; ++j) mu += row[j];
    mu /= static_cast<T>(d);
    T var{0};
    for (std::size_t j = 0; j < d; ++j) var += (row[j] - mu) * (row[j] - mu);
    var /= static_cast<T>(d);
    const T is = T{1} / std::sqrt(var + eps);
    (*inv_std)[r] = is;
    for (std::size_t j = 0; j < d; ++j) {
      const T h = (row[j] - mu) * is;
      (*xhat)[r * d + j] = h;
      out[r * d + j] = h * gm[j] + bt[j];
    }
  }
  const std::size_t ix = x.id, ig = gamma.id, ib = beta.id;
  return g.record(std::move(out), {ix, ig, ib},
                  [ix, ig, ib, d, rows, xhat, inv_std](BasicGraph<T>& gr, const Tn<T>& go) {
                    const auto gv = go.data();
                    const auto gm2 = gr.value(ig).data();
                    if (gr.requires_grad(ig) || gr.requires_grad(ib)) {
                      Tn<T> dg(Shape{d}), db(Shape{d});
                      for (std::size_t r = 0; r < rows; ++r) {
                        for (std::size_t j = 0; j < d; ++j) {
                          dg[j] += gv[r * d + j] * (*xhat)[r * d + j];
                          db[j] += gv[r * d + j];
                        }
                      }
                      gr.accumulate(ig, std::move(dg));
                      gr.accumulate(ib, std::move(db));
                    }
                    if (gr.requires_grad(ix)) {
                      Tn<T> dx(go.shape());
                      for (std::size_t r = 0; r < rows; ++r) {
                        T mean_dh{0}, mean_dh_h{0};
                        for (std::size_t j = 0; j < d; ++j) {
                          const T dh = gv[r * d + j] * gm2[j];
                          mean_dh += dh;
                          mean_dh_h += dh * (*xhat)[r * d + j];
                        }
                        mean_dh /= static_cast<T>(d);
                        mean_dh_h /= static_cast<T>(d);
                        for (std::size_t j = 0; j < d; ++j) {
                          const T dh = gv[r * d + j] * gm2[j];
                          dx[r * d + j] = (*inv_std)[r] * (dh - mean_dh - (*xhat)[r * d + j] * mean_dh_h);
                        }
                      }
                      gr.accumulate(ix, std::move(dx));
                    }
                  });
}

namespace {
template <typename T, typename F, typename DF>
V<T> unary(V<T> x, F f, DF df) {
  Tn<T> out(x.shape());
  const auto xv = x.value().data();
  for (std::size_t i = 0; i < xv.size(); ++i) out[i] = f(xv[i]);
  const std::size_t ix = x.id;
  return x.graph->record(std::move(out), {ix}, [ix, df](BasicGraph<T>& gr, const Tn<T>& go) {
    const auto xv2 = gr.value(ix).data();
    Tn<T> dx(go.shape());
    for (std::size_t i = 0; i < xv2.size(); ++i) dx[i] = go[i] * df(xv2[i]);
    gr.accumulate(ix, std::move(dx));
  });
}
}  // namespace

template <typename T>
V<T> gelu(V<T> x) {
  constexpr T inv_sqrt2 = static_cast<T>(1.0 / std::numbers::sqrt2);
  constexpr T inv_sqrt2pi = static_cast<T>(0.5 * std::numbers::inv_sqrtpi * std::numbers::sqrt2);
  return unary<T>(
      x, [](T v) { return T{0.5} * v * (T{1} + std::erf(v * inv_sqrt2)); },
      [](T v) { return T{0.5} * (T{1} + std::erf(v * inv_sqrt2)) + v * inv_sqrt2pi * std::exp(T{-0.5} * v * v); });
}

template <typename T>
V<T> relu(V<T> x) {
  return unary<T>(
      x, [](T v) { return v > T{0} ? v : T{0}; }, [](T v) { return v > T{0} ? T{1} : T{0}; });
}

template <typename T>
V<T> sigmoid(V<T> x) {
  return unary<T>(
      x, [](T v) { return sigmoid_scalar(v); },
      [](T v) {
        const T s = sigmoid_scalar(v);
        return s * (T{1} - s);
      });
}

template <typename T>
V<T> reshape(V<T> x, Shape shape) {
  Tn<T> out = x.value().reshaped(std::move(shape));
  const std::size_t ix = x.id;
  const Shape original = x.shape();
  return x.graph->record(std::move(out), {ix}, [ix, original](BasicGraph<T>& gr, const Tn<T>& go) {
    gr.accumulate(ix, go.reshaped(original));
  });
}

template <typename T>
V<T> transpose(V<T> x) {
  require_rank("transpose", x.shape(), 2);
  const std::size_t r = x.shape()[0], c = x.shape()[1];
  Tn<T> out(Shape{c, r});
  const auto& xv = x.value();
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out.at(j, i) = xv.at(i, j);
  const std::size_t ix = x.id;
  return x.graph->record(std::move(out), {ix}, [ix, r, c](BasicGraph<T>& gr, const Tn<T>& go) {
    Tn<T> dx(Shape{r, c});
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) dx.at(i, j) = go.at(j, i);
    gr.accumulate(ix, std::move(dx));
  });
}

template <typename T>
V<T> sum(V<T> x) {
  T total{0};
  for (T v : x.value().data()) total += v;
  const std::size_t ix = x.id;
  const Shape s = x.shape();
  return x.graph->record(Tn<T>::scalar(total), {ix}, [ix, s](BasicGraph<T>& gr, const Tn<T>& go) {
    gr.accumulate(ix, Tn<T>(s, go[0]));
  });
}

template <typename T>
V<T> mean(V<T> x) {
  return scale(sum(x), T{1} / static_cast<T>(x.value().size()));
}

template <typename T>
V<T> mean_rows(V<T> x) {
  require_rank("mean_rows", x.shape(), 2);
  const std::size_t n = x.shape()[0], d = x.shape()[1];
  Tn<T> out(Shape{d});
  const auto& xv = x.value();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) out[j] += xv.at(i, j);
  for (auto& v : out.data()) v /= static_cast<T>(n);
  const std::size_t ix = x.id;
  return x.graph->record(std::move(out), {ix}, [ix, n, d](BasicGraph<T>& gr, const Tn<T>& go) {
    Tn<T> dx(Shape{n, d});
    const T inv = T{1} / static_cast<T>(n);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < d; ++j) dx.at(i, j) = go[j] * inv;
    gr.accumulate(ix, std::move(dx));
  });
}

template <typename T>
V<T> slice_rows(V<T> x, std::size_t begin, std::size_t end) {
  require_rank("slice_rows", x.shape(), 2);
  const std::size_t n = x.shape()[0], d = x.shape()[1];
  if (begin >= end || end > n) throw DimensionError("slice_rows range out of bounds for " + shape_string(x.shape()));
  const auto xv = x.value().data();
  Tn<T> out(Shape{end - begin, d}, std::vector<T>(xv.begin() + begin * d, xv.begin() + end * d));
  const std::size_t ix = x.id;
  return x.graph->record(std::move(out), {ix}, [ix, n, d, begin](BasicGraph<T>& gr, const Tn<T>& go) {
    Tn<T> dx(Shape{n, d});
    std::copy(go.data().begin(), go.data().end(), dx.data().begin() + begin * d);
    gr.accumulate(ix, std::move(dx));
  });
}

template <typename T>
V<T> slice_cols(V<T> x, std::size_t begin, std::size_t end) {
  require_rank("slice_cols", x.shape(), 2);
  const std::size_t n = x.shape()[0], d = x.shape()[1];
  if (begin >= end || end > d) throw DimensionError("slice_cols range out of bounds for " + shape_string(x.shape()));
  const std::size_t w = end - begin;
  Tn<T> out(Shape{n, w});
  const auto& xv = x.value();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < w; ++j) out.at(i, j) = xv.at(i, begin + j);
  const std::size_t ix = x.id;
  return x.graph->record(std::move(out), {ix}, [ix, n, d, begin, w](BasicGraph<T>& gr, const Tn<T>& go) {
    Tn<T> dx(Shape{n, d});
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < w; ++j) dx.at(i, begin + j) = go.at(i, j);
    gr.accumulate(ix, std::move(dx));
  });
}

template <typename T>
V<T> concat_rows(const std::vector<V<T>>& parts) {
  if (parts.empty()) throw ContractError("concat_rows needs at least one part");
  auto* g = parts.front().graph;
  const std::size_t d = parts.front().shape().at(1);
  std::size_t total = 0;
  std::vector<std::size_t> ids, rows;
  for (const auto& p : parts) {
    require_rank("concat_rows", p.shape(), 2);
    if (p.graph != g) throw ContractError("operands belong to different graphs");
    if (p.shape()[1] != d) mismatch("concat_rows", parts.front().shape(), p.shape());
    total += p.shape()[0];
    ids.push_back(p.id);
    rows.push_back(p.shape()[0]);
  }
  std::vector<T> data;
  data.reserve(total * d);
  for (const auto& p : parts) data.insert(data.end(), p.value().data().begin(), p.value().data().end());
  return g->record(Tn<T>(Shape{total, d}, std::move(data)), ids, [ids, rows, d](BasicGraph<T>& gr, const Tn<T>& go) {
    std::size_t offset = 0;
    for (std::size_t k = 0; k < ids.size(); ++k) {
      if (gr.requires_grad(ids[k])) {
        const auto first = go.data().begin() + offset * d;
        gr.accumulate(ids[k], Tn<T>(Shape{rows[k], d}, std::vector<T>(first, first + rows[k] * d)));
      }
      offset += rows[k];
    }
  });
}

template <typename T>
V<T> concat_cols(const std::vector<V<T>>& parts) {
  if (parts.empty()) throw ContractError("concat_cols needs at least one part");
  auto* g = parts.front().graph;
  const std::size_t n = parts.front().shape().at(0);
  std::size_t total = 0;
  std::vector<std::size_t> ids, cols;
  for (const auto& p : parts) {
    require_rank("concat_cols", p.shape(), 2);
    if (p.graph != g) throw ContractError("operands belong to different graphs");
    if (p.shape()[0] != n) mismatch("concat_cols", parts.front().shape(), p.shape());
    total += p.shape()[1];
    ids.push_back(p.id);
    cols.push_back(p.shape()[1]);
  }
  Tn<T> out(Shape{n, total});
  std::size_t offset = 0;
  for (const auto& p : parts) {
    const auto& pv = p.value();
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < pv.shape()[1]; ++j) out.at(i, offset + j) = pv.at(i, j);
    offset += pv.shape()[1];
  }
  return g->record(std::move(out), ids, [ids, cols, n](BasicGraph<T>& gr, const Tn<T>& go) {
    std::size_t off = 0;
    for (std::size_t k = 0; k < ids.size(); ++k) {
      if (gr.requires_grad(ids[k])) {
        Tn<T> part(Shape{n, cols[k]});
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t j = 0; j < cols[k]; ++j) part.at(i, j) = go.at(i, off + j);
        gr.accumulate(ids[k], std::move(part));
      }
      off += cols[k];
    }
  });
}

template <typename T>
V<T> gather_rows(V<T> x, const std::vector<std::size_t>& index) {
  require_rank("gather_rows", x.shape(), 2);
  const std::size_t n = x.shape()[0], d = x.shape()[1];
  if (index.empty()) throw DimensionError("gather_rows needs a non-empty index");
  Tn<T> out(Shape{index.size(), d});
  const auto& xv = x.value();
  for (std::size_t i = 0; i < index.size(); ++i) {
    if (index[i] >= n) throw DimensionError("gather_rows index out of range for " + shape_string(x.shape()));
    for (std::size_t j = 0; j < d; ++j) out.at(i, j) = xv.at(index[i], j);
  }
  const std::size_t ix = x.id;
  return x.graph->record(std::move(out), {ix}, [ix, n, d, index](BasicGraph<T>& gr, const Tn<T>& go) {
    Tn<T> dx(Shape{n, d});
    for (std::size_t i = 0; i < index.size(); ++i)
      for (std::size_t j = 0; j < d; ++j) dx.at(index[i], j) += go.at(i, j);
    gr.accumulate(ix, std::move(dx));
  });
}

template <typename T>
V<T> conv2d(V<T> x, V<T> weight, V<T> bias, std::size_t stride, std::size_t pad) {
  auto& g = same_graph(x, weight);
  same_graph(x, bias);
  const auto& xs = x.shape();
  const auto& ws = weight.shape();
  require_rank("conv2d(input)", xs, 3);
  require_rank("conv2d(weight)", ws, 4);
  if (ws[1] != xs[0] || ws[2] != ws[3]) mismatch("conv2d", xs, ws);
  if (bias.shape() != Shape{ws[0]}) mismatch("conv2d(bias)", ws, bias.shape());
  if (stride == 0) throw ContractError("conv2d stride must be positive");
  if (xs[1] + 2 * pad < ws[2] || xs[2] + 2 * pad < ws[3]) mismatch("conv2d", xs, ws);
  const kernels::Conv2dGeometry geo{xs[0], xs[1], xs[2], ws[0], ws[2], stride, pad};
  Tn<T> out(Shape{geo.out_channels, geo.out_h(), geo.out_w()});
  kernels::conv2d_forward<T>(geo, x.value().data(), weight.value().data(), bias.value().data(), out.data());
  const std::size_t ix = x.id, iw = weight.id, ib = bias.id;
  return g.record(std::move(out), {ix, iw, ib}, [ix, iw, ib, geo](BasicGraph<T>& gr, const Tn<T>& go) {
    if (gr.requires_grad(iw) || gr.requires_grad(ib)) {
      Tn<T> dw(gr.value(iw).shape());
      Tn<T> db(gr.value(ib).shape());
      kernels::conv2d_backward_weight<T>(geo, gr.value(ix).data(), go.data(), dw.data(), db.data());
      gr.accumulate(iw, std::move(dw));
      gr.accumulate(ib, std::move(db));
    }
    if (gr.requires_grad(ix)) {
      Tn<T> dx(gr.value(ix).shape());
      kernels::conv2d_backward_input<T>(geo, gr.value(iw).data(), go.data(), dx.data());
      gr.accumulate(ix, std::move(dx));
    }
  });
}

template <typename T>
V<T> upsample_nearest(V<T> x, std::size_t factor) {
  require_rank("upsample_nearest", x.shape(), 3);
  if (factor == 0) throw ContractError("upsample factor must be positive");
  const std::size_t c = x.shape()[0], h = x.shape()[1], w = x.shape()[2];
  const std::size_t oh = h * factor, ow = w * factor;
  Tn<T> out(Shape{c, oh, ow});
  const auto xv = x.value().data();
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t y = 0; y < oh; ++y)
      for (std::size_t xx = 0; xx < ow; ++xx)
        out[(ch * oh + y) * ow + xx] = xv[(ch * h + y / factor) * w + xx / factor];
  const std::size_t ix = x.id;
  return x.graph->record(std::move(out), {ix}, [ix, c, h, w, factor](BasicGraph<T>& gr, const Tn<T>& go) {
    const std::size_t oh2 = h * factor, ow2 = w * factor;
    Tn<T> dx(Shape{c, h, w});
    for (std::size_t ch = 0; ch < c; ++ch)
      for (std::size_t y = 0; y < oh2; ++y)
        for (std::size_t xx = 0; xx < ow2; ++xx)
          dx[(ch * h + y / factor) * w + xx / factor] += go[(ch * oh2 + y) * ow2 + xx];
    gr.accumulate(ix, std::move(dx));
  });
}

namespace {
template <typename T>
void check_targets(const char* op, const Tn<T>& logits, const Tn<T>& targets) {
  if (logits.size() != targets.size()) mismatch(op, logits.shape(), targets.shape());
}
}  // namespace

template <typename T>
V<T> bce_with_logits(V<T> logits, const BasicTensor<T>& targets) {
  check_targets("bce_with_logits", logits.value(), targets);
  const auto z = logits.value().data();
  const auto t = targets.data();
  const T inv_n = T{1} / static_cast<T>(z.size());
  T total{0};
  for (std::size_t i = 0; i < z.size(); ++i) total += softplus(z[i]) - z[i] * t[i];
  const std::size_t il = logits.id;
  return logits.graph->record(Tn<T>::scalar(total * inv_n), {il},
                              [il, targets, inv_n](BasicGraph<T>& gr, const Tn<T>& go) {
                                const auto zz = gr.value(il).data();
                                Tn<T> dz(gr.value(il).shape());
                                for (std::size_t i = 0; i < zz.size(); ++i)
                                  dz[i] = go[0] * inv_n * (sigmoid_scalar(zz[i]) - targets[i]);
                                gr.accumulate(il, std::move(dz));
                              });
}

template <typename T>
V<T> dice_loss(V<T> logits, const BasicTensor<T>& targets, T smooth) {
  check_targets("dice_loss", logits.value(), targets);
  const auto z = logits.value().data();
  T inter{0}, total{0};
  for (std::size_t i = 0; i < z.size(); ++i) {
    const T p = sigmoid_scalar(z[i]);
    inter += p * targets[i];
    total += p + targets[i];
  }
  const T loss = T{1} - (T{2} * inter + smooth) / (total + smooth);
  const std::size_t il = logits.id;
  return logits.graph->record(
      Tn<T>::scalar(loss), {il}, [il, targets, smooth, inter, total](BasicGraph<T>& gr, const Tn<T>& go) {
        const auto zz = gr.value(il).data();
        const T denom = total + smooth;
        const T numer = T{2} * inter + smooth;
        Tn<T> dz(gr.value(il).shape());
        for (std::size_t i = 0; i < zz.size(); ++i) {
          const T p = sigmoid_scalar(zz[i]);
          const T dp = -(T{2} * targets[i] * denom - numer) / (denom * denom);
          dz[i] = go[0] * dp * p * (T{1} - p);
        }
        gr.accumulate(il, std::move(dz));
      });
}

template <typename T>
V<T> focal_loss(V<T> logits, const BasicTensor<T>& targets, T gamma) {
  check_targets("focal_loss", logits.value(), targets);
  const auto z = logits.value().data();
  const T inv_n = T{1} / static_cast<T>(z.size());
  T total{0};
  for (std::size_t i = 0; i < z.size(); ++i) {
    const T p = sigmoid_scalar(z[i]);
    const T log_p = -softplus(-z[i]);
    const T log_q = -softplus(z[i]);
    total += -targets[i] * std::pow(T{1} - p, gamma) * log_p - (T{1} - targets[i]) * std::pow(p, gamma) * log_q;
  }
  const std::size_t il = logits.id;
  return logits.graph->record(
      Tn<T>::scalar(total * inv_n), {il}, [il, targets, gamma, inv_n](BasicGraph<T>& gr, const Tn<T>& go) {
        const auto zz = gr.value(il).data();
        Tn<T> dz(gr.value(il).shape());
        for (std::size_t i = 0; i < zz.size(); ++i) {
          const T p = sigmoid_scalar(zz[i]);
          const T q = T{1} - p;
          const T log_p = -softplus(-zz[i]);
          const T log_q = -softplus(zz[i]);
          const T pos = -targets[i] * std::pow(q, gamma) * (q - gamma * p * log_p);
          const T neg = -(T{1} - targets[i]) * std::pow(p, gamma) * (gamma * q * log_q - p);
          dz[i] = go[0] * inv_n * (pos + neg);
        }
        gr.accumulate(il, std::move(dz));
      });
}

#define PFESTA_INSTANTIATE(T)                                                               \
  template V<T> matmul<T>(V<T>, V<T>);                                                      \
  template V<T> add<T>(V<T>, V<T>);                                                         \
  template V<T> sub<T>(V<T>, V<T>);                                                         \
  template V<T> mul<T>(V<T>, V<T>);                                                         \
  template V<T> scale<T>(V<T>, T);                                                          \
  template V<T> softmax<T>(V<T>, std::size_t);                                              \
  template V<T> layer_norm<T>(V<T>, V<T>, V<T>, T);                                         \
  template V<T> gelu<T>(V<T>);                                                              \
  template V<T> relu<T>(V<T>);                                                              \
  template V<T> sigmoid<T>(V<T>);                                                           \
  template V<T> reshape<T>(V<T>, Shape);                                                    \
  template V<T> transpose<T>(V<T>);                                                         \
  template V<T> sum<T>(V<T>);                                                               \
  template V<T> mean<T>(V<T>);                                                              \
  template V<T> mean_rows<T>(V<T>);                                                         \
  template V<T> slice_rows<T>(V<T>, std::size_t, std::size_t);                              \
  template V<T> slice_cols<T>(V<T>, std::size_t, std::size_t);                              \
  template V<T> concat_rows<T>(const std::vector<V<T>>&);                                   \
  template V<T> concat_cols<T>(const std::vector<V<T>>&);                                   \
  template V<T> gather_rows<T>(V<T>, const std::vector<std::size_t>&);                      \
  template V<T> conv2d<T>(V<T>, V<T>, V<T>, std::size_t, std::size_t);                      \
  template V<T> upsample_nearest<T>(V<T>, std::size_t);                                     \
  template V<T> bce_with_logits<T>(V<T>, const BasicTensor<T>&);                            \
  template V<T> dice_loss<T>(V<T>, const BasicTensor<T>&, T);                               \
  template V<T> focal_loss<T>(V<T>, const BasicTensor<T>&, T);

PFESTA_INSTANTIATE(float)
PFESTA_INSTANTIATE(double)
#undef PFESTA_INSTANTIATE

}  // namespace pfesta::ops
