#include "mlp_kernels.hpp"

#include <cmath>
#include <cstdint>
#include <cstring>

namespace selfeval::kernels {

namespace {

template <typename S>
struct Lanes {
  typedef S V __attribute__((vector_size(64)));
  static constexpr std::size_t width = 64 / sizeof(S);
  static constexpr std::size_t per_block = kColBlock / width;

  static V load(const S* p) {
    V v;
    std::memcpy(&v, p, sizeof(V));
    return v;
  }
  static void store(S* p, V v) { std::memcpy(p, &v, sizeof(V)); }
  static V splat(S x) { return V{} + x; }
};

}  // namespace

template <typename S>
void dense_forward(const DenseLayer<S>& layer, const S* in, std::size_t in_stride, std::size_t rows, S* out) {
  dense_forward_range(layer, in, in_stride, rows, out, 0, layer.in, true);
}

namespace {

// R rows by NV vectors of output columns, accumulators held in registers.
template <typename S, std::size_t R, std::size_t NV>
inline void micro_tile(const S* w, std::size_t P, const S* x, std::size_t in_stride, const S* bias, std::size_t k0,
                       std::size_t k1, S* out) {
  using L = Lanes<S>;
  using V = typename L::V;
  V acc[R][NV];
#pragma GCC unroll 16
  for (std::size_t b = 0; b < NV; ++b) {
    const V init = bias ? L::load(bias + b * L::width) : L::splat(S(0));
#pragma GCC unroll 16
    for (std::size_t r = 0; r < R; ++r) acc[r][b] = init;
  }
  for (std::size_t k = k0; k < k1; ++k) {
    V wk[NV];
#pragma GCC unroll 16
    for (std::size_t b = 0; b < NV; ++b) wk[b] = L::load(w + k * P + b * L::width);
#pragma GCC unroll 16
    for (std::size_t r = 0; r < R; ++r) {
      const V xr = L::splat(x[r * in_stride + k]);
#pragma GCC unroll 16
      for (std::size_t b = 0; b < NV; ++b) acc[r][b] += wk[b] * xr;
    }
  }
#pragma GCC unroll 16
  for (std::size_t r = 0; r < R; ++r) {
#pragma GCC unroll 16
    for (std::size_t b = 0; b < NV; ++b) L::store(out + r * P + b * L::width, acc[r][b]);
  }
}

}  // namespace

template <typename S>
void dense_forward_range(const DenseLayer<S>& layer, const S* in, std::size_t in_stride, std::size_t rows, S* out,
                         std::size_t k0, std::size_t k1, bool with_bias) {
  using L = Lanes<S>;
  constexpr std::size_t R = kRowBlock;
  constexpr std::size_t B = L::per_block;
  const std::size_t P = layer.out_padded;
  const S* w = layer.weights.data();

  for (std::size_t r0 = 0; r0 < rows; r0 += R) {
    const S* x = in + r0 * in_stride;
    std::size_t c0 = 0;
    for (; c0 + 2 * kColBlock <= P; c0 += 2 * kColBlock) {
      micro_tile<S, R, 2 * B>(w + c0, P, x, in_stride, with_bias ? layer.bias.data() + c0 : nullptr, k0, k1,
                              out + r0 * P + c0);
    }
    for (; c0 < P; c0 += kColBlock) {
      micro_tile<S, R, B>(w + c0, P, x, in_stride, with_bias ? layer.bias.data() + c0 : nullptr, k0, k1,
                          out + r0 * P + c0);
    }
  }
}

template <typename S>
void dense_backward(const DenseLayer<S>& layer, const S* in, std::size_t in_stride, std::size_t rows,
                    const S* dout, DenseLayer<S>& grad, S* din, std::size_t din_stride) {
  const std::size_t P = layer.out_padded;
  for (std::size_t r = 0; r < rows; ++r) {
    const S* d = dout + r * P;
    const S* x = in + r * in_stride;
    for (std::size_t o = 0; o < P; ++o) grad.bias[o] += d[o];
    for (std::size_t k = 0; k < layer.in; ++k) {
      const S xk = x[k];
      if (xk == S(0)) continue;
      S* g = grad.weights.data() + k * P;
#pragma omp simd
      for (std::size_t o = 0; o < P; ++o) g[o] += xk * d[o];
    }
    if (din) {
      S* out = din + r * din_stride;
      for (std::size_t k = 0; k < layer.in; ++k) {
        const S* wk = layer.weights.data() + k * P;
        S acc = 0;
#pragma omp simd reduction(+ : acc)
        for (std::size_t o = 0; o < P; ++o) acc += wk[o] * d[o];
        out[k] = acc;
      }
    }
  }
}

namespace {

// expf to about 2 ulp: x = n ln2 + r, degree-6 polynomial in r, scale by 2^n.
inline float exp_poly(float x) {
  x = x < -87.0f ? -87.0f : (x > 88.0f ? 88.0f : x);
  const float n = __builtin_roundevenf(x * 1.44269504088896341f);
  const float r = (x - n * 0.693145751953125f) - n * 1.428606765330187045e-06f;
  float p = 1.3981999507e-3f;
  p = p * r + 8.3334519073e-3f;
  p = p * r + 4.1665795894e-2f;
  p = p * r + 1.6666665459e-1f;
  p = p * r + 5.0000001201e-1f;
  p = p * r * r + r + 1.0f;
  const std::int32_t bits = (static_cast<std::int32_t>(n) + 127) << 23;
  float scale;
  std::memcpy(&scale, &bits, sizeof(scale));
  return p * scale;
}

inline float exp_act(float x) { return exp_poly(x); }
inline double exp_act(double x) { return std::exp(x); }

}  // namespace

template <typename S>
void silu_forward(const S* pre, S* post, std::size_t n) {
#pragma omp simd
  for (std::size_t i = 0; i < n; ++i) post[i] = pre[i] / (S(1) + exp_act(-pre[i]));
}

template <typename S>
void silu_backward(const S* pre, S* d, std::size_t n) {
#pragma omp simd
  for (std::size_t i = 0; i < n; ++i) {
    const S s = S(1) / (S(1) + exp_act(-pre[i]));
    d[i] *= s * (S(1) + pre[i] * (S(1) - s));
  }
}

template void dense_forward<float>(const DenseLayer<float>&, const float*, std::size_t, std::size_t, float*);
template void dense_forward<double>(const DenseLayer<double>&, const double*, std::size_t, std::size_t, double*);
template void dense_forward_range<float>(const DenseLayer<float>&, const float*, std::size_t, std::size_t, float*,
                                         std::size_t, std::size_t, bool);
template void dense_forward_range<double>(const DenseLayer<double>&, const double*, std::size_t, std::size_t,
                                          double*, std::size_t, std::size_t, bool);
template void dense_backward<float>(const DenseLayer<float>&, const float*, std::size_t, std::size_t, const float*,
                                    DenseLayer<float>&, float*, std::size_t);
template void dense_backward<double>(const DenseLayer<double>&, const double*, std::size_t, std::size_t,
                                     const double*, DenseLayer<double>&, double*, std::size_t);
template void silu_forward<float>(const float*, float*, std::size_t);
template void silu_forward<double>(const double*, double*, std::size_t);
template void silu_backward<float>(const float*, float*, std::size_t);
template void silu_backward<double>(const double*, double*, std::size_t);

}  // namespace selfeval::kernels
