#pragma once

#include <cstddef>

#include "selfeval/mlp.hpp"

namespace selfeval::kernels {

// out[r, :] = bias + in[r, :in] * W; rows must be a multiple of kRowBlock,
// out has stride layer.out_padded.
template <typename S>
void dense_forward(const DenseLayer<S>& layer, const S* in, std::size_t in_stride, std::size_t rows, S* out);

// Partial product over input columns [k0, k1) only; `in` points at column 0.
// Accumulation starts from the bias when with_bias, else from zero.
template <typename S>
void dense_forward_range(const DenseLayer<S>& layer, const S* in, std::size_t in_stride, std::size_t rows, S* out,
                         std::size_t k0, std::size_t k1, bool with_bias);

// grad.weights += in^T * dout, grad.bias += colsum(dout), and, when din is
// non-null, din = dout * W^T (stride din_stride).
template <typename S>
void dense_backward(const DenseLayer<S>& layer, const S* in, std::size_t in_stride, std::size_t rows,
                    const S* dout, DenseLayer<S>& grad, S* din, std::size_t din_stride);

// In place: pre -> silu(pre) written to post.
template <typename S>
void silu_forward(const S* pre, S* post, std::size_t n);

// d <- d * silu'(pre).
template <typename S>
void silu_backward(const S* pre, S* d, std::size_t n);

}  // namespace selfeval::kernels
