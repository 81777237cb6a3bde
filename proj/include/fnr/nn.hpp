#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "fnr/parallel.hpp"
#include "fnr/tensor.hpp"

namespace fnr {

enum class PadMode { Zero, Replicate };

namespace detail {

// Scalar fallback for tile tails: C[M,N] += A_eff * B with A either [M,K]
// (row-major) or [K,M] (transposed access).
template <typename T, bool TransA>
void mm_tail(const T* a, const T* b, T* c, std::int64_t m0, std::int64_t m1, std::int64_t k_dim,
             std::int64_t n0, std::int64_t n1, std::int64_t n_dim, std::int64_t m_dim) {
    for (std::int64_t m = m0; m < m1; ++m) {
        T* crow = c + m * n_dim;
        for (std::int64_t k = 0; k < k_dim; ++k) {
            const T av = TransA ? a[k * m_dim + m] : a[m * k_dim + k];
            const T* brow = b + k * n_dim;
            for (std::int64_t n = n0; n < n1; ++n) {
                crow[n] += av * brow[n];
            }
        }
    }
}

// One MR x NR tile of C accumulated in registers across the whole k loop.
template <typename T, bool TransA, int MR, int NR>
void mm_tile(const T* a, const T* b, T* c, std::int64_t m0, std::int64_t n0, std::int64_t m_dim,
             std::int64_t k_dim, std::int64_t n_dim) {
    T acc[MR][NR];
    for (int mi = 0; mi < MR; ++mi) {
        for (int ni = 0; ni < NR; ++ni) {
            acc[mi][ni] = c[(m0 + mi) * n_dim + n0 + ni];
        }
    }
    for (std::int64_t k = 0; k < k_dim; ++k) {
        const T* brow = b + k * n_dim + n0;
        for (int mi = 0; mi < MR; ++mi) {
            const T av = TransA ? a[k * m_dim + m0 + mi] : a[(m0 + mi) * k_dim + k];
            for (int ni = 0; ni < NR; ++ni) {
                acc[mi][ni] += av * brow[ni];
            }
        }
    }
    for (int mi = 0; mi < MR; ++mi) {
        for (int ni = 0; ni < NR; ++ni) {
            c[(m0 + mi) * n_dim + n0 + ni] = acc[mi][ni];
        }
    }
}

// Register-blocked kernel: 4x32 main tiles with 4x8, 1x32, 1x8 edge tiles and
// a scalar remainder. Per-element accumulation stays in ascending k order, so
// results match the scalar path bitwise (modulo FMA contraction, which is
// fixed per build).
template <typename T, bool TransA>
void mm_blocked(const T* a, const T* b, T* c, std::int64_t m_dim, std::int64_t k_dim,
                std::int64_t n_dim) {
    std::int64_t m0 = 0;
    for (; m0 + 4 <= m_dim; m0 += 4) {
        std::int64_t n0 = 0;
        for (; n0 + 32 <= n_dim; n0 += 32) {
            mm_tile<T, TransA, 4, 32>(a, b, c, m0, n0, m_dim, k_dim, n_dim);
        }
        for (; n0 + 8 <= n_dim; n0 += 8) {
            mm_tile<T, TransA, 4, 8>(a, b, c, m0, n0, m_dim, k_dim, n_dim);
        }
        if (n0 < n_dim) {
            mm_tail<T, TransA>(a, b, c, m0, m0 + 4, k_dim, n0, n_dim, n_dim, m_dim);
        }
    }
    for (; m0 < m_dim; ++m0) {
        std::int64_t n0 = 0;
        for (; n0 + 32 <= n_dim; n0 += 32) {
            mm_tile<T, TransA, 1, 32>(a, b, c, m0, n0, m_dim, k_dim, n_dim);
        }
        for (; n0 + 8 <= n_dim; n0 += 8) {
            mm_tile<T, TransA, 1, 8>(a, b, c, m0, n0, m_dim, k_dim, n_dim);
        }
        if (n0 < n_dim) {
            mm_tail<T, TransA>(a, b, c, m0, m0 + 1, k_dim, n0, n_dim, n_dim, m_dim);
        }
    }
}

// C[M,N] += A[M,K] * B[K,N]
template <typename T>
void mm_nn(const T* a, const T* b, T* c, std::int64_t m_dim, std::int64_t k_dim, std::int64_t n_dim) {
    mm_blocked<T, false>(a, b, c, m_dim, k_dim, n_dim);
}

// C[M,N] += A^T * B where A is stored [K,M]
template <typename T>
void mm_tn(const T* a, const T* b, T* c, std::int64_t m_dim, std::int64_t k_dim, std::int64_t n_dim) {
    mm_blocked<T, true>(a, b, c, m_dim, k_dim, n_dim);
}

// C[M,N] += A * B^T where B is stored [N,K]. Rows of both operands are
// contiguous, so each output is a lane-accumulated dot product; the lane
// layout is fixed, keeping results deterministic per build.
template <typename T>
void mm_nt(const T* a, const T* b, T* c, std::int64_t m_dim, std::int64_t k_dim, std::int64_t n_dim) {
    constexpr int kLanes = 16;
    for (std::int64_t m = 0; m < m_dim; ++m) {
        const T* arow = a + m * k_dim;
        T* crow = c + m * n_dim;
        for (std::int64_t n = 0; n < n_dim; ++n) {
            const T* brow = b + n * k_dim;
            T lanes[kLanes] = {};
            std::int64_t k = 0;
            for (; k + kLanes <= k_dim; k += kLanes) {
                for (int l = 0; l < kLanes; ++l) {
                    lanes[l] += arow[k + l] * brow[k + l];
                }
            }
            T acc = T(0);
            for (int l = 0; l < kLanes; ++l) {
                acc += lanes[l];
            }
            for (; k < k_dim; ++k) {
                acc += arow[k] * brow[k];
            }
            crow[n] += acc;
        }
    }
}

// Per-thread scratch for im2col columns; persists across calls thanks to the
// pool's long-lived workers.
template <typename T>
T* conv_scratch(std::int64_t n) {
    thread_local std::vector<T> buf;
    if (static_cast<std::int64_t>(buf.size()) < n) {
        buf.resize(static_cast<std::size_t>(n));
    }
    return buf.data();
}

// Valid output range [lo, hi) for which ow*stride - pad + kw lands inside
// [0, w).
inline void conv_valid_range(std::int64_t kw, std::int64_t stride, std::int64_t pad, std::int64_t w,
                             std::int64_t out_w, std::int64_t& lo, std::int64_t& hi) {
    const std::int64_t offset = kw - pad;
    lo = offset >= 0 ? 0 : (-offset + stride - 1) / stride;
    // largest ow with offset + ow*stride <= w-1
    hi = offset > w - 1 ? 0 : (w - 1 - offset) / stride + 1;
    lo = std::min(lo, out_w);
    hi = std::clamp<std::int64_t>(hi, lo, out_w);
}

// Gathers convolution patches: cols[(c*K+kh)*K+kw][oh*OW+ow] =
// src[c, oh*stride - pad + kh, ow*stride - pad + kw]. Border handling is
// hoisted out of the inner loops.
template <typename T>
void im2col(const T* src, std::int64_t channels, std::int64_t h, std::int64_t w, std::int64_t k,
            std::int64_t stride, std::int64_t pad, PadMode mode, std::int64_t out_h, std::int64_t out_w,
            T* cols) {
    const bool replicate = mode == PadMode::Replicate;
    for (std::int64_t c = 0; c < channels; ++c) {
        const T* plane = src + c * h * w;
        for (std::int64_t kh = 0; kh < k; ++kh) {
            for (std::int64_t kw = 0; kw < k; ++kw) {
                T* dst = cols + ((c * k + kh) * k + kw) * out_h * out_w;
                std::int64_t lo, hi;
                conv_valid_range(kw, stride, pad, w, out_w, lo, hi);
                for (std::int64_t oh = 0; oh < out_h; ++oh) {
                    std::int64_t ih = oh * stride - pad + kh;
                    if (replicate) {
                        ih = std::clamp<std::int64_t>(ih, 0, h - 1);
                    }
                    T* out_row = dst + oh * out_w;
                    if (ih < 0 || ih >= h) {
                        std::fill_n(out_row, out_w, T(0));
                        continue;
                    }
                    const T* row = plane + ih * w;
                    if (replicate) {
                        std::fill_n(out_row, lo, row[0]);
                        std::fill(out_row + hi, out_row + out_w, row[w - 1]);
                    } else {
                        std::fill_n(out_row, lo, T(0));
                        std::fill(out_row + hi, out_row + out_w, T(0));
                    }
                    const T* in = row + lo * stride - pad + kw;
                    if (stride == 1) {
                        std::copy_n(in, hi - lo, out_row + lo);
                    } else {
                        for (std::int64_t ow = lo; ow < hi; ++ow, in += stride) {
                            out_row[ow] = *in;
                        }
                    }
                }
            }
        }
    }
}

// Transposed gather: cols_t[oh*OW+ow][(c*K+kh)*K+kw] = the same patch values,
// laid out pixel-major for the weight-gradient product.
template <typename T>
void im2col_t(const T* src, std::int64_t channels, std::int64_t h, std::int64_t w, std::int64_t k,
              std::int64_t stride, std::int64_t pad, PadMode mode, std::int64_t out_h,
              std::int64_t out_w, T* cols_t) {
    const bool replicate = mode == PadMode::Replicate;
    const std::int64_t fan_in = channels * k * k;
    for (std::int64_t oh = 0; oh < out_h; ++oh) {
        for (std::int64_t ow = 0; ow < out_w; ++ow) {
            T* dst = cols_t + (oh * out_w + ow) * fan_in;
            for (std::int64_t c = 0; c < channels; ++c) {
                const T* plane = src + c * h * w;
                for (std::int64_t kh = 0; kh < k; ++kh) {
                    std::int64_t ih = oh * stride - pad + kh;
                    if (replicate) {
                        ih = std::clamp<std::int64_t>(ih, 0, h - 1);
                    }
                    if (ih < 0 || ih >= h) {
                        std::fill_n(dst + (c * k + kh) * k, k, T(0));
                        continue;
                    }
                    const T* row = plane + ih * w;
                    for (std::int64_t kw = 0; kw < k; ++kw) {
                        std::int64_t iw = ow * stride - pad + kw;
                        if (replicate) {
                            iw = std::clamp<std::int64_t>(iw, 0, w - 1);
                        }
                        dst[(c * k + kh) * k + kw] = (iw >= 0 && iw < w) ? row[iw] : T(0);
                    }
                }
            }
        }
    }
}

// Adjoint of im2col: scatter-adds columns back into the image.
template <typename T>
void col2im_add(const T* cols, std::int64_t channels, std::int64_t h, std::int64_t w, std::int64_t k,
                std::int64_t stride, std::int64_t pad, PadMode mode, std::int64_t out_h, std::int64_t out_w,
                T* dst) {
    const bool replicate = mode == PadMode::Replicate;
    for (std::int64_t c = 0; c < channels; ++c) {
        T* plane = dst + c * h * w;
        for (std::int64_t kh = 0; kh < k; ++kh) {
            for (std::int64_t kw = 0; kw < k; ++kw) {
                const T* col = cols + ((c * k + kh) * k + kw) * out_h * out_w;
                std::int64_t lo, hi;
                conv_valid_range(kw, stride, pad, w, out_w, lo, hi);
                for (std::int64_t oh = 0; oh < out_h; ++oh) {
                    std::int64_t ih = oh * stride - pad + kh;
                    if (replicate) {
                        ih = std::clamp<std::int64_t>(ih, 0, h - 1);
                    }
                    if (ih < 0 || ih >= h) {
                        continue;
                    }
                    T* row = plane + ih * w;
                    const T* col_row = col + oh * out_w;
                    if (replicate) {
                        for (std::int64_t ow = 0; ow < lo; ++ow) {
                            row[0] += col_row[ow];
                        }
                        for (std::int64_t ow = hi; ow < out_w; ++ow) {
                            row[w - 1] += col_row[ow];
                        }
                    }
                    T* out = row + lo * stride - pad + kw;
                    if (stride == 1) {
                        for (std::int64_t ow = lo; ow < hi; ++ow) {
                            out[ow - lo] += col_row[ow];
                        }
                    } else {
                        for (std::int64_t ow = lo; ow < hi; ++ow, out += stride) {
                            *out += col_row[ow];
                        }
                    }
                }
            }
        }
    }
}

} // namespace detail

// 2D convolution. x: [B,Ci,H,W], w: [Co,Ci,K,K] (K odd), optional bias [Co].
template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& bias, std::int64_t stride,
                 std::int64_t padding, PadMode pad_mode = PadMode::Zero) {
    if (x.ndim() != 4 || w.ndim() != 4) {
        throw ShapeError("conv2d: expected rank-4 input and weight, got " + shape_to_string(x.shape()) +
                         " and " + shape_to_string(w.shape()));
    }
    const std::int64_t batch = x.dim(0), c_in = x.dim(1), h = x.dim(2), width = x.dim(3);
    const std::int64_t c_out = w.dim(0), k = w.dim(2);
    if (w.dim(1) != c_in) {
        throw ShapeError("conv2d: input channels " + std::to_string(c_in) + " do not match weight fan-in " +
                         std::to_string(w.dim(1)));
    }
    if (w.dim(3) != k || k % 2 == 0) {
        throw ShapeError("conv2d: kernel must be square with odd size, got " + shape_to_string(w.shape()));
    }
    if (h + 2 * padding < k || width + 2 * padding < k) {
        throw ShapeError("conv2d: padded spatial size smaller than kernel");
    }
    if (stride < 1 || padding < 0) {
        throw ShapeError("conv2d: invalid stride/padding");
    }
    if (bias.defined() && (bias.ndim() != 1 || bias.dim(0) != c_out)) {
        throw ShapeError("conv2d: bias shape must be [" + std::to_string(c_out) + "]");
    }
    const std::int64_t out_h = (h + 2 * padding - k) / stride + 1;
    const std::int64_t out_w = (width + 2 * padding - k) / stride + 1;
    const std::int64_t fan_in = c_in * k * k;
    const std::int64_t out_hw = out_h * out_w;

    // 1x1 stride-1 kernels skip the im2col gather entirely.
    const bool pointwise = (k == 1 && stride == 1 && padding == 0);

    std::vector<T> out(static_cast<std::size_t>(batch * c_out * out_hw), T(0));
    const T* xv = x.values().data();
    const T* wv = w.values().data();
    const T* bv = bias.defined() ? bias.values().data() : nullptr;
    parallel_for(batch, [&](std::int64_t n) {
        T* out_n = out.data() + n * c_out * out_hw;
        if (bv) {
            for (std::int64_t co = 0; co < c_out; ++co) {
                std::fill_n(out_n + co * out_hw, out_hw, bv[co]);
            }
        }
        if (pointwise) {
            detail::mm_nn(wv, xv + n * c_in * h * width, out_n, c_out, fan_in, out_hw);
            return;
        }
        T* cols = detail::conv_scratch<T>(fan_in * out_hw);
        detail::im2col(xv + n * c_in * h * width, c_in, h, width, k, stride, padding, pad_mode, out_h, out_w,
                       cols);
        detail::mm_nn(wv, cols, out_n, c_out, fan_in, out_hw);
    });

    std::vector<Tensor<T>> parents = {x, w};
    if (bias.defined()) {
        parents.push_back(bias);
    }
    auto xn = x.node();
    auto wn = w.node();
    auto bn = bias.defined() ? bias.node() : detail::NodePtr<T>();
    return detail::make_op<T>(
        {batch, c_out, out_h, out_w}, std::move(out), std::move(parents),
        [xn, wn, bn, batch, c_in, h, width, c_out, k, stride, padding, pad_mode, out_h, out_w, fan_in,
         out_hw, pointwise](detail::Node<T>& self) {
            const T* g = self.grad.data();
            if (xn->requires_grad) {
                xn->ensure_grad();
                const T* wv = wn->value.data();
                parallel_for(batch, [&](std::int64_t n) {
                    if (pointwise) {
                        detail::mm_tn(wv, g + n * c_out * out_hw,
                                      xn->grad.data() + n * c_in * h * width, fan_in, c_out, out_hw);
                        return;
                    }
                    T* dcols = detail::conv_scratch<T>(fan_in * out_hw);
                    std::fill_n(dcols, fan_in * out_hw, T(0));
                    detail::mm_tn(wv, g + n * c_out * out_hw, dcols, fan_in, c_out, out_hw);
                    detail::col2im_add(dcols, c_in, h, width, k, stride, padding, pad_mode, out_h,
                                       out_w, xn->grad.data() + n * c_in * h * width);
                });
            }
            if (wn->requires_grad) {
                wn->ensure_grad();
                const std::int64_t w_size = wn->numel();
                // Per-item partials keep the reduction order fixed no matter
                // how the items are scheduled across threads.
                std::vector<T> partial(static_cast<std::size_t>(batch * w_size), T(0));
                parallel_for(batch, [&](std::int64_t n) {
                    T* dw = partial.data() + n * w_size;
                    if (pointwise) {
                        detail::mm_nt(g + n * c_out * out_hw, xn->value.data() + n * c_in * h * width,
                                      dw, c_out, out_hw, fan_in);
                        return;
                    }
                    T* cols_t = detail::conv_scratch<T>(fan_in * out_hw);
                    detail::im2col_t(xn->value.data() + n * c_in * h * width, c_in, h, width, k, stride,
                                     padding, pad_mode, out_h, out_w, cols_t);
                    detail::mm_nn(g + n * c_out * out_hw, cols_t, dw, c_out, out_hw, fan_in);
                });
                for (std::int64_t n = 0; n < batch; ++n) {
                    const T* dw = partial.data() + n * w_size;
                    for (std::int64_t i = 0; i < w_size; ++i) {
                        wn->grad[i] += dw[i];
                    }
                }
            }
            if (bn && bn->requires_grad) {
                bn->ensure_grad();
                for (std::int64_t n = 0; n < batch; ++n) {
                    for (std::int64_t co = 0; co < c_out; ++co) {
                        const T* row = g + (n * c_out + co) * out_hw;
                        T acc = T(0);
                        for (std::int64_t i = 0; i < out_hw; ++i) {
                            acc += row[i];
                        }
                        bn->grad[co] += acc;
                    }
                }
            }
        });
}

// Transposed convolution. x: [B,Ci,H,W], w: [Ci,Co,K,K], optional bias [Co].
// Forward equals the input-gradient of conv2d with the same weight buffer.
template <typename T>
Tensor<T> conv_transpose2d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& bias,
                           std::int64_t stride, std::int64_t padding) {
    if (x.ndim() != 4 || w.ndim() != 4) {
        throw ShapeError("conv_transpose2d: expected rank-4 input and weight");
    }
    const std::int64_t batch = x.dim(0), c_in = x.dim(1), h = x.dim(2), width = x.dim(3);
    const std::int64_t c_out = w.dim(1), k = w.dim(2);
    if (w.dim(0) != c_in) {
        throw ShapeError("conv_transpose2d: input channels " + std::to_string(c_in) +
                         " do not match weight shape " + shape_to_string(w.shape()));
    }
    if (w.dim(3) != k) {
        throw ShapeError("conv_transpose2d: kernel must be square");
    }
    if (stride != 1 && stride != 2) {
        throw ShapeError("conv_transpose2d: stride must be 1 or 2");
    }
    if (bias.defined() && (bias.ndim() != 1 || bias.dim(0) != c_out)) {
        throw ShapeError("conv_transpose2d: bias shape must be [" + std::to_string(c_out) + "]");
    }
    const std::int64_t out_h = (h - 1) * stride - 2 * padding + k;
    const std::int64_t out_w = (width - 1) * stride - 2 * padding + k;
    if (out_h <= 0 || out_w <= 0) {
        throw ShapeError("conv_transpose2d: non-positive output size");
    }
    const std::int64_t col_rows = c_out * k * k;
    const std::int64_t in_hw = h * width;

    std::vector<T> out(static_cast<std::size_t>(batch * c_out * out_h * out_w), T(0));
    const T* xv = x.values().data();
    const T* wv = w.values().data();
    const T* bv = bias.defined() ? bias.values().data() : nullptr;
    parallel_for(batch, [&](std::int64_t n) {
        T* cols = detail::conv_scratch<T>(col_rows * in_hw);
        std::fill_n(cols, col_rows * in_hw, T(0));
        detail::mm_tn(wv, xv + n * c_in * in_hw, cols, col_rows, c_in, in_hw);
        T* out_n = out.data() + n * c_out * out_h * out_w;
        detail::col2im_add(cols, c_out, out_h, out_w, k, stride, padding, PadMode::Zero, h, width,
                           out_n);
        if (bv) {
            for (std::int64_t co = 0; co < c_out; ++co) {
                T* plane = out_n + co * out_h * out_w;
                for (std::int64_t i = 0; i < out_h * out_w; ++i) {
                    plane[i] += bv[co];
                }
            }
        }
    });

    std::vector<Tensor<T>> parents = {x, w};
    if (bias.defined()) {
        parents.push_back(bias);
    }
    auto xn = x.node();
    auto wn = w.node();
    auto bn = bias.defined() ? bias.node() : detail::NodePtr<T>();
    return detail::make_op<T>(
        {batch, c_out, out_h, out_w}, std::move(out), std::move(parents),
        [xn, wn, bn, batch, c_in, h, width, c_out, k, stride, padding, out_h, out_w, col_rows,
         in_hw](detail::Node<T>& self) {
            const T* g = self.grad.data();
            if (xn->requires_grad) {
                xn->ensure_grad();
                const T* wv = wn->value.data();
                parallel_for(batch, [&](std::int64_t n) {
                    T* dcols = detail::conv_scratch<T>(col_rows * in_hw);
                    detail::im2col(g + n * c_out * out_h * out_w, c_out, out_h, out_w, k, stride, padding,
                                   PadMode::Zero, h, width, dcols);
                    detail::mm_nn(wv, dcols, xn->grad.data() + n * c_in * in_hw, c_in, col_rows,
                                  in_hw);
                });
            }
            if (wn->requires_grad) {
                wn->ensure_grad();
                const std::int64_t w_size = wn->numel();
                std::vector<T> partial(static_cast<std::size_t>(batch * w_size), T(0));
                parallel_for(batch, [&](std::int64_t n) {
                    T* dcols_t = detail::conv_scratch<T>(col_rows * in_hw);
                    detail::im2col_t(g + n * c_out * out_h * out_w, c_out, out_h, out_w, k, stride,
                                     padding, PadMode::Zero, h, width, dcols_t);
                    detail::mm_nn(xn->value.data() + n * c_in * in_hw, dcols_t,
                                  partial.data() + n * w_size, c_in, in_hw, col_rows);
                });
                for (std::int64_t n = 0; n < batch; ++n) {
                    const T* dw = partial.data() + n * w_size;
                    for (std::int64_t i = 0; i < w_size; ++i) {
                        wn->grad[i] += dw[i];
                    }
                }
            }
            if (bn && bn->requires_grad) {
                bn->ensure_grad();
                for (std::int64_t n = 0; n < batch; ++n) {
                    for (std::int64_t co = 0; co < c_out; ++co) {
                        const T* plane = g + (n * c_out + co) * out_h * out_w;
                        T acc = T(0);
                        for (std::int64_t i = 0; i < out_h * out_w; ++i) {
                            acc += plane[i];
                        }
                        bn->grad[co] += acc;
                    }
                }
            }
        });
}

// Fully connected layer. input: [B,Din], weight: [Dout,Din], bias: [Dout].
template <typename T>
Tensor<T> linear(const Tensor<T>& input, const Tensor<T>& weight, const Tensor<T>& bias) {
    if (input.ndim() != 2 || weight.ndim() != 2) {
        throw ShapeError("linear: expected rank-2 input and weight");
    }
    const std::int64_t batch = input.dim(0), d_in = input.dim(1), d_out = weight.dim(0);
    if (weight.dim(1) != d_in) {
        throw ShapeError("linear: weight fan-in " + std::to_string(weight.dim(1)) +
                         " does not match input width " + std::to_string(d_in));
    }
    if (bias.defined() && (bias.ndim() != 1 || bias.dim(0) != d_out)) {
        throw ShapeError("linear: bias shape must be [" + std::to_string(d_out) + "]");
    }
    std::vector<T> out(static_cast<std::size_t>(batch * d_out), T(0));
    detail::mm_nt(input.values().data(), weight.values().data(), out.data(), batch, d_in, d_out);
    if (bias.defined()) {
        const T* bv = bias.values().data();
        for (std::int64_t n = 0; n < batch; ++n) {
            for (std::int64_t o = 0; o < d_out; ++o) {
                out[n * d_out + o] += bv[o];
            }
        }
    }
    std::vector<Tensor<T>> parents = {input, weight};
    if (bias.defined()) {
        parents.push_back(bias);
    }
    auto in_n = input.node();
    auto wn = weight.node();
    auto bn = bias.defined() ? bias.node() : detail::NodePtr<T>();
    return detail::make_op<T>({batch, d_out}, std::move(out), std::move(parents),
                              [in_n, wn, bn, batch, d_in, d_out](detail::Node<T>& self) {
                                  const T* g = self.grad.data();
                                  if (in_n->requires_grad) {
                                      in_n->ensure_grad();
                                      detail::mm_nn(g, wn->value.data(), in_n->grad.data(), batch, d_out,
                                                    d_in);
                                  }
                                  if (wn->requires_grad) {
                                      wn->ensure_grad();
                                      detail::mm_tn(g, in_n->value.data(), wn->grad.data(), d_out, batch,
                                                    d_in);
                                  }
                                  if (bn && bn->requires_grad) {
                                      bn->ensure_grad();
                                      for (std::int64_t n = 0; n < batch; ++n) {
                                          for (std::int64_t o = 0; o < d_out; ++o) {
                                              bn->grad[o] += g[n * d_out + o];
                                          }
                                      }
                                  }
                              });
}

// Batched matrix multiply with optional operand transposes.
// a: [B,p,q], b: [B,r,s]; effective factors must agree on the inner dim.
template <typename T>
Tensor<T> bmm(const Tensor<T>& a, const Tensor<T>& b, bool trans_a, bool trans_b) {
    if (a.ndim() != 3 || b.ndim() != 3 || a.dim(0) != b.dim(0)) {
        throw ShapeError("bmm: expected rank-3 tensors with matching batch");
    }
    const std::int64_t batch = a.dim(0);
    const std::int64_t m = trans_a ? a.dim(2) : a.dim(1);
    const std::int64_t ka = trans_a ? a.dim(1) : a.dim(2);
    const std::int64_t kb = trans_b ? b.dim(2) : b.dim(1);
    const std::int64_t n = trans_b ? b.dim(1) : b.dim(2);
    if (ka != kb) {
        throw ShapeError("bmm: inner dimensions disagree: " + std::to_string(ka) + " vs " +
                         std::to_string(kb));
    }
    const std::int64_t a_stride = a.dim(1) * a.dim(2);
    const std::int64_t b_stride = b.dim(1) * b.dim(2);
    const std::int64_t c_stride = m * n;
    std::vector<T> out(static_cast<std::size_t>(batch * c_stride), T(0));
    const T* av = a.values().data();
    const T* bv = b.values().data();
    parallel_for(batch, [&](std::int64_t i) {
        const T* ai = av + i * a_stride;
        const T* bi = bv + i * b_stride;
        T* ci = out.data() + i * c_stride;
        if (!trans_a && !trans_b) {
            detail::mm_nn(ai, bi, ci, m, ka, n);
        } else if (trans_a && !trans_b) {
            detail::mm_tn(ai, bi, ci, m, ka, n);
        } else if (!trans_a && trans_b) {
            detail::mm_nt(ai, bi, ci, m, ka, n);
        } else {
            throw ShapeError("bmm: double transpose is not supported");
        }
    });
    auto an = a.node();
    auto bn = b.node();
    const std::int64_t k_dim = ka;
    return detail::make_op<T>(
        {batch, m, n}, std::move(out), {a, b},
        [an, bn, batch, m, n, k_dim, a_stride, b_stride, c_stride, trans_a, trans_b](detail::Node<T>& self) {
            const T* g = self.grad.data();
            if (an->requires_grad) {
                an->ensure_grad();
                parallel_for(batch, [&](std::int64_t i) {
                    const T* gi = g + i * c_stride;
                    const T* bi = bn->value.data() + i * b_stride;
                    T* dai = an->grad.data() + i * a_stride;
                    if (!trans_a) {
                        // dA = dC * B_eff^T
                        if (!trans_b) {
                            detail::mm_nt(gi, bi, dai, m, n, k_dim);
                        } else {
                            detail::mm_nn(gi, bi, dai, m, n, k_dim);
                        }
                    } else {
                        // A stored [k,m]: dA = B_eff * dC^T
                        if (!trans_b) {
                            detail::mm_nt(bi, gi, dai, k_dim, n, m);
                        } else {
                            detail::mm_tn(bi, gi, dai, k_dim, n, m);
                        }
                    }
                });
            }
            if (bn->requires_grad) {
                bn->ensure_grad();
                parallel_for(batch, [&](std::int64_t i) {
                    const T* gi = g + i * c_stride;
                    const T* ai = an->value.data() + i * a_stride;
                    T* dbi = bn->grad.data() + i * b_stride;
                    if (!trans_b) {
                        // dB = A_eff^T * dC, stored [k,n]
                        if (!trans_a) {
                            detail::mm_tn(ai, gi, dbi, k_dim, m, n);
                        } else {
                            detail::mm_nn(ai, gi, dbi, k_dim, m, n);
                        }
                    } else {
                        // B stored [n,k]: dB = dC^T * A_eff
                        if (!trans_a) {
                            detail::mm_tn(gi, ai, dbi, n, m, k_dim);
                        } else {
                            detail::mm_nt(gi, ai, dbi, n, m, k_dim);
                        }
                    }
                });
            }
        });
}

// Adaptive average pooling to an (out_h, out_w) grid; each output cell is the
// mean of its evenly partitioned window.
template <typename T>
Tensor<T> adaptive_avg_pool(const Tensor<T>& x, std::int64_t out_h, std::int64_t out_w) {
    if (x.ndim() != 4) {
        throw ShapeError("adaptive_avg_pool: expected rank-4 input");
    }
    const std::int64_t batch = x.dim(0), channels = x.dim(1), h = x.dim(2), w = x.dim(3);
    if (out_h < 1 || out_w < 1 || out_h > h || out_w > w) {
        throw ShapeError("adaptive_avg_pool: invalid target size " + std::to_string(out_h) + "x" +
                         std::to_string(out_w) + " for input " + shape_to_string(x.shape()));
    }
    std::vector<T> out(static_cast<std::size_t>(batch * channels * out_h * out_w));
    const T* xv = x.values().data();
    for (std::int64_t bc = 0; bc < batch * channels; ++bc) {
        const T* plane = xv + bc * h * w;
        T* dst = out.data() + bc * out_h * out_w;
        for (std::int64_t oh = 0; oh < out_h; ++oh) {
            const std::int64_t h0 = oh * h / out_h;
            const std::int64_t h1 = ((oh + 1) * h + out_h - 1) / out_h;
            for (std::int64_t ow = 0; ow < out_w; ++ow) {
                const std::int64_t w0 = ow * w / out_w;
                const std::int64_t w1 = ((ow + 1) * w + out_w - 1) / out_w;
                T acc = T(0);
                for (std::int64_t ih = h0; ih < h1; ++ih) {
                    for (std::int64_t iw = w0; iw < w1; ++iw) {
                        acc += plane[ih * w + iw];
                    }
                }
                dst[oh * out_w + ow] = acc / static_cast<T>((h1 - h0) * (w1 - w0));
            }
        }
    }
    auto xn = x.node();
    return detail::make_op<T>(
        {batch, channels, out_h, out_w}, std::move(out), {x},
        [xn, batch, channels, h, w, out_h, out_w](detail::Node<T>& self) {
            if (!xn->requires_grad) {
                return;
            }
            xn->ensure_grad();
            for (std::int64_t bc = 0; bc < batch * channels; ++bc) {
                T* dplane = xn->grad.data() + bc * h * w;
                const T* g = self.grad.data() + bc * out_h * out_w;
                for (std::int64_t oh = 0; oh < out_h; ++oh) {
                    const std::int64_t h0 = oh * h / out_h;
                    const std::int64_t h1 = ((oh + 1) * h + out_h - 1) / out_h;
                    for (std::int64_t ow = 0; ow < out_w; ++ow) {
                        const std::int64_t w0 = ow * w / out_w;
                        const std::int64_t w1 = ((ow + 1) * w + out_w - 1) / out_w;
                        const T share = g[oh * out_w + ow] / static_cast<T>((h1 - h0) * (w1 - w0));
                        for (std::int64_t ih = h0; ih < h1; ++ih) {
                            for (std::int64_t iw = w0; iw < w1; ++iw) {
                                dplane[ih * w + iw] += share;
                            }
                        }
                    }
                }
            }
        });
}

// Nearest-neighbor 2x upsampling.
template <typename T>
Tensor<T> upsample_nearest2x(const Tensor<T>& x) {
    if (x.ndim() != 4) {
        throw ShapeError("upsample_nearest2x: expected rank-4 input");
    }
    const std::int64_t batch = x.dim(0), channels = x.dim(1), h = x.dim(2), w = x.dim(3);
    std::vector<T> out(static_cast<std::size_t>(batch * channels * 4 * h * w));
    const T* xv = x.values().data();
    for (std::int64_t bc = 0; bc < batch * channels; ++bc) {
        const T* plane = xv + bc * h * w;
        T* dst = out.data() + bc * 4 * h * w;
        for (std::int64_t ih = 0; ih < h; ++ih) {
            for (std::int64_t iw = 0; iw < w; ++iw) {
                const T v = plane[ih * w + iw];
                T* cell = dst + (2 * ih) * (2 * w) + 2 * iw;
                cell[0] = v;
                cell[1] = v;
                cell[2 * w] = v;
                cell[2 * w + 1] = v;
            }
        }
    }
    auto xn = x.node();
    return detail::make_op<T>({batch, channels, 2 * h, 2 * w}, std::move(out), {x},
                              [xn, batch, channels, h, w](detail::Node<T>& self) {
                                  if (!xn->requires_grad) {
                                      return;
                                  }
                                  xn->ensure_grad();
                                  for (std::int64_t bc = 0; bc < batch * channels; ++bc) {
                                      const T* g = self.grad.data() + bc * 4 * h * w;
                                      T* dplane = xn->grad.data() + bc * h * w;
                                      for (std::int64_t ih = 0; ih < h; ++ih) {
                                          for (std::int64_t iw = 0; iw < w; ++iw) {
                                              const T* cell = g + (2 * ih) * (2 * w) + 2 * iw;
                                              dplane[ih * w + iw] +=
                                                  cell[0] + cell[1] + cell[2 * w] + cell[2 * w + 1];
                                          }
                                      }
                                  }
                              });
}

// Instance normalization over the spatial dimensions, with affine parameters
// gamma/beta of shape [C].
template <typename T>
Tensor<T> instance_norm2d(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta, T eps) {
    if (x.ndim() != 4) {
        throw ShapeError("instance_norm2d: expected rank-4 input");
    }
    const std::int64_t batch = x.dim(0), channels = x.dim(1), hw = x.dim(2) * x.dim(3);
    if (gamma.ndim() != 1 || gamma.dim(0) != channels || beta.ndim() != 1 || beta.dim(0) != channels) {
        throw ShapeError("instance_norm2d: gamma/beta must have shape [C]");
    }
    const T* xv = x.values().data();
    const T* gv = gamma.values().data();
    const T* bv = beta.values().data();
    std::vector<T> out(static_cast<std::size_t>(batch * channels * hw));
    std::vector<T> xhat(out.size());
    std::vector<T> invstd(static_cast<std::size_t>(batch * channels));
    for (std::int64_t bc = 0; bc < batch * channels; ++bc) {
        const T* plane = xv + bc * hw;
        T mean = T(0);
        for (std::int64_t i = 0; i < hw; ++i) {
            mean += plane[i];
        }
        mean /= static_cast<T>(hw);
        T var = T(0);
        for (std::int64_t i = 0; i < hw; ++i) {
            const T d = plane[i] - mean;
            var += d * d;
        }
        var /= static_cast<T>(hw);
        const T is = T(1) / std::sqrt(var + eps);
        invstd[bc] = is;
        const std::int64_t c = bc % channels;
        T* xh = xhat.data() + bc * hw;
        T* dst = out.data() + bc * hw;
        for (std::int64_t i = 0; i < hw; ++i) {
            const T v = (plane[i] - mean) * is;
            xh[i] = v;
            dst[i] = v * gv[c] + bv[c];
        }
    }
    auto xn = x.node();
    auto gn = gamma.node();
    auto bn = beta.node();
    return detail::make_op<T>(
        x.shape(), std::move(out), {x, gamma, beta},
        [xn, gn, bn, batch, channels, hw, xhat = std::move(xhat),
         invstd = std::move(invstd)](detail::Node<T>& self) {
            const T* g = self.grad.data();
            const T m = static_cast<T>(hw);
            if (gn->requires_grad || bn->requires_grad) {
                if (gn->requires_grad) {
                    gn->ensure_grad();
                }
                if (bn->requires_grad) {
                    bn->ensure_grad();
                }
                for (std::int64_t bc = 0; bc < batch * channels; ++bc) {
                    const std::int64_t c = bc % channels;
                    const T* gi = g + bc * hw;
                    const T* xh = xhat.data() + bc * hw;
                    T sg = T(0), sgx = T(0);
                    for (std::int64_t i = 0; i < hw; ++i) {
                        sg += gi[i];
                        sgx += gi[i] * xh[i];
                    }
                    if (bn->requires_grad) {
                        bn->grad[c] += sg;
                    }
                    if (gn->requires_grad) {
                        gn->grad[c] += sgx;
                    }
                }
            }
            if (xn->requires_grad) {
                xn->ensure_grad();
                for (std::int64_t bc = 0; bc < batch * channels; ++bc) {
                    const std::int64_t c = bc % channels;
                    const T* gi = g + bc * hw;
                    const T* xh = xhat.data() + bc * hw;
                    T sg = T(0), sgx = T(0);
                    for (std::int64_t i = 0; i < hw; ++i) {
                        sg += gi[i];
                        sgx += gi[i] * xh[i];
                    }
                    const T scale = gn->value[c] * invstd[bc] / m;
                    T* dst = xn->grad.data() + bc * hw;
                    for (std::int64_t i = 0; i < hw; ++i) {
                        dst[i] += scale * (m * gi[i] - sg - xh[i] * sgx);
                    }
                }
            }
        });
}

// Scales every pixel's channel vector to unit L2 norm.
template <typename T>
Tensor<T> normalize_channels(const Tensor<T>& x, T eps) {
    if (x.ndim() != 4) {
        throw ShapeError("normalize_channels: expected rank-4 input");
    }
    const std::int64_t batch = x.dim(0), channels = x.dim(1), hw = x.dim(2) * x.dim(3);
    const T* xv = x.values().data();
    std::vector<T> out(static_cast<std::size_t>(batch * channels * hw));
    std::vector<T> inv_norm(static_cast<std::size_t>(batch * hw));
    for (std::int64_t n = 0; n < batch; ++n) {
        const T* xb = xv + n * channels * hw;
        T* ob = out.data() + n * channels * hw;
        T* rb = inv_norm.data() + n * hw;
        for (std::int64_t i = 0; i < hw; ++i) {
            T ss = eps;
            for (std::int64_t c = 0; c < channels; ++c) {
                const T v = xb[c * hw + i];
                ss += v * v;
            }
            const T inv = T(1) / std::sqrt(ss);
            rb[i] = inv;
            for (std::int64_t c = 0; c < channels; ++c) {
                ob[c * hw + i] = xb[c * hw + i] * inv;
            }
        }
    }
    auto xn = x.node();
    return detail::make_op<T>(
        x.shape(), std::move(out), {x},
        [xn, batch, channels, hw, inv_norm = std::move(inv_norm)](detail::Node<T>& self) {
            if (!xn->requires_grad) {
                return;
            }
            xn->ensure_grad();
            for (std::int64_t n = 0; n < batch; ++n) {
                const T* g = self.grad.data() + n * channels * hw;
                const T* y = self.value.data() + n * channels * hw;
                const T* rb = inv_norm.data() + n * hw;
                T* dst = xn->grad.data() + n * channels * hw;
                for (std::int64_t i = 0; i < hw; ++i) {
                    T dot = T(0);
                    for (std::int64_t c = 0; c < channels; ++c) {
                        dot += g[c * hw + i] * y[c * hw + i];
                    }
                    const T inv = rb[i];
                    for (std::int64_t c = 0; c < channels; ++c) {
                        dst[c * hw + i] += inv * (g[c * hw + i] - y[c * hw + i] * dot);
                    }
                }
            }
        });
}

// Per-input-channel weight modulation: out[j,i,:,:] = w[j,i,:,:] * s[i].
template <typename T>
Tensor<T> modulate_in_channels(const Tensor<T>& w, const Tensor<T>& scales) {
    if (w.ndim() != 4) {
        throw ShapeError("modulate_in_channels: expected rank-4 weight");
    }
    const std::int64_t c_out = w.dim(0), c_in = w.dim(1), kk = w.dim(2) * w.dim(3);
    if (scales.numel() != c_in) {
        throw ShapeError("modulate_in_channels: scale length " + std::to_string(scales.numel()) +
                         " does not match fan-in " + std::to_string(c_in));
    }
    const T* wv = w.values().data();
    const T* sv = scales.values().data();
    std::vector<T> out(static_cast<std::size_t>(c_out * c_in * kk));
    for (std::int64_t j = 0; j < c_out; ++j) {
        for (std::int64_t i = 0; i < c_in; ++i) {
            const T s = sv[i];
            const T* src = wv + (j * c_in + i) * kk;
            T* dst = out.data() + (j * c_in + i) * kk;
            for (std::int64_t t = 0; t < kk; ++t) {
                dst[t] = src[t] * s;
            }
        }
    }
    auto wn = w.node();
    auto sn = scales.node();
    return detail::make_op<T>(w.shape(), std::move(out), {w, scales},
                              [wn, sn, c_out, c_in, kk](detail::Node<T>& self) {
                                  const T* g = self.grad.data();
                                  if (wn->requires_grad) {
                                      wn->ensure_grad();
                                      for (std::int64_t j = 0; j < c_out; ++j) {
                                          for (std::int64_t i = 0; i < c_in; ++i) {
                                              const T s = sn->value[i];
                                              const T* gi = g + (j * c_in + i) * kk;
                                              T* dst = wn->grad.data() + (j * c_in + i) * kk;
                                              for (std::int64_t t = 0; t < kk; ++t) {
                                                  dst[t] += gi[t] * s;
                                              }
                                          }
                                      }
                                  }
                                  if (sn->requires_grad) {
                                      sn->ensure_grad();
                                      for (std::int64_t i = 0; i < c_in; ++i) {
                                          T acc = T(0);
                                          for (std::int64_t j = 0; j < c_out; ++j) {
                                              const T* gi = g + (j * c_in + i) * kk;
                                              const T* wi = wn->value.data() + (j * c_in + i) * kk;
                                              for (std::int64_t t = 0; t < kk; ++t) {
                                                  acc += gi[t] * wi[t];
                                              }
                                          }
                                          sn->grad[i] += acc;
                                      }
                                  }
                              });
}

// Fused modulate + demodulate: out[j,i,:,:] = u[j,i,:,:] / sqrt(sum_j(u^2)+eps)
// with u = w * gain * s[i]. One pass and one output buffer instead of three
// chained ops; gradients match the composition.
template <typename T>
Tensor<T> modulate_demodulate(const Tensor<T>& w, const Tensor<T>& scales, const Tensor<T>& gain,
                              T eps) {
    if (w.ndim() != 4) {
        throw ShapeError("modulate_demodulate: expected rank-4 weight");
    }
    const std::int64_t c_out = w.dim(0), c_in = w.dim(1), kk = w.dim(2) * w.dim(3);
    if (scales.numel() != c_in || gain.numel() != 1) {
        throw ShapeError("modulate_demodulate: scale length must equal fan-in, gain must be scalar");
    }
    const T* wv = w.values().data();
    const T* sv = scales.values().data();
    const T gv = gain.values()[0];
    std::vector<T> out(static_cast<std::size_t>(w.numel()));
    std::vector<T> inv_norm(static_cast<std::size_t>(c_out));
    for (std::int64_t j = 0; j < c_out; ++j) {
        T ss = eps;
        const T* wj = wv + j * c_in * kk;
        T* oj = out.data() + j * c_in * kk;
        for (std::int64_t i = 0; i < c_in; ++i) {
            const T s = sv[i] * gv;
            for (std::int64_t t = 0; t < kk; ++t) {
                const T u = wj[i * kk + t] * s;
                oj[i * kk + t] = u;
                ss += u * u;
            }
        }
        const T inv = T(1) / std::sqrt(ss);
        inv_norm[j] = inv;
        for (std::int64_t t = 0; t < c_in * kk; ++t) {
            oj[t] *= inv;
        }
    }
    auto wn = w.node();
    auto sn = scales.node();
    auto gn = gain.node();
    return detail::make_op<T>(
        w.shape(), std::move(out), {w, scales, gain},
        [wn, sn, gn, c_out, c_in, kk, inv_norm = std::move(inv_norm)](detail::Node<T>& self) {
            const T gv = gn->value[0];
            const bool need_w = wn->requires_grad;
            const bool need_s = sn->requires_grad;
            const bool need_g = gn->requires_grad;
            if (need_w) {
                wn->ensure_grad();
            }
            if (need_s) {
                sn->ensure_grad();
            }
            if (need_g) {
                gn->ensure_grad();
            }
            T dgain = T(0);
            for (std::int64_t j = 0; j < c_out; ++j) {
                const T* g = self.grad.data() + j * c_in * kk;
                const T* y = self.value.data() + j * c_in * kk;
                const T* wj = wn->value.data() + j * c_in * kk;
                T dot = T(0);
                for (std::int64_t t = 0; t < c_in * kk; ++t) {
                    dot += g[t] * y[t];
                }
                const T inv = inv_norm[j];
                for (std::int64_t i = 0; i < c_in; ++i) {
                    const T s = sn->value[i];
                    T ds = T(0);
                    for (std::int64_t t = 0; t < kk; ++t) {
                        const std::int64_t idx = i * kk + t;
                        // d/du of the per-channel normalization, u = w*s*gain
                        const T du = inv * (g[idx] - y[idx] * dot);
                        if (need_w) {
                            wn->grad[j * c_in * kk + idx] += du * s * gv;
                        }
                        const T dw_su = du * wj[idx];
                        ds += dw_su * gv;
                        dgain += dw_su * s;
                    }
                    if (need_s) {
                        sn->grad[i] += ds;
                    }
                }
            }
            if (need_g) {
                gn->grad[0] += dgain;
            }
        });
}

// Normalizes each output channel's fan-in block to unit L2 norm:
// out[j] = w[j] / sqrt(sum(w[j]^2) + eps).
template <typename T>
Tensor<T> demodulate_weights(const Tensor<T>& w_bar, T eps) {
    if (w_bar.ndim() != 4) {
        throw ShapeError("demodulate_weights: expected rank-4 weight");
    }
    if (!(eps > T(0))) {
        throw Error("demodulate_weights: eps must be positive");
    }
    const std::int64_t c_out = w_bar.dim(0);
    const std::int64_t fan_in = w_bar.numel() / c_out;
    const T* wv = w_bar.values().data();
    std::vector<T> out(static_cast<std::size_t>(w_bar.numel()));
    std::vector<T> inv_norm(static_cast<std::size_t>(c_out));
    for (std::int64_t j = 0; j < c_out; ++j) {
        const T* src = wv + j * fan_in;
        T ss = eps;
        for (std::int64_t t = 0; t < fan_in; ++t) {
            ss += src[t] * src[t];
        }
        const T inv = T(1) / std::sqrt(ss);
        inv_norm[j] = inv;
        T* dst = out.data() + j * fan_in;
        for (std::int64_t t = 0; t < fan_in; ++t) {
            dst[t] = src[t] * inv;
        }
    }
    auto wn = w_bar.node();
    return detail::make_op<T>(w_bar.shape(), std::move(out), {w_bar},
                              [wn, c_out, fan_in, inv_norm = std::move(inv_norm)](detail::Node<T>& self) {
                                  if (!wn->requires_grad) {
                                      return;
                                  }
                                  wn->ensure_grad();
                                  for (std::int64_t j = 0; j < c_out; ++j) {
                                      const T* g = self.grad.data() + j * fan_in;
                                      const T* y = self.value.data() + j * fan_in;
                                      T dot = T(0);
                                      for (std::int64_t t = 0; t < fan_in; ++t) {
                                          dot += g[t] * y[t];
                                      }
                                      const T inv = inv_norm[j];
                                      T* dst = wn->grad.data() + j * fan_in;
                                      for (std::int64_t t = 0; t < fan_in; ++t) {
                                          dst[t] += inv * (g[t] - y[t] * dot);
                                      }
                                  }
                              });
}

} // namespace fnr
