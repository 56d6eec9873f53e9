#pragma once

#include <algorithm>
#include <cstdint>
#include <vector>

#include "panoseg/error.hpp"

namespace panoseg::kernels {

// Dense numeric kernels behind the differentiable ops. The parallel variants
// partition work so that every output element is produced by exactly one
// thread with a fixed inner accumulation order, which makes results
// bit-identical for any thread count. The serial variants in `reference` use
// straightforward loop nests and are kept as test oracles and benchmark
// baselines.

struct Conv2dSpec {
  int stride_h = 1, stride_w = 1;
  int dil_h = 1, dil_w = 1;
  int pad_h = 0, pad_w = 0;
};

inline int64_t conv_out_dim(int64_t in, int k, int stride, int dil, int pad) {
  const int64_t eff = static_cast<int64_t>(dil) * (k - 1) + 1;
  const int64_t span = in + 2 * pad - eff;
  if (span < 0) return 0;  // kernel no longer fits
  return span / stride + 1;
}

// ---------------------------------------------------------------------------
// GEMM family. Row-major everywhere.
// ---------------------------------------------------------------------------

// C(MxN) += A(MxK) * B(KxN)
template <class T>
void gemm_nn(const T* a, const T* b, T* c, int64_t m, int64_t k, int64_t n) {
#pragma omp parallel for schedule(static)
  for (int64_t i = 0; i < m; ++i) {
    T* crow = c + i * n;
    const T* arow = a + i * k;
    for (int64_t p = 0; p < k; ++p) {
      const T alpha = arow[p];
      if (alpha == T(0)) continue;
      const T* brow = b + p * n;
      for (int64_t j = 0; j < n; ++j) crow[j] += alpha * brow[j];
    }
  }
}

// C(MxN) += A^T(MxK stored KxM) * B(KxN)
template <class T>
void gemm_tn(const T* a, const T* b, T* c, int64_t m, int64_t k, int64_t n) {
#pragma omp parallel for schedule(static)
  for (int64_t i = 0; i < m; ++i) {
    T* crow = c + i * n;
    for (int64_t p = 0; p < k; ++p) {
      const T alpha = a[p * m + i];
      if (alpha == T(0)) continue;
      const T* brow = b + p * n;
      for (int64_t j = 0; j < n; ++j) crow[j] += alpha * brow[j];
    }
  }
}

// C(MxN) += A(MxK) * B^T(KxN stored NxK); dot-product form with four
// independent accumulators (fixed order, vectorizer-friendly).
template <class T>
void gemm_nt(const T* a, const T* b, T* c, int64_t m, int64_t k, int64_t n) {
#pragma omp parallel for schedule(static)
  for (int64_t i = 0; i < m; ++i) {
    const T* arow = a + i * k;
    T* crow = c + i * n;
    for (int64_t j = 0; j < n; ++j) {
      const T* brow = b + j * k;
      T s0 = 0, s1 = 0, s2 = 0, s3 = 0;
      int64_t p = 0;
      for (; p + 4 <= k; p += 4) {
        s0 += arow[p] * brow[p];
        s1 += arow[p + 1] * brow[p + 1];
        s2 += arow[p + 2] * brow[p + 2];
        s3 += arow[p + 3] * brow[p + 3];
      }
      T s = (s0 + s1) + (s2 + s3);
      for (; p < k; ++p) s += arow[p] * brow[p];
      crow[j] += s;
    }
  }
}

// ---------------------------------------------------------------------------
// im2col / col2im. col layout: [C*kh*kw, out_h*out_w] row-major.
// ---------------------------------------------------------------------------

template <class T>
void im2col(const T* x, int64_t channels, int64_t h, int64_t w, int kh, int kw,
            const Conv2dSpec& s, T* col) {
  const int64_t oh = conv_out_dim(h, kh, s.stride_h, s.dil_h, s.pad_h);
  const int64_t ow = conv_out_dim(w, kw, s.stride_w, s.dil_w, s.pad_w);
  const int64_t rows = channels * kh * kw;
#pragma omp parallel for schedule(static)
  for (int64_t r = 0; r < rows; ++r) {
    const int64_t c = r / (kh * kw);
    const int ki = static_cast<int>((r / kw) % kh);
    const int kj = static_cast<int>(r % kw);
    T* dst = col + r * oh * ow;
    const T* src = x + c * h * w;
    for (int64_t oi = 0; oi < oh; ++oi) {
      const int64_t ii = oi * s.stride_h - s.pad_h + static_cast<int64_t>(ki) * s.dil_h;
      if (ii < 0 || ii >= h) {
        for (int64_t oj = 0; oj < ow; ++oj) dst[oi * ow + oj] = T(0);
        continue;
      }
      for (int64_t oj = 0; oj < ow; ++oj) {
        const int64_t jj = oj * s.stride_w - s.pad_w + static_cast<int64_t>(kj) * s.dil_w;
        dst[oi * ow + oj] = (jj < 0 || jj >= w) ? T(0) : src[ii * w + jj];
      }
    }
  }
}

// x += col scattered back; parallel over channels (each channel's scatter is
// confined to its own plane).
template <class T>
void col2im_add(const T* col, int64_t channels, int64_t h, int64_t w, int kh, int kw,
                const Conv2dSpec& s, T* x) {
  const int64_t oh = conv_out_dim(h, kh, s.stride_h, s.dil_h, s.pad_h);
  const int64_t ow = conv_out_dim(w, kw, s.stride_w, s.dil_w, s.pad_w);
#pragma omp parallel for schedule(static)
  for (int64_t c = 0; c < channels; ++c) {
    T* plane = x + c * h * w;
    for (int ki = 0; ki < kh; ++ki) {
      for (int kj = 0; kj < kw; ++kj) {
        const T* src = col + ((c * kh + ki) * kw + kj) * oh * ow;
        for (int64_t oi = 0; oi < oh; ++oi) {
          const int64_t ii = oi * s.stride_h - s.pad_h + static_cast<int64_t>(ki) * s.dil_h;
          if (ii < 0 || ii >= h) continue;
          for (int64_t oj = 0; oj < ow; ++oj) {
            const int64_t jj = oj * s.stride_w - s.pad_w + static_cast<int64_t>(kj) * s.dil_w;
            if (jj < 0 || jj >= w) continue;
            plane[ii * w + jj] += src[oi * ow + oj];
          }
        }
      }
    }
  }
}

// ---------------------------------------------------------------------------
// Convolution. x: [N,C,H,W]; kernel: [O,C,kh,kw]; y: [N,O,OH,OW].
// ---------------------------------------------------------------------------

template <class T>
struct ConvDims {
  int64_t n, c, h, w, o;
  int kh, kw;
  int64_t oh, ow;
};

template <class T>
ConvDims<T> conv_dims(int64_t n, int64_t c, int64_t h, int64_t w, int64_t o, int kh, int kw,
                      const Conv2dSpec& s) {
  ConvDims<T> d{n, c, h, w, o, kh, kw, 0, 0};
  d.oh = conv_out_dim(h, kh, s.stride_h, s.dil_h, s.pad_h);
  d.ow = conv_out_dim(w, kw, s.stride_w, s.dil_w, s.pad_w);
  if (d.oh < 1 || d.ow < 1) throw Error("conv shape mismatch", "output dims below 1");
  return d;
}

// y = conv(x, k) + bias (bias may be null). col is caller-provided scratch of
// size C*kh*kw*OH*OW.
template <class T>
void conv2d_forward(const T* x, const T* kernel, const T* bias, const ConvDims<T>& d,
                    const Conv2dSpec& s, T* y, T* col) {
  const int64_t rows = d.c * d.kh * d.kw;
  const int64_t pix = d.oh * d.ow;
  for (int64_t b = 0; b < d.n; ++b) {
    im2col(x + b * d.c * d.h * d.w, d.c, d.h, d.w, d.kh, d.kw, s, col);
    T* yb = y + b * d.o * pix;
    if (bias) {
#pragma omp parallel for schedule(static)
      for (int64_t oc = 0; oc < d.o; ++oc) {
        for (int64_t p = 0; p < pix; ++p) yb[oc * pix + p] = bias[oc];
      }
    } else {
      std::fill(yb, yb + d.o * pix, T(0));
    }
    gemm_nn(kernel, col, yb, d.o, rows, pix);
  }
}

// Accumulates dx (may be null), dk, db (may be null) given dy.
template <class T>
void conv2d_backward(const T* x, const T* kernel, const T* dy, const ConvDims<T>& d,
                     const Conv2dSpec& s, T* dx, T* dk, T* db, T* col) {
  const int64_t rows = d.c * d.kh * d.kw;
  const int64_t pix = d.oh * d.ow;
  std::vector<T> dcol;
  if (dx) dcol.assign(static_cast<size_t>(rows) * pix, T(0));
  for (int64_t b = 0; b < d.n; ++b) {
    const T* dyb = dy + b * d.o * pix;
    if (dk) {
      im2col(x + b * d.c * d.h * d.w, d.c, d.h, d.w, d.kh, d.kw, s, col);
      gemm_nt(dyb, col, dk, d.o, pix, rows);
    }
    if (db) {
      for (int64_t oc = 0; oc < d.o; ++oc) {
        T sum = 0;
        const T* row = dyb + oc * pix;
        for (int64_t p = 0; p < pix; ++p) sum += row[p];
        db[oc] += sum;
      }
    }
    if (dx) {
      std::fill(dcol.begin(), dcol.end(), T(0));
      gemm_tn(kernel, dyb, dcol.data(), rows, d.o, pix);
      col2im_add(dcol.data(), d.c, d.h, d.w, d.kh, d.kw, s, dx + b * d.c * d.h * d.w);
    }
  }
}

// ---------------------------------------------------------------------------
// Serial reference implementations (test oracles, benchmark baselines).
// ---------------------------------------------------------------------------
namespace reference {

template <class T>
void gemm_nn(const T* a, const T* b, T* c, int64_t m, int64_t k, int64_t n) {
  for (int64_t i = 0; i < m; ++i) {
    for (int64_t j = 0; j < n; ++j) {
      T s = 0;
      for (int64_t p = 0; p < k; ++p) s += a[i * k + p] * b[p * n + j];
      c[i * n + j] += s;
    }
  }
}

// Naive direct convolution, no im2col.
template <class T>
void conv2d_forward(const T* x, const T* kernel, const T* bias, const ConvDims<T>& d,
                    const Conv2dSpec& s, T* y) {
  for (int64_t b = 0; b < d.n; ++b) {
    for (int64_t oc = 0; oc < d.o; ++oc) {
      for (int64_t oi = 0; oi < d.oh; ++oi) {
        for (int64_t oj = 0; oj < d.ow; ++oj) {
          T acc = bias ? bias[oc] : T(0);
          for (int64_t ic = 0; ic < d.c; ++ic) {
            for (int ki = 0; ki < d.kh; ++ki) {
              const int64_t ii = oi * s.stride_h - s.pad_h + static_cast<int64_t>(ki) * s.dil_h;
              if (ii < 0 || ii >= d.h) continue;
              for (int kj = 0; kj < d.kw; ++kj) {
                const int64_t jj = oj * s.stride_w - s.pad_w + static_cast<int64_t>(kj) * s.dil_w;
                if (jj < 0 || jj >= d.w) continue;
                acc += x[((b * d.c + ic) * d.h + ii) * d.w + jj] *
                       kernel[((oc * d.c + ic) * d.kh + ki) * d.kw + kj];
              }
            }
          }
          y[((b * d.o + oc) * d.oh + oi) * d.ow + oj] = acc;
        }
      }
    }
  }
}

}  // namespace reference

}  // namespace panoseg::kernels
