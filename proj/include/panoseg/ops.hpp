#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "panoseg/kernels.hpp"
#include "panoseg/rng.hpp"
#include "panoseg/tensor.hpp"

// Differentiable operations over Tensor<T>. Forward math runs through the
// kernels; backward closures accumulate into parent grads.

namespace panoseg {

namespace detail {

template <class T>
void check_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw Error("shape mismatch",
                std::string(op) + ": " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
}

}  // namespace detail

template <class T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  detail::check_same_shape(a, b, "add");
  std::vector<T> v(a.size());
  for (int64_t i = 0; i < a.size(); ++i) v[i] = a.value()[i] + b.value()[i];
  return detail::make_op<T>(a.shape(), std::move(v), {a.node(), b.node()},
                            [](TensorNode<T>& n) {
                              for (int pi = 0; pi < 2; ++pi) {
                                auto& p = *n.parents[pi];
                                if (!p.requires_grad) continue;
                                p.ensure_grad();
                                for (size_t i = 0; i < n.grad.size(); ++i) p.grad[i] += n.grad[i];
                              }
                            });
}

template <class T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  detail::check_same_shape(a, b, "sub");
  std::vector<T> v(a.size());
  for (int64_t i = 0; i < a.size(); ++i) v[i] = a.value()[i] - b.value()[i];
  return detail::make_op<T>(a.shape(), std::move(v), {a.node(), b.node()},
                            [](TensorNode<T>& n) {
                              auto& pa = *n.parents[0];
                              auto& pb = *n.parents[1];
                              if (pa.requires_grad) {
                                pa.ensure_grad();
                                for (size_t i = 0; i < n.grad.size(); ++i) pa.grad[i] += n.grad[i];
                              }
                              if (pb.requires_grad) {
                                pb.ensure_grad();
                                for (size_t i = 0; i < n.grad.size(); ++i) pb.grad[i] -= n.grad[i];
                              }
                            });
}

template <class T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  detail::check_same_shape(a, b, "mul");
  std::vector<T> v(a.size());
  for (int64_t i = 0; i < a.size(); ++i) v[i] = a.value()[i] * b.value()[i];
  return detail::make_op<T>(a.shape(), std::move(v), {a.node(), b.node()},
                            [](TensorNode<T>& n) {
                              auto& pa = *n.parents[0];
                              auto& pb = *n.parents[1];
                              if (pa.requires_grad) {
                                pa.ensure_grad();
                                for (size_t i = 0; i < n.grad.size(); ++i)
                                  pa.grad[i] += n.grad[i] * pb.value[i];
                              }
                              if (pb.requires_grad) {
                                pb.ensure_grad();
                                for (size_t i = 0; i < n.grad.size(); ++i)
                                  pb.grad[i] += n.grad[i] * pa.value[i];
                              }
                            });
}

template <class T>
Tensor<T> mul_scalar(const Tensor<T>& a, T s) {
  std::vector<T> v(a.size());
  for (int64_t i = 0; i < a.size(); ++i) v[i] = a.value()[i] * s;
  return detail::make_op<T>(a.shape(), std::move(v), {a.node()}, [s](TensorNode<T>& n) {
    auto& p = *n.parents[0];
    p.ensure_grad();
    for (size_t i = 0; i < n.grad.size(); ++i) p.grad[i] += n.grad[i] * s;
  });
}

template <class T>
Tensor<T> add_scalar(const Tensor<T>& a, T s) {
  std::vector<T> v(a.size());
  for (int64_t i = 0; i < a.size(); ++i) v[i] = a.value()[i] + s;
  return detail::make_op<T>(a.shape(), std::move(v), {a.node()}, [](TensorNode<T>& n) {
    auto& p = *n.parents[0];
    p.ensure_grad();
    for (size_t i = 0; i < n.grad.size(); ++i) p.grad[i] += n.grad[i];
  });
}

template <class T>
Tensor<T> neg(const Tensor<T>& a) {
  return mul_scalar(a, T(-1));
}

// out = coeff (*) a + offset, with constant per-element coefficient arrays.
template <class T>
Tensor<T> affine_const(const Tensor<T>& a, std::vector<T> coeff, std::vector<T> offset) {
  if (static_cast<int64_t>(coeff.size()) != a.size() ||
      static_cast<int64_t>(offset.size()) != a.size()) {
    throw Error("shape mismatch", "affine_const coefficient length");
  }
  std::vector<T> v(a.size());
  for (int64_t i = 0; i < a.size(); ++i) v[i] = coeff[i] * a.value()[i] + offset[i];
  return detail::make_op<T>(a.shape(), std::move(v), {a.node()},
                            [coeff = std::move(coeff)](TensorNode<T>& n) {
                              auto& p = *n.parents[0];
                              p.ensure_grad();
                              for (size_t i = 0; i < n.grad.size(); ++i)
                                p.grad[i] += n.grad[i] * coeff[i];
                            });
}

template <class T>
Tensor<T> sum(const Tensor<T>& a) {
  T s = 0;
  for (int64_t i = 0; i < a.size(); ++i) s += a.value()[i];
  return detail::make_op<T>({1}, {s}, {a.node()}, [](TensorNode<T>& n) {
    auto& p = *n.parents[0];
    p.ensure_grad();
    const T g = n.grad[0];
    for (auto& x : p.grad) x += g;
  });
}

template <class T>
Tensor<T> mean(const Tensor<T>& a) {
  T s = 0;
  for (int64_t i = 0; i < a.size(); ++i) s += a.value()[i];
  const T inv = T(1) / static_cast<T>(a.size());
  return detail::make_op<T>({1}, {s * inv}, {a.node()}, [inv](TensorNode<T>& n) {
    auto& p = *n.parents[0];
    p.ensure_grad();
    const T g = n.grad[0] * inv;
    for (auto& x : p.grad) x += g;
  });
}

// Mean over all trailing axes of a [N, ...] tensor; returns [N].
template <class T>
Tensor<T> mean_per_sample(const Tensor<T>& a) {
  const int64_t n = a.dim(0);
  const int64_t inner = a.size() / n;
  std::vector<T> v(n, T(0));
  for (int64_t b = 0; b < n; ++b) {
    T s = 0;
    for (int64_t i = 0; i < inner; ++i) s += a.value()[b * inner + i];
    v[b] = s / static_cast<T>(inner);
  }
  return detail::make_op<T>({n}, std::move(v), {a.node()}, [n, inner](TensorNode<T>& nd) {
    auto& p = *nd.parents[0];
    p.ensure_grad();
    const T inv = T(1) / static_cast<T>(inner);
    for (int64_t b = 0; b < n; ++b) {
      const T g = nd.grad[b] * inv;
      for (int64_t i = 0; i < inner; ++i) p.grad[b * inner + i] += g;
    }
  });
}

// Scalar <w, a> with a constant weight vector.
template <class T>
Tensor<T> dot_const(const Tensor<T>& a, std::vector<T> w) {
  if (static_cast<int64_t>(w.size()) != a.size()) {
    throw Error("shape mismatch", "dot_const weight length");
  }
  T s = 0;
  for (int64_t i = 0; i < a.size(); ++i) s += w[i] * a.value()[i];
  return detail::make_op<T>({1}, {s}, {a.node()}, [w = std::move(w)](TensorNode<T>& n) {
    auto& p = *n.parents[0];
    p.ensure_grad();
    const T g = n.grad[0];
    for (size_t i = 0; i < w.size(); ++i) p.grad[i] += g * w[i];
  });
}

// y[b] = sum_d x[b,d] * w[d] for x [N,D], w [D].
template <class T>
Tensor<T> matmul_vec(const Tensor<T>& x, const Tensor<T>& w) {
  if (x.rank() != 2 || w.size() != x.dim(1)) {
    throw Error("shape mismatch", "matmul_vec expects [N,D] x [D]");
  }
  const int64_t n = x.dim(0), d = x.dim(1);
  std::vector<T> v(n, T(0));
  for (int64_t b = 0; b < n; ++b) {
    T s = 0;
    for (int64_t i = 0; i < d; ++i) s += x.value()[b * d + i] * w.value()[i];
    v[b] = s;
  }
  return detail::make_op<T>({n}, std::move(v), {x.node(), w.node()},
                            [n, d](TensorNode<T>& nd) {
                              auto& px = *nd.parents[0];
                              auto& pw = *nd.parents[1];
                              if (px.requires_grad) {
                                px.ensure_grad();
                                for (int64_t b = 0; b < n; ++b)
                                  for (int64_t i = 0; i < d; ++i)
                                    px.grad[b * d + i] += nd.grad[b] * pw.value[i];
                              }
                              if (pw.requires_grad) {
                                pw.ensure_grad();
                                for (int64_t b = 0; b < n; ++b)
                                  for (int64_t i = 0; i < d; ++i)
                                    pw.grad[i] += nd.grad[b] * px.value[b * d + i];
                              }
                            });
}

// out[i] = a.flat[idx[i]]; backward scatter-adds.
template <class T>
Tensor<T> gather(const Tensor<T>& a, std::vector<int64_t> idx) {
  std::vector<T> v(idx.size());
  for (size_t i = 0; i < idx.size(); ++i) {
    if (idx[i] < 0 || idx[i] >= a.size()) throw Error("index out of range", "gather");
    v[i] = a.value()[idx[i]];
  }
  const int64_t m = static_cast<int64_t>(idx.size());
  return detail::make_op<T>({m}, std::move(v), {a.node()},
                            [idx = std::move(idx)](TensorNode<T>& n) {
                              auto& p = *n.parents[0];
                              p.ensure_grad();
                              for (size_t i = 0; i < idx.size(); ++i)
                                p.grad[idx[i]] += n.grad[i];
                            });
}

// Same data, new shape (element count must match).
template <class T>
Tensor<T> reshape(const Tensor<T>& a, Shape shape) {
  if (shape_size(shape) != a.size()) {
    throw Error("shape mismatch", "reshape to " + shape_str(shape));
  }
  std::vector<T> v = a.value();
  return detail::make_op<T>(std::move(shape), std::move(v), {a.node()}, [](TensorNode<T>& n) {
    auto& p = *n.parents[0];
    p.ensure_grad();
    for (size_t i = 0; i < n.grad.size(); ++i) p.grad[i] += n.grad[i];
  });
}

template <class T>
Tensor<T> concat(const std::vector<Tensor<T>>& parts, int axis) {
  if (parts.empty()) throw Error("shape mismatch", "concat of nothing");
  const Shape& s0 = parts[0].shape();
  if (axis < 0 || axis >= static_cast<int>(s0.size())) throw Error("axis out of range");
  Shape out = s0;
  int64_t axis_total = 0;
  for (const auto& p : parts) {
    const Shape& s = p.shape();
    if (s.size() != s0.size()) throw Error("shape mismatch", "concat rank");
    for (size_t i = 0; i < s.size(); ++i) {
      if (static_cast<int>(i) != axis && s[i] != s0[i]) {
        throw Error("shape mismatch", "concat dims");
      }
    }
    axis_total += s[axis];
  }
  out[axis] = axis_total;

  int64_t outer = 1, inner = 1;
  for (int i = 0; i < axis; ++i) outer *= s0[i];
  for (size_t i = axis + 1; i < s0.size(); ++i) inner *= s0[i];

  std::vector<T> v(shape_size(out));
  std::vector<int64_t> chunk(parts.size());
  std::vector<std::shared_ptr<TensorNode<T>>> parents;
  for (size_t pi = 0; pi < parts.size(); ++pi) {
    chunk[pi] = parts[pi].dim(axis) * inner;
    parents.push_back(parts[pi].node());
  }
  const int64_t out_stride = axis_total * inner;
  for (int64_t o = 0; o < outer; ++o) {
    int64_t off = 0;
    for (size_t pi = 0; pi < parts.size(); ++pi) {
      const T* src = parts[pi].value().data() + o * chunk[pi];
      std::copy(src, src + chunk[pi], v.data() + o * out_stride + off);
      off += chunk[pi];
    }
  }
  return detail::make_op<T>(
      std::move(out), std::move(v), std::move(parents),
      [outer, out_stride, chunk](TensorNode<T>& n) {
        int64_t off = 0;
        for (size_t pi = 0; pi < n.parents.size(); ++pi) {
          auto& p = *n.parents[pi];
          if (p.requires_grad) {
            p.ensure_grad();
            for (int64_t o = 0; o < outer; ++o) {
              const T* g = n.grad.data() + o * out_stride + off;
              T* dst = p.grad.data() + o * chunk[pi];
              for (int64_t i = 0; i < chunk[pi]; ++i) dst[i] += g[i];
            }
          }
          off += chunk[pi];
        }
      });
}

template <class T>
Tensor<T> leaky_relu(const Tensor<T>& a, T slope) {
  std::vector<T> v(a.size());
  for (int64_t i = 0; i < a.size(); ++i) {
    const T x = a.value()[i];
    v[i] = x >= T(0) ? x : slope * x;
  }
  return detail::make_op<T>(a.shape(), std::move(v), {a.node()}, [slope](TensorNode<T>& n) {
    auto& p = *n.parents[0];
    p.ensure_grad();
    for (size_t i = 0; i < n.grad.size(); ++i) {
      p.grad[i] += n.grad[i] * (p.value[i] >= T(0) ? T(1) : slope);
    }
  });
}

// Softmax along one axis.
template <class T>
Tensor<T> softmax(const Tensor<T>& a, int axis) {
  if (axis < 0 || axis >= a.rank()) throw Error("axis out of range", "softmax");
  const Shape& s = a.shape();
  int64_t outer = 1, inner = 1;
  const int64_t c = s[axis];
  for (int i = 0; i < axis; ++i) outer *= s[i];
  for (size_t i = axis + 1; i < s.size(); ++i) inner *= s[i];

  std::vector<T> v(a.size());
  for (int64_t o = 0; o < outer; ++o) {
    for (int64_t in = 0; in < inner; ++in) {
      const int64_t base = o * c * inner + in;
      T mx = a.value()[base];
      for (int64_t k = 1; k < c; ++k) mx = std::max(mx, a.value()[base + k * inner]);
      T z = 0;
      for (int64_t k = 0; k < c; ++k) {
        const T e = std::exp(a.value()[base + k * inner] - mx);
        v[base + k * inner] = e;
        z += e;
      }
      const T inv = T(1) / z;
      for (int64_t k = 0; k < c; ++k) v[base + k * inner] *= inv;
    }
  }
  return detail::make_op<T>(a.shape(), std::move(v), {a.node()},
                            [outer, c, inner](TensorNode<T>& n) {
                              auto& p = *n.parents[0];
                              p.ensure_grad();
                              for (int64_t o = 0; o < outer; ++o) {
                                for (int64_t in = 0; in < inner; ++in) {
                                  const int64_t base = o * c * inner + in;
                                  T dot = 0;
                                  for (int64_t k = 0; k < c; ++k) {
                                    dot += n.grad[base + k * inner] * n.value[base + k * inner];
                                  }
                                  for (int64_t k = 0; k < c; ++k) {
                                    const int64_t i = base + k * inner;
                                    p.grad[i] += n.value[i] * (n.grad[i] - dot);
                                  }
                                }
                              }
                            });
}

// Cross-correlation with dilation over [N,C,H,W]; kernel [O,C,kh,kw], optional
// bias [O]. Gradients flow to input, kernel and bias.
template <class T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& kernel, const Tensor<T>& bias,
                 const kernels::Conv2dSpec& spec) {
  if (x.rank() != 4 || kernel.rank() != 4) throw Error("conv shape mismatch", "rank");
  if (x.dim(1) != kernel.dim(1)) throw Error("conv shape mismatch", "channel count");
  const bool has_bias = bias.defined();
  if (has_bias && bias.size() != kernel.dim(0)) throw Error("conv shape mismatch", "bias");

  const auto d = kernels::conv_dims<T>(x.dim(0), x.dim(1), x.dim(2), x.dim(3), kernel.dim(0),
                                       static_cast<int>(kernel.dim(2)),
                                       static_cast<int>(kernel.dim(3)), spec);
  std::vector<T> y(static_cast<size_t>(d.n) * d.o * d.oh * d.ow);
  std::vector<T> col(static_cast<size_t>(d.c) * d.kh * d.kw * d.oh * d.ow);
  kernels::conv2d_forward(x.value().data(), kernel.value().data(),
                          has_bias ? bias.value().data() : nullptr, d, spec, y.data(),
                          col.data());

  std::vector<std::shared_ptr<TensorNode<T>>> parents{x.node(), kernel.node()};
  if (has_bias) parents.push_back(bias.node());
  return detail::make_op<T>(
      {d.n, d.o, d.oh, d.ow}, std::move(y), std::move(parents),
      [d, spec, has_bias](TensorNode<T>& n) {
        auto& px = *n.parents[0];
        auto& pk = *n.parents[1];
        TensorNode<T>* pb = has_bias ? n.parents[2].get() : nullptr;
        const bool need_dx = px.requires_grad;
        const bool need_dk = pk.requires_grad;
        const bool need_db = pb && pb->requires_grad;
        if (need_dx) px.ensure_grad();
        if (need_dk) pk.ensure_grad();
        if (need_db) pb->ensure_grad();
        std::vector<T> col(static_cast<size_t>(d.c) * d.kh * d.kw * d.oh * d.ow);
        kernels::conv2d_backward(px.value.data(), pk.value.data(), n.grad.data(), d, spec,
                                 need_dx ? px.grad.data() : nullptr,
                                 need_dk ? pk.grad.data() : nullptr,
                                 need_db ? pb->grad.data() : nullptr, col.data());
      });
}

template <class T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& kernel, const kernels::Conv2dSpec& spec) {
  return conv2d(x, kernel, Tensor<T>(), spec);
}

// 2x2 average pooling, stride 2. Requires even spatial dims.
template <class T>
Tensor<T> avg_pool2x2(const Tensor<T>& x) {
  if (x.rank() != 4 || x.dim(2) % 2 != 0 || x.dim(3) % 2 != 0) {
    throw Error("shape mismatch", "avg_pool2x2 needs even [N,C,H,W]");
  }
  const int64_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  const int64_t oh = h / 2, ow = w / 2;
  std::vector<T> v(static_cast<size_t>(n) * c * oh * ow);
  for (int64_t pc = 0; pc < n * c; ++pc) {
    const T* src = x.value().data() + pc * h * w;
    T* dst = v.data() + pc * oh * ow;
    for (int64_t i = 0; i < oh; ++i) {
      for (int64_t j = 0; j < ow; ++j) {
        dst[i * ow + j] = (src[2 * i * w + 2 * j] + src[2 * i * w + 2 * j + 1] +
                           src[(2 * i + 1) * w + 2 * j] + src[(2 * i + 1) * w + 2 * j + 1]) *
                          T(0.25);
      }
    }
  }
  return detail::make_op<T>({n, c, oh, ow}, std::move(v), {x.node()},
                            [n, c, h, w, oh, ow](TensorNode<T>& nd) {
                              auto& p = *nd.parents[0];
                              p.ensure_grad();
                              for (int64_t pc = 0; pc < n * c; ++pc) {
                                const T* g = nd.grad.data() + pc * oh * ow;
                                T* dst = p.grad.data() + pc * h * w;
                                for (int64_t i = 0; i < oh; ++i) {
                                  for (int64_t j = 0; j < ow; ++j) {
                                    const T q = g[i * ow + j] * T(0.25);
                                    dst[2 * i * w + 2 * j] += q;
                                    dst[2 * i * w + 2 * j + 1] += q;
                                    dst[(2 * i + 1) * w + 2 * j] += q;
                                    dst[(2 * i + 1) * w + 2 * j + 1] += q;
                                  }
                                }
                              }
                            });
}

// Sub-pixel rearrangement: [N, C*r^2, H, W] -> [N, C, rH, rW].
template <class T>
Tensor<T> pixel_shuffle(const Tensor<T>& x, int r) {
  if (x.rank() != 4) throw Error("shape mismatch", "pixel_shuffle rank");
  const int64_t n = x.dim(0), cin = x.dim(1), h = x.dim(2), w = x.dim(3);
  if (r < 1 || cin % (static_cast<int64_t>(r) * r) != 0) {
    throw Error("indivisible channels", "pixel_shuffle factor " + std::to_string(r));
  }
  const int64_t c = cin / (static_cast<int64_t>(r) * r);
  const int64_t oh = h * r, ow = w * r;
  std::vector<T> v(x.size());
  for (int64_t b = 0; b < n; ++b) {
    for (int64_t oc = 0; oc < c; ++oc) {
      for (int si = 0; si < r; ++si) {
        for (int sj = 0; sj < r; ++sj) {
          const int64_t ic = (oc * r + si) * r + sj;
          const T* src = x.value().data() + ((b * cin + ic) * h) * w;
          T* dst = v.data() + ((b * c + oc) * oh) * ow;
          for (int64_t i = 0; i < h; ++i) {
            for (int64_t j = 0; j < w; ++j) {
              dst[(i * r + si) * ow + (j * r + sj)] = src[i * w + j];
            }
          }
        }
      }
    }
  }
  return detail::make_op<T>(
      {n, c, oh, ow}, std::move(v), {x.node()}, [n, cin, c, h, w, r, oh, ow](TensorNode<T>& nd) {
        auto& p = *nd.parents[0];
        p.ensure_grad();
        for (int64_t b = 0; b < n; ++b) {
          for (int64_t oc = 0; oc < c; ++oc) {
            for (int si = 0; si < r; ++si) {
              for (int sj = 0; sj < r; ++sj) {
                const int64_t ic = (oc * r + si) * r + sj;
                T* dst = p.grad.data() + ((b * cin + ic) * h) * w;
                const T* g = nd.grad.data() + ((b * c + oc) * oh) * ow;
                for (int64_t i = 0; i < h; ++i) {
                  for (int64_t j = 0; j < w; ++j) {
                    dst[i * w + j] += g[(i * r + si) * ow + (j * r + sj)];
                  }
                }
              }
            }
          }
        }
      });
}

namespace detail {

struct BilinearTap {
  int64_t lo, hi;
  double frac;
};

inline std::vector<BilinearTap> bilinear_taps(int64_t in, int64_t out) {
  // align_corners = false convention.
  std::vector<BilinearTap> taps(out);
  const double scale = static_cast<double>(in) / out;
  for (int64_t i = 0; i < out; ++i) {
    double src = (i + 0.5) * scale - 0.5;
    if (src < 0) src = 0;
    int64_t lo = static_cast<int64_t>(src);
    if (lo > in - 1) lo = in - 1;
    int64_t hi = lo + 1 < in ? lo + 1 : in - 1;
    taps[i] = {lo, hi, src - lo};
  }
  return taps;
}

}  // namespace detail

// Bilinear upsampling to (out_h, out_w); upsampling only.
template <class T>
Tensor<T> bilinear_upsample(const Tensor<T>& x, int64_t out_h, int64_t out_w) {
  if (x.rank() != 4) throw Error("shape mismatch", "bilinear_upsample rank");
  const int64_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  if (out_h < h || out_w < w) {
    throw Error("downscaling request", "bilinear_upsample target below source");
  }
  const auto ty = detail::bilinear_taps(h, out_h);
  const auto tx = detail::bilinear_taps(w, out_w);
  std::vector<T> v(static_cast<size_t>(n) * c * out_h * out_w);
  for (int64_t pc = 0; pc < n * c; ++pc) {
    const T* src = x.value().data() + pc * h * w;
    T* dst = v.data() + pc * out_h * out_w;
    for (int64_t i = 0; i < out_h; ++i) {
      const auto& a = ty[i];
      for (int64_t j = 0; j < out_w; ++j) {
        const auto& b = tx[j];
        const T v00 = src[a.lo * w + b.lo], v01 = src[a.lo * w + b.hi];
        const T v10 = src[a.hi * w + b.lo], v11 = src[a.hi * w + b.hi];
        const T top = v00 + static_cast<T>(b.frac) * (v01 - v00);
        const T bot = v10 + static_cast<T>(b.frac) * (v11 - v10);
        dst[i * out_w + j] = top + static_cast<T>(a.frac) * (bot - top);
      }
    }
  }
  return detail::make_op<T>(
      {n, c, out_h, out_w}, std::move(v), {x.node()},
      [n, c, h, w, out_h, out_w, ty, tx](TensorNode<T>& nd) {
        auto& p = *nd.parents[0];
        p.ensure_grad();
        for (int64_t pc = 0; pc < n * c; ++pc) {
          const T* g = nd.grad.data() + pc * out_h * out_w;
          T* dst = p.grad.data() + pc * h * w;
          for (int64_t i = 0; i < out_h; ++i) {
            const auto& a = ty[i];
            const T fy = static_cast<T>(a.frac);
            for (int64_t j = 0; j < out_w; ++j) {
              const auto& b = tx[j];
              const T fx = static_cast<T>(b.frac);
              const T gv = g[i * out_w + j];
              dst[a.lo * w + b.lo] += gv * (1 - fy) * (1 - fx);
              dst[a.lo * w + b.hi] += gv * (1 - fy) * fx;
              dst[a.hi * w + b.lo] += gv * fy * (1 - fx);
              dst[a.hi * w + b.hi] += gv * fy * fx;
            }
          }
        }
      });
}

// Per-(sample, channel) standardization of [N,C,H,W] feature planes.
template <class T>
Tensor<T> instance_norm(const Tensor<T>& x, T eps) {
  if (x.rank() != 4) throw Error("shape mismatch", "instance_norm rank");
  const int64_t planes = x.dim(0) * x.dim(1);
  const int64_t m = x.dim(2) * x.dim(3);
  if (m < 1) throw Error("shape mismatch", "instance_norm empty plane");
  std::vector<T> v(x.size());
  std::vector<T> inv_std(planes);
  for (int64_t pc = 0; pc < planes; ++pc) {
    const T* src = x.value().data() + pc * m;
    T mu = 0;
    for (int64_t i = 0; i < m; ++i) mu += src[i];
    mu /= static_cast<T>(m);
    T var = 0;
    for (int64_t i = 0; i < m; ++i) var += (src[i] - mu) * (src[i] - mu);
    var /= static_cast<T>(m);
    const T is = T(1) / std::sqrt(var + eps);
    inv_std[pc] = is;
    T* dst = v.data() + pc * m;
    for (int64_t i = 0; i < m; ++i) dst[i] = (src[i] - mu) * is;
  }
  return detail::make_op<T>(
      x.shape(), std::move(v), {x.node()},
      [planes, m, inv_std = std::move(inv_std)](TensorNode<T>& nd) {
        auto& p = *nd.parents[0];
        p.ensure_grad();
        for (int64_t pc = 0; pc < planes; ++pc) {
          const T* g = nd.grad.data() + pc * m;
          const T* y = nd.value.data() + pc * m;
          T* dst = p.grad.data() + pc * m;
          T gsum = 0, gysum = 0;
          for (int64_t i = 0; i < m; ++i) {
            gsum += g[i];
            gysum += g[i] * y[i];
          }
          const T gmean = gsum / static_cast<T>(m);
          const T gymean = gysum / static_cast<T>(m);
          const T is = inv_std[pc];
          for (int64_t i = 0; i < m; ++i) {
            dst[i] += is * (g[i] - gmean - y[i] * gymean);
          }
        }
      });
}

// Inverted dropout: keeps with probability 1-p and scales by 1/(1-p) during
// training; identity in inference. The mask is drawn from the shared stream.
template <class T>
Tensor<T> dropout(const Tensor<T>& x, double p, bool training, Rng& rng) {
  if (p < 0.0 || p >= 1.0) throw Error("invalid probability", "dropout p");
  if (!training || p == 0.0) {
    std::vector<T> v = x.value();
    return detail::make_op<T>(x.shape(), std::move(v), {x.node()}, [](TensorNode<T>& n) {
      auto& pr = *n.parents[0];
      pr.ensure_grad();
      for (size_t i = 0; i < n.grad.size(); ++i) pr.grad[i] += n.grad[i];
    });
  }
  const T scale = static_cast<T>(1.0 / (1.0 - p));
  std::vector<T> mask(x.size());
  for (int64_t i = 0; i < x.size(); ++i) mask[i] = rng.bernoulli(p) ? T(0) : scale;
  std::vector<T> v(x.size());
  for (int64_t i = 0; i < x.size(); ++i) v[i] = x.value()[i] * mask[i];
  return detail::make_op<T>(x.shape(), std::move(v), {x.node()},
                            [mask = std::move(mask)](TensorNode<T>& n) {
                              auto& pr = *n.parents[0];
                              pr.ensure_grad();
                              for (size_t i = 0; i < n.grad.size(); ++i)
                                pr.grad[i] += n.grad[i] * mask[i];
                            });
}

}  // namespace panoseg
