#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <utility>
#include <vector>

#include "panoseg/labels.hpp"
#include "panoseg/ops.hpp"
#include "panoseg/rng.hpp"
#include "panoseg/tensor.hpp"

namespace panoseg {

template <class T>
struct LossReport {
  T d_loss = 0;
  T g_adv_loss = 0;
  T lovasz_loss = 0;
  T gp_term = 0;
  T total_g = 0;
};

// ---------------------------------------------------------------------------
// Lovasz extension of the Jaccard loss
// ---------------------------------------------------------------------------

// Weight vector of the Lovasz extension for a descending error vector:
// g_k = J(first k errors active) - J(first k-1 active). A class absent from
// the ground truth contributes nothing (all-zero weights).
template <class T>
std::vector<T> lovasz_grad(const std::vector<T>& errors_sorted_desc,
                           const std::vector<uint8_t>& gt_sorted) {
  const size_t n = gt_sorted.size();
  if (errors_sorted_desc.size() != n || n == 0) {
    throw Error("shape mismatch", "lovasz_grad input lengths");
  }
  for (size_t i = 1; i < n; ++i) {
    if (errors_sorted_desc[i] > errors_sorted_desc[i - 1]) {
      throw Error("unsorted errors", "lovasz_grad expects descending errors");
    }
  }
  T positives = 0;
  for (uint8_t b : gt_sorted) positives += static_cast<T>(b);
  std::vector<T> g(n, T(0));
  if (positives == T(0)) return g;

  T cum_gt = 0;
  T prev_jaccard = 0;  // J(empty error set) = 0
  for (size_t k = 0; k < n; ++k) {
    cum_gt += static_cast<T>(gt_sorted[k]);
    const T intersection = positives - cum_gt;
    const T uni = positives + (static_cast<T>(k) + 1 - cum_gt);
    const T jaccard = T(1) - intersection / uni;
    g[k] = jaccard - prev_jaccard;
    prev_jaccard = jaccard;
  }
  return g;
}

namespace detail {

// Stable descending order by value, original index breaking ties.
template <class T>
std::vector<int64_t> descending_order(const std::vector<T>& values) {
  std::vector<int64_t> order(values.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](int64_t a, int64_t b) { return values[a] > values[b]; });
  return order;
}

template <class T>
void check_normalized(const Tensor<T>& probs, int64_t n, int64_t c, int64_t hw) {
  for (int64_t b = 0; b < n; ++b) {
    for (int64_t i = 0; i < hw; ++i) {
      T s = 0;
      for (int64_t ch = 0; ch < c; ++ch) s += probs.value()[(b * c + ch) * hw + i];
      if (std::abs(s - T(1)) > T(1e-5)) {
        throw Error("probabilities not normalized",
                    "pixel channel sum " + std::to_string(static_cast<double>(s)));
      }
    }
  }
}

}  // namespace detail

// Lovasz-Softmax over a batch: probs [N,C,H,W] (or [C,H,W]), one segment map
// per sample. Pixels of all samples are pooled; the loss averages the Lovasz
// extension over the classes present in the pooled ground truth. Pixels
// labeled ignore_id are excluded.
template <class T>
Tensor<T> lovasz_softmax(const Tensor<T>& probs_in, std::span<const SegmentMap> labels,
                         int ignore_id = 0) {
  Tensor<T> probs = probs_in;
  if (probs.rank() == 3) probs = reshape(probs, {1, probs.dim(0), probs.dim(1), probs.dim(2)});
  if (probs.rank() != 4) throw Error("shape mismatch", "lovasz_softmax expects [N,C,H,W]");
  const int64_t n = probs.dim(0), c = probs.dim(1), h = probs.dim(2), w = probs.dim(3);
  if (static_cast<int64_t>(labels.size()) != n) {
    throw Error("shape mismatch", "lovasz_softmax label count");
  }
  for (const auto& m : labels) {
    if (m.height() != h || m.width() != w) {
      throw Error("shape mismatch", "lovasz_softmax label dims");
    }
  }
  const int64_t hw = h * w;
  detail::check_normalized(probs, n, c, hw);

  // Pooled valid pixels: (sample, pixel) pairs with a real label.
  std::vector<int64_t> pix_base;  // flat offset of channel 0 for that pixel
  std::vector<uint8_t> pix_label;
  std::vector<uint8_t> present(static_cast<size_t>(c), 0);
  for (int64_t b = 0; b < n; ++b) {
    const auto& ids = labels[b].ids();
    for (int64_t i = 0; i < hw; ++i) {
      if (ids[i] == ignore_id) continue;
      if (ids[i] >= c) throw Error("shape mismatch", "label id exceeds channel count");
      pix_base.push_back(b * c * hw + i);
      pix_label.push_back(ids[i]);
      present[ids[i]] = 1;
    }
  }
  if (pix_base.empty()) return Tensor<T>::scalar(T(0));

  Tensor<T> total = Tensor<T>::scalar(T(0));
  int evaluated = 0;
  for (int64_t cls = 0; cls < c; ++cls) {
    if (!present[cls] || cls == ignore_id) continue;
    ++evaluated;
    // m_i = 1 - p_i(cls) on foreground pixels, p_i(cls) otherwise.
    std::vector<int64_t> idx(pix_base.size());
    std::vector<T> coeff(pix_base.size()), offset(pix_base.size());
    for (size_t i = 0; i < pix_base.size(); ++i) {
      idx[i] = pix_base[i] + cls * hw;
      const bool fg = pix_label[i] == cls;
      coeff[i] = fg ? T(-1) : T(1);
      offset[i] = fg ? T(1) : T(0);
    }
    auto errors = affine_const(gather(probs, std::move(idx)), std::move(coeff), std::move(offset));
    const auto order = detail::descending_order(errors.value());
    std::vector<T> sorted_vals(order.size());
    std::vector<uint8_t> gt_sorted(order.size());
    for (size_t i = 0; i < order.size(); ++i) {
      sorted_vals[i] = errors.value()[order[i]];
      gt_sorted[i] = pix_label[order[i]] == cls ? 1 : 0;
    }
    auto weights = lovasz_grad(sorted_vals, gt_sorted);
    total = add(total, dot_const(gather(errors, order), std::move(weights)));
  }
  return mul_scalar(total, T(1) / static_cast<T>(evaluated));
}

template <class T>
Tensor<T> lovasz_softmax(const Tensor<T>& probs, const SegmentMap& labels, int ignore_id = 0) {
  return lovasz_softmax(probs, std::span<const SegmentMap>(&labels, 1), ignore_id);
}

// Mean squared error guiding loss (ablation switch).
template <class T>
Tensor<T> mse_loss(const Tensor<T>& pred, const Tensor<T>& target) {
  auto d = sub(pred, target);
  return mean(mul(d, d));
}

// ---------------------------------------------------------------------------
// WGAN-GP
// ---------------------------------------------------------------------------

// A critic maps a candidate tensor [N,...] to one patch-averaged score per
// sample. score() with frozen_params detaches the parameters so backward
// reaches only the input; score_with_tangent() additionally propagates a
// directional derivative w.r.t. the input along v, built on the tape so it
// stays differentiable w.r.t. the parameters.
template <class T>
class Critic {
 public:
  virtual ~Critic() = default;
  virtual Tensor<T> score(const Tensor<T>& x, bool frozen_params) = 0;
  virtual std::pair<Tensor<T>, Tensor<T>> score_with_tangent(const Tensor<T>& x,
                                                             const Tensor<T>& v) = 0;
};

// lambda * E[(||grad_xhat D(xhat)||_2 - 1)^2] over straight-line interpolates
// xhat = eps*real + (1-eps)*fake. The returned node carries that exact value;
// its parameter gradient is routed through a tangent (forward-over-reverse)
// pass, exact for piecewise-linear critics.
template <class T>
Tensor<T> gradient_penalty(Critic<T>& critic, const Tensor<T>& real, const Tensor<T>& fake,
                           T lambda, Rng& rng) {
  if (real.shape() != fake.shape()) throw Error("shape mismatch", "gradient_penalty batches");
  const int64_t n = real.dim(0);
  const int64_t inner = real.size() / n;

  std::vector<T> xhat(real.size());
  for (int64_t b = 0; b < n; ++b) {
    const T eps = static_cast<T>(rng.uniform());
    for (int64_t i = 0; i < inner; ++i) {
      const int64_t k = b * inner + i;
      xhat[k] = eps * real.value()[k] + (T(1) - eps) * fake.value()[k];
    }
  }
  auto xhat_leaf = Tensor<T>::leaf(real.shape(), std::move(xhat), /*requires_grad=*/true);
  auto s = critic.score(xhat_leaf, /*frozen_params=*/true);
  backward(sum(s));
  // A critic ignoring its input leaves no gradient behind; that is a zero field.
  const std::vector<T> g =
      xhat_leaf.has_grad() ? xhat_leaf.grad() : std::vector<T>(real.size(), T(0));

  auto v = Tensor<T>::constant(real.shape(), g);
  auto [s2, q] = critic.score_with_tangent(xhat_leaf.detached(), v);
  if (q.size() != n) throw Error("shape mismatch", "critic tangent score");

  // Per sample: c*q + ((|g|-1)^2 - c*q0) has the exact penalty value and the
  // exact parameter gradient c*dq.
  std::vector<T> coeff(n), offset(n);
  const T scale = lambda / static_cast<T>(n);
  for (int64_t b = 0; b < n; ++b) {
    T sq = 0;
    for (int64_t i = 0; i < inner; ++i) sq += g[b * inner + i] * g[b * inner + i];
    const T norm = std::sqrt(sq);
    const T norm_safe = std::sqrt(sq + T(1e-12));
    const T c = T(2) * (norm_safe - T(1)) / norm_safe;
    coeff[b] = scale * c;
    offset[b] = scale * ((norm - T(1)) * (norm - T(1)) - c * q.value()[b]);
  }
  return sum(affine_const(q, std::move(coeff), std::move(offset)));
}

// E[D(fake)] - E[D(real)] + gradient penalty. Detaching fake (no gradient to
// its producer) is the caller's choice.
template <class T>
Tensor<T> wgan_gp_d_loss(Critic<T>& critic, const Tensor<T>& real, const Tensor<T>& fake,
                         T lambda, Rng& rng) {
  if (real.shape() != fake.shape()) throw Error("shape mismatch", "wgan_gp_d_loss batches");
  auto loss = sub(mean(critic.score(fake, false)), mean(critic.score(real, false)));
  return add(loss, gradient_penalty(critic, real, fake, lambda, rng));
}

// -E[D(fake)] with the critic parameters frozen; gradients reach the
// generator through fake.
template <class T>
Tensor<T> wgan_g_loss(Critic<T>& critic, const Tensor<T>& fake) {
  return neg(mean(critic.score(fake, /*frozen_params=*/true)));
}

// L = L_adv + L_guiding, unweighted.
template <class T>
Tensor<T> total_generator_loss(const Tensor<T>& adv, const Tensor<T>& guiding) {
  return add(adv, guiding);
}

}  // namespace panoseg
