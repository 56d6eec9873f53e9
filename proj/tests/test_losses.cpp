#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "gradcheck.hpp"
#include "panoseg/losses.hpp"

using namespace panoseg;
using panoseg::testing::check_gradients;

namespace {

// Discrete Jaccard loss of an error set against a binary ground truth.
// Convention: a ground truth with no positives contributes loss 0.
double jaccard_loss(const std::vector<uint8_t>& gt, const std::vector<uint8_t>& err) {
  int positives = 0;
  for (uint8_t b : gt) positives += b;
  if (positives == 0) return 0.0;
  int inter = 0, uni = 0;
  for (size_t i = 0; i < gt.size(); ++i) {
    const int pred = gt[i] ^ err[i];
    inter += pred & gt[i];
    uni += pred | gt[i];
  }
  return 1.0 - static_cast<double>(inter) / static_cast<double>(uni);
}

// Independent Lovasz-extension oracle: E(m) = integral over t in [0,1] of
// J({i : m_i > t}). Piecewise-constant integration over sorted thresholds.
double lovasz_extension_oracle(const std::vector<uint8_t>& gt, const std::vector<double>& m) {
  std::vector<double> cuts = m;
  cuts.push_back(0.0);
  cuts.push_back(1.0);
  std::sort(cuts.begin(), cuts.end());
  double total = 0.0;
  for (size_t k = 0; k + 1 < cuts.size(); ++k) {
    const double lo = cuts[k], hi = cuts[k + 1];
    if (hi <= lo) continue;
    const double mid = 0.5 * (lo + hi);
    std::vector<uint8_t> active(m.size());
    for (size_t i = 0; i < m.size(); ++i) active[i] = m[i] > mid ? 1 : 0;
    total += (hi - lo) * jaccard_loss(gt, active);
  }
  return total;
}

// Extension value through the implementation path: sort desc, dot with the
// lovasz_grad weights.
double extension_value(const std::vector<uint8_t>& gt, const std::vector<double>& m) {
  std::vector<int64_t> order(m.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int64_t a, int64_t b) { return m[a] > m[b]; });
  std::vector<double> sorted(m.size());
  std::vector<uint8_t> gt_sorted(m.size());
  for (size_t i = 0; i < m.size(); ++i) {
    sorted[i] = m[order[i]];
    gt_sorted[i] = gt[order[i]];
  }
  auto g = lovasz_grad(sorted, gt_sorted);
  double s = 0;
  for (size_t i = 0; i < m.size(); ++i) s += sorted[i] * g[i];
  return s;
}

// Test critics ------------------------------------------------------------

class LinearCritic : public Critic<double> {
 public:
  LinearCritic(Tensor<double> w, double bias = 0.0) : w_(std::move(w)), bias_(bias) {}

  Tensor<double> score(const Tensor<double>& x, bool frozen_params) override {
    auto weights = frozen_params ? w_.detached() : w_;
    auto flat = reshape(x, {x.dim(0), x.size() / x.dim(0)});
    return add_scalar(matmul_vec(flat, weights), bias_);
  }

  std::pair<Tensor<double>, Tensor<double>> score_with_tangent(const Tensor<double>& x,
                                                               const Tensor<double>& v) override {
    auto s = score(x, false);
    auto flat_v = reshape(v, {v.dim(0), v.size() / v.dim(0)});
    return {s, matmul_vec(flat_v, w_)};
  }

  Tensor<double> w_;
  double bias_;
};

class ConstantCritic : public Critic<double> {
 public:
  explicit ConstantCritic(double c) : c_(c) {}
  Tensor<double> score(const Tensor<double>& x, bool) override {
    return Tensor<double>::full({x.dim(0)}, c_);
  }
  std::pair<Tensor<double>, Tensor<double>> score_with_tangent(const Tensor<double>& x,
                                                               const Tensor<double>&) override {
    return {score(x, false), Tensor<double>::zeros({x.dim(0)})};
  }
  double c_;
};

SegmentMap map_from(const std::vector<uint8_t>& ids, int w, int h) {
  return SegmentMap(w, h, ids);
}

// Normalized probability tensor [C,h,w] from positive raw weights.
Tensor<double> probs_from_raw(std::vector<double> raw, int c, int h, int w, bool track = true) {
  const int64_t hw = static_cast<int64_t>(h) * w;
  for (int64_t i = 0; i < hw; ++i) {
    double s = 0;
    for (int ch = 0; ch < c; ++ch) s += raw[ch * hw + i];
    for (int ch = 0; ch < c; ++ch) raw[ch * hw + i] /= s;
  }
  return Tensor<double>::leaf({c, h, w}, std::move(raw), track);
}

}  // namespace

// ---------------------------------------------------------------------------
// lovasz_grad
// ---------------------------------------------------------------------------

TEST_CASE("absent class yields all-zero weights") {
  auto g = lovasz_grad<double>({0.9, 0.5, 0.1}, {0, 0, 0});
  for (double x : g) CHECK(x == 0.0);
}

TEST_CASE("single foreground error on a two-positive ground truth costs one half") {
  // gt_sorted (1,1,0,0); the first error is the foreground pixel in error:
  // J({first}) - J({}) = 0.5.
  auto g = lovasz_grad<double>({1.0, 0.0, 0.0, 0.0}, {1, 1, 0, 0});
  CHECK(g[0] == doctest::Approx(0.5));
  double ext = 1.0 * g[0];
  CHECK(ext == doctest::Approx(0.5));
}

TEST_CASE("weights sum to one whenever the class is present") {
  Rng rng(11);
  for (int trial = 0; trial < 50; ++trial) {
    const size_t n = 1 + rng.uniform_index(12);
    std::vector<double> err(n);
    for (auto& e : err) e = rng.uniform();
    std::sort(err.begin(), err.end(), std::greater<>());
    std::vector<uint8_t> gt(n);
    bool any = false;
    for (auto& b : gt) {
      b = rng.bernoulli(0.4) ? 1 : 0;
      any = any || b;
    }
    if (!any) gt[rng.uniform_index(n)] = 1;
    auto g = lovasz_grad(err, gt);
    CHECK(std::accumulate(g.begin(), g.end(), 0.0) == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("unsorted errors are rejected") {
  CHECK_THROWS_WITH_AS(lovasz_grad<double>({0.1, 0.9}, {1, 0}), doctest::Contains("unsorted"),
                       Error);
}

TEST_CASE("extension equals the discrete Jaccard loss at every binary vertex") {
  // Exhaustive: for each ground-truth pattern, all 2^n binary error vectors.
  Rng rng(13);
  for (size_t n = 1; n <= 10; ++n) {
    std::vector<std::vector<uint8_t>> gts;
    if (n <= 5) {
      for (uint32_t bits = 0; bits < (1u << n); ++bits) {
        std::vector<uint8_t> gt(n);
        for (size_t i = 0; i < n; ++i) gt[i] = (bits >> i) & 1;
        gts.push_back(gt);
      }
    } else {
      for (int t = 0; t < 8; ++t) {
        std::vector<uint8_t> gt(n);
        for (auto& b : gt) b = rng.bernoulli(0.5) ? 1 : 0;
        gts.push_back(gt);
      }
    }
    for (const auto& gt : gts) {
      for (uint32_t bits = 0; bits < (1u << n); ++bits) {
        std::vector<uint8_t> err(n);
        std::vector<double> m(n);
        for (size_t i = 0; i < n; ++i) {
          err[i] = (bits >> i) & 1;
          m[i] = err[i];
        }
        const double ext = extension_value(gt, m);
        const double oracle = jaccard_loss(gt, err);
        REQUIRE(std::abs(ext - oracle) <= 1e-12);
      }
    }
  }
}

TEST_CASE("extension matches the threshold-integral oracle on fractional errors") {
  Rng rng(17);
  for (int trial = 0; trial < 200; ++trial) {
    const size_t n = 1 + rng.uniform_index(9);
    std::vector<double> m(n);
    for (auto& e : m) e = rng.uniform();
    std::vector<uint8_t> gt(n);
    for (auto& b : gt) b = rng.bernoulli(0.5) ? 1 : 0;
    const double ext = extension_value(gt, m);
    const double oracle = lovasz_extension_oracle(gt, m);
    REQUIRE(ext == doctest::Approx(oracle).epsilon(1e-10));
  }
}

TEST_CASE("raising any error never lowers the extension") {
  Rng rng(19);
  for (int trial = 0; trial < 200; ++trial) {
    const size_t n = 2 + rng.uniform_index(8);
    std::vector<double> m(n);
    for (auto& e : m) e = rng.uniform();
    std::vector<uint8_t> gt(n);
    bool any = false;
    for (auto& b : gt) {
      b = rng.bernoulli(0.5) ? 1 : 0;
      any = any || b;
    }
    if (!any) gt[0] = 1;
    auto m2 = m;
    const size_t j = rng.uniform_index(n);
    m2[j] = std::min(1.0, m2[j] + rng.uniform(0.0, 1.0 - m2[j]));
    CHECK(extension_value(gt, m2) >= extension_value(gt, m) - 1e-12);
  }
}

// ---------------------------------------------------------------------------
// lovasz_softmax
// ---------------------------------------------------------------------------

TEST_CASE("perfect one-hot predictions have zero loss") {
  SegmentMap map = map_from({1, 2, 1, 3}, 2, 2);
  std::vector<double> raw(4 * 4, 0.0);
  const int64_t hw = 4;
  for (int64_t i = 0; i < hw; ++i) raw[map.ids()[i] * hw + i] = 1.0;
  auto probs = Tensor<double>::leaf({4, 2, 2}, raw, false);
  CHECK(lovasz_softmax(probs, map).item() == doctest::Approx(0.0));
}

TEST_CASE("uniform two-class prediction matches the extension oracle") {
  // Two pixels, one per class (ids 1 and 2 over 3 channels incl. ignore=0).
  SegmentMap map = map_from({1, 2}, 2, 1);
  std::vector<double> raw = {0.0, 0.0, 0.5, 0.5, 0.5, 0.5};  // ch0, ch1, ch2
  auto probs = Tensor<double>::leaf({3, 1, 2}, raw, false);
  const double loss = lovasz_softmax(probs, map).item();
  // Oracle per class: errors (0.5, 0.5) with one foreground pixel each.
  const double per_class = lovasz_extension_oracle({1, 0}, {0.5, 0.5});
  CHECK(loss == doctest::Approx(per_class).epsilon(1e-12));
}

TEST_CASE("lovasz loss stays within the Jaccard range") {
  Rng rng(23);
  for (int trial = 0; trial < 30; ++trial) {
    const int c = 4, h = 3, w = 5;
    std::vector<double> raw(c * h * w);
    for (auto& x : raw) x = rng.uniform(0.05, 1.0);
    auto probs = probs_from_raw(raw, c, h, w, false);
    std::vector<uint8_t> ids(h * w);
    for (auto& id : ids) id = static_cast<uint8_t>(rng.uniform_index(c));
    const double loss = lovasz_softmax(probs, map_from(ids, w, h)).item();
    CHECK(loss >= 0.0);
    CHECK(loss <= 1.0);
  }
}

TEST_CASE("jointly permuting pixels leaves the loss unchanged") {
  Rng rng(29);
  const int c = 4, h = 2, w = 6;
  const int64_t hw = h * w;
  std::vector<double> raw(c * hw);
  for (auto& x : raw) x = rng.uniform(0.05, 1.0);
  auto probs = probs_from_raw(raw, c, h, w, false);
  std::vector<uint8_t> ids(hw);
  for (auto& id : ids) id = static_cast<uint8_t>(rng.uniform_index(c));
  const double base = lovasz_softmax(probs, map_from(ids, w, h)).item();

  auto perm = rng.sample_indices(hw, hw);
  std::vector<double> praw(c * hw);
  std::vector<uint8_t> pids(hw);
  for (int64_t i = 0; i < hw; ++i) {
    pids[i] = ids[perm[i]];
    for (int ch = 0; ch < c; ++ch) praw[ch * hw + i] = probs.value()[ch * hw + perm[i]];
  }
  auto pprobs = Tensor<double>::leaf({c, h, w}, praw, false);
  CHECK(lovasz_softmax(pprobs, map_from(pids, w, h)).item() ==
        doctest::Approx(base).epsilon(1e-12));
}

TEST_CASE("unnormalized probabilities are rejected") {
  SegmentMap map = map_from({1}, 1, 1);
  auto probs = Tensor<double>::leaf({2, 1, 1}, {0.7, 0.4}, false);
  CHECK_THROWS_WITH_AS(lovasz_softmax(probs, map), doctest::Contains("not normalized"), Error);
}

TEST_CASE("ignored pixels do not contribute") {
  // Second pixel is Unlabeled; only the first should matter.
  SegmentMap map = map_from({1, 0}, 2, 1);
  std::vector<double> raw = {0.25, 0.5, 0.75, 0.5};  // ch0: (0.25, 0.75), ch1: (0.75, 0.5)...
  // normalize columns: pixel0: (0.25, 0.75), pixel1: (0.5, 0.5)
  raw = {0.25, 0.5, 0.75, 0.5};
  auto probs = Tensor<double>::leaf({2, 1, 2}, raw, false);
  const double loss = lovasz_softmax(probs, map, /*ignore_id=*/0).item();
  const double oracle = lovasz_extension_oracle({1}, {1.0 - 0.75});
  CHECK(loss == doctest::Approx(oracle).epsilon(1e-12));
}

TEST_CASE("lovasz_softmax gradients match finite differences") {
  Rng rng(31);
  for (int seed = 0; seed < 20; ++seed) {
    const int c = 3, h = 2, w = 3;
    const int64_t hw = h * w;
    std::vector<uint8_t> ids(hw);
    for (auto& id : ids) id = static_cast<uint8_t>(rng.uniform_index(c));
    SegmentMap map = map_from(ids, w, h);

    std::vector<double> raw(c * hw);
    for (auto& x : raw) x = rng.uniform(0.1, 1.0);
    // Pre-normalized leaf; FD perturbation of 1e-6 stays within tolerance.
    const int64_t n_elems = static_cast<int64_t>(raw.size());
    for (int64_t i = 0; i < hw; ++i) {
      double s = 0;
      for (int ch = 0; ch < c; ++ch) s += raw[ch * hw + i];
      for (int ch = 0; ch < c; ++ch) raw[ch * hw + i] /= s;
    }
    auto leaf = Tensor<double>::leaf({c, h, w}, raw, true);
    (void)n_elems;
    check_gradients(
        [&map](const std::vector<Tensor<double>>& in) { return lovasz_softmax(in[0], map); },
        {leaf}, 1e-7);
  }
}

TEST_CASE("lovasz_softmax composed with softmax passes gradient checks") {
  Rng rng(37);
  for (int seed = 0; seed < 10; ++seed) {
    const int c = 3, h = 2, w = 2;
    std::vector<uint8_t> ids(h * w);
    for (auto& id : ids) id = static_cast<uint8_t>(rng.uniform_index(c));
    SegmentMap map = map_from(ids, w, h);
    panoseg::testing::check_op_gradients(
        [&map](const std::vector<Tensor<double>>& in) {
          return lovasz_softmax(softmax(in[0], 0), map);
        },
        {{c, h, w}}, 4100 + seed, -2.0, 2.0);
  }
}

// ---------------------------------------------------------------------------
// WGAN-GP
// ---------------------------------------------------------------------------

TEST_CASE("unit-norm linear critic has zero penalty") {
  Rng rng(41);
  const int64_t n = 4, d = 6;
  std::vector<double> wv(d, 0.0);
  wv[2] = 1.0;  // exact unit norm
  LinearCritic critic(Tensor<double>::leaf({d}, wv, true));
  std::vector<double> rv(n * d), fv(n * d);
  for (auto& x : rv) x = rng.uniform(-1, 1);
  for (auto& x : fv) x = rng.uniform(-1, 1);
  auto real = Tensor<double>::constant({n, d}, rv);
  auto fake = Tensor<double>::constant({n, d}, fv);
  Rng gp_rng(1);
  CHECK(std::abs(gradient_penalty(critic, real, fake, 10.0, gp_rng).item()) <= 1e-9);
}

TEST_CASE("constant critic pays exactly lambda") {
  ConstantCritic critic(3.7);
  auto real = Tensor<double>::zeros({3, 5});
  auto fake = Tensor<double>::full({3, 5}, 0.25);
  Rng rng(2);
  CHECK(gradient_penalty(critic, real, fake, 10.0, rng).item() == 10.0);
}

TEST_CASE("scaled-sum critic matches the analytic norm") {
  Rng rng(43);
  for (int64_t d : {3, 8, 17}) {
    LinearCritic critic(Tensor<double>::full({d}, 2.0, true));
    const int64_t n = 5;
    std::vector<double> rv(n * d), fv(n * d);
    for (auto& x : rv) x = rng.uniform(-1, 1);
    for (auto& x : fv) x = rng.uniform(-1, 1);
    auto real = Tensor<double>::constant({n, d}, rv);
    auto fake = Tensor<double>::constant({n, d}, fv);
    Rng gp_rng(7);
    const double expect = 10.0 * std::pow(2.0 * std::sqrt(static_cast<double>(d)) - 1.0, 2);
    CHECK(gradient_penalty(critic, real, fake, 10.0, gp_rng).item() ==
          doctest::Approx(expect).epsilon(1e-6));
  }
}

TEST_CASE("penalty is non-negative for random linear critics") {
  Rng rng(47);
  for (int trial = 0; trial < 30; ++trial) {
    const int64_t d = 1 + rng.uniform_index(8);
    std::vector<double> wv(d);
    for (auto& x : wv) x = rng.uniform(-2, 2);
    LinearCritic critic(Tensor<double>::leaf({d}, wv, true));
    std::vector<double> rv(3 * d), fv(3 * d);
    for (auto& x : rv) x = rng.uniform(-1, 1);
    for (auto& x : fv) x = rng.uniform(-1, 1);
    auto real = Tensor<double>::constant({3, d}, rv);
    auto fake = Tensor<double>::constant({3, d}, fv);
    Rng gp_rng(trial);
    CHECK(gradient_penalty(critic, real, fake, 10.0, gp_rng).item() >= 0.0);
  }
}

TEST_CASE("penalty gradients match the analytic linear-critic form") {
  // d/dw of lambda*(|w|-1)^2 = 2*lambda*(|w|-1) * w/|w|, independent of the
  // batches for a linear critic.
  Rng rng(53);
  const int64_t d = 5, n = 4;
  std::vector<double> wv(d);
  for (auto& x : wv) x = rng.uniform(0.5, 2.0);
  auto w = Tensor<double>::leaf({d}, wv, true);
  LinearCritic critic(w);
  std::vector<double> rv(n * d), fv(n * d);
  for (auto& x : rv) x = rng.uniform(-1, 1);
  for (auto& x : fv) x = rng.uniform(-1, 1);
  auto real = Tensor<double>::constant({n, d}, rv);
  auto fake = Tensor<double>::constant({n, d}, fv);

  Rng gp_rng(9);
  auto gp = gradient_penalty(critic, real, fake, 10.0, gp_rng);
  backward(gp);
  double norm = 0;
  for (double x : wv) norm += x * x;
  norm = std::sqrt(norm);
  for (int64_t i = 0; i < d; ++i) {
    const double analytic = 2.0 * 10.0 * (norm - 1.0) * wv[i] / norm;
    CHECK(w.grad()[i] == doctest::Approx(analytic).epsilon(1e-9));
  }
}

TEST_CASE("penalty gradients also match finite differences") {
  for (int seed = 0; seed < 20; ++seed) {
    Rng rng(100 + seed);
    const int64_t d = 4, n = 3;
    std::vector<double> rv(n * d), fv(n * d);
    for (auto& x : rv) x = rng.uniform(-1, 1);
    for (auto& x : fv) x = rng.uniform(-1, 1);
    auto real = Tensor<double>::constant({n, d}, rv);
    auto fake = Tensor<double>::constant({n, d}, fv);
    auto w0 = panoseg::testing::make_leaves({{d}}, rng, 0.4, 1.7);
    check_gradients(
        [&](const std::vector<Tensor<double>>& in) {
          LinearCritic critic(in[0]);
          Rng gp_rng(777);  // same interpolates across FD replays
          return gradient_penalty(critic, real, fake, 10.0, gp_rng);
        },
        w0);
  }
}

TEST_CASE("discriminator loss vanishes for identical batches under a unit critic") {
  std::vector<double> wv(4, 0.0);
  wv[1] = 1.0;
  LinearCritic critic(Tensor<double>::leaf({4}, wv, true));
  Rng rng(3);
  std::vector<double> v(2 * 4);
  for (auto& x : v) x = rng.uniform(-1, 1);
  auto real = Tensor<double>::constant({2, 4}, v);
  auto fake = Tensor<double>::constant({2, 4}, v);
  Rng loss_rng(5);
  CHECK(std::abs(wgan_gp_d_loss(critic, real, fake, 10.0, loss_rng).item()) <= 1e-9);
}

TEST_CASE("constant critic discriminator loss equals lambda") {
  ConstantCritic critic(-2.0);
  auto real = Tensor<double>::zeros({3, 4});
  auto fake = Tensor<double>::full({3, 4}, 1.0);
  Rng rng(6);
  CHECK(wgan_gp_d_loss(critic, real, fake, 10.0, rng).item() == doctest::Approx(10.0));
}

TEST_CASE("linear critic discriminator loss matches a hand computation") {
  // D(x) = <w, x>: loss = mean(D(fake)) - mean(D(real)) + lambda*(|w|-1)^2.
  const std::vector<double> wv = {0.5, -1.0, 2.0};
  LinearCritic critic(Tensor<double>::leaf({3}, wv, true));
  const std::vector<double> rv = {1, 0, 0, 0, 1, 0};   // two samples
  const std::vector<double> fv = {0, 0, 1, 1, 1, -1};  // two samples
  auto real = Tensor<double>::constant({2, 3}, rv);
  auto fake = Tensor<double>::constant({2, 3}, fv);
  double mean_real = 0, mean_fake = 0;
  for (int b = 0; b < 2; ++b) {
    for (int i = 0; i < 3; ++i) {
      mean_real += wv[i] * rv[b * 3 + i] / 2.0;
      mean_fake += wv[i] * fv[b * 3 + i] / 2.0;
    }
  }
  double norm = std::sqrt(0.25 + 1.0 + 4.0);
  const double expect = mean_fake - mean_real + 10.0 * (norm - 1.0) * (norm - 1.0);
  Rng rng(8);
  CHECK(wgan_gp_d_loss(critic, real, fake, 10.0, rng).item() ==
        doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("generator loss is minus the mean critic score") {
  ConstantCritic zero(0.0), three(3.0);
  auto fake = Tensor<double>::full({4, 2}, 0.5);
  CHECK(wgan_g_loss(zero, fake).item() == 0.0);
  CHECK(wgan_g_loss(three, fake).item() == -3.0);

  const std::vector<double> wv = {1.0, -2.0};
  LinearCritic critic(Tensor<double>::leaf({2}, wv, true));
  const std::vector<double> fv = {0.5, 0.25, -1.0, 0.5};
  auto batch = Tensor<double>::constant({2, 2}, fv);
  const double expect = -0.5 * ((0.5 - 0.5) + (-1.0 - 1.0));
  CHECK(wgan_g_loss(critic, batch).item() == doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("total generator loss is the plain sum") {
  CHECK(total_generator_loss(Tensor<double>::scalar(0.0), Tensor<double>::scalar(0.0)).item() ==
        0.0);
  CHECK(total_generator_loss(Tensor<double>::scalar(-3.0), Tensor<double>::scalar(0.5)).item() ==
        -2.5);
  const double a = 0.1234567, b = -0.7654321;
  CHECK(total_generator_loss(Tensor<double>::scalar(a), Tensor<double>::scalar(b)).item() ==
        a + b);
}

TEST_CASE("mse guiding loss matches the closed form") {
  auto a = Tensor<double>::leaf({4}, {1, 2, 3, 4}, false);
  auto b = Tensor<double>::leaf({4}, {0, 2, 5, 3}, false);
  CHECK(mse_loss(a, b).item() == doctest::Approx((1.0 + 0.0 + 4.0 + 1.0) / 4.0));
}
