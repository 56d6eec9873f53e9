// Timing comparison of the parallel kernels against their serial references.

#include <chrono>
#include <cstdio>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "panoseg/geometry.hpp"
#include "panoseg/kernels.hpp"
#include "panoseg/rng.hpp"

using namespace panoseg;
using Clock = std::chrono::steady_clock;

namespace {

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

template <class F>
double time_best_of(int reps, F&& fn) {
  double best = 1e30;
  for (int i = 0; i < reps; ++i) {
    const auto t0 = Clock::now();
    fn();
    best = std::min(best, seconds_since(t0));
  }
  return best;
}

template <class T>
std::vector<T> random_vec(size_t n, Rng& rng) {
  std::vector<T> v(n);
  for (auto& x : v) x = static_cast<T>(rng.uniform(-1, 1));
  return v;
}

template <class T>
void bench_gemm(const char* label, int64_t m, int64_t k, int64_t n) {
  Rng rng(1);
  auto a = random_vec<T>(m * k, rng);
  auto b = random_vec<T>(k * n, rng);
  std::vector<T> c(m * n);
  const double flops = 2.0 * m * k * n;

  const double serial = time_best_of(3, [&] {
    std::fill(c.begin(), c.end(), T(0));
    kernels::reference::gemm_nn(a.data(), b.data(), c.data(), m, k, n);
  });
  const double parallel = time_best_of(3, [&] {
    std::fill(c.begin(), c.end(), T(0));
    kernels::gemm_nn(a.data(), b.data(), c.data(), m, k, n);
  });
  std::printf(
      "%-20s %5lldx%lldx%lld  serial %8.3f ms (%6.2f GF/s)  parallel %8.3f ms (%6.2f GF/s)  "
      "x%.2f\n",
      label, static_cast<long long>(m), static_cast<long long>(k), static_cast<long long>(n),
      serial * 1e3, flops / serial * 1e-9, parallel * 1e3, flops / parallel * 1e-9,
      serial / parallel);
}

template <class T>
void bench_conv(const char* label, int64_t n, int64_t cin, int64_t cout, int64_t h, int64_t w) {
  kernels::Conv2dSpec spec;
  spec.pad_h = spec.pad_w = 1;
  const auto d = kernels::conv_dims<T>(n, cin, h, w, cout, 3, 3, spec);
  Rng rng(2);
  auto x = random_vec<T>(d.n * d.c * d.h * d.w, rng);
  auto kernel = random_vec<T>(d.o * d.c * 9, rng);
  auto bias = random_vec<T>(d.o, rng);
  std::vector<T> y(d.n * d.o * d.oh * d.ow);
  std::vector<T> col(static_cast<size_t>(d.c) * 9 * d.oh * d.ow);
  const double flops = 2.0 * d.n * d.o * d.oh * d.ow * d.c * 9;

  const double serial = time_best_of(3, [&] {
    kernels::reference::conv2d_forward(x.data(), kernel.data(), bias.data(), d, spec, y.data());
  });
  const double parallel = time_best_of(3, [&] {
    kernels::conv2d_forward(x.data(), kernel.data(), bias.data(), d, spec, y.data(), col.data());
  });
  std::printf(
      "%-20s N%lld %lldx%lld %lld->%lld  naive %8.3f ms (%6.2f GF/s)  im2col+omp %8.3f ms "
      "(%6.2f GF/s)  x%.2f\n",
      label, static_cast<long long>(n), static_cast<long long>(h), static_cast<long long>(w),
      static_cast<long long>(cin), static_cast<long long>(cout), serial * 1e3,
      flops / serial * 1e-9, parallel * 1e3, flops / parallel * 1e-9, serial / parallel);
}

void bench_projection() {
  ProjectionConfig cfg;
  cfg.width = 2048;
  cfg.height = 64;
  cfg.fov_up = 3.0 * 3.14159265358979 / 180.0;
  cfg.fov_down = 25.0 * 3.14159265358979 / 180.0;
  Rng rng(3);
  std::vector<LidarPoint> pts;
  for (int i = 0; i < 130000; ++i) {
    const double az = rng.uniform(-3.14, 3.14);
    const double el = rng.uniform(-cfg.fov_down, cfg.fov_up);
    const double r = rng.uniform(2.0, 80.0);
    pts.push_back({r * std::cos(el) * std::cos(az), r * std::cos(el) * std::sin(az),
                   r * std::sin(el), 0.5});
  }
  PointCloud cloud(std::move(pts));
  const double t = time_best_of(3, [&] { (void)project_cloud(cloud, cfg); });
  std::printf("%-20s 130k points -> 2048x64  %8.3f ms (%.1f Mpts/s)\n", "project_cloud", t * 1e3,
              0.13 / t);
}

}  // namespace

int main() {
#ifdef _OPENMP
  std::printf("OpenMP threads: %d\n", omp_get_max_threads());
#else
  std::printf("OpenMP: disabled\n");
#endif
  bench_gemm<float>("gemm_nn<float>", 256, 256, 256);
  bench_gemm<double>("gemm_nn<double>", 256, 256, 256);
  bench_gemm<float>("gemm_nn<float>", 16, 144, 8192);
  bench_conv<float>("conv3x3<float>", 4, 16, 16, 64, 128);
  bench_conv<double>("conv3x3<double>", 4, 16, 16, 64, 128);
  bench_projection();
  return 0;
}
