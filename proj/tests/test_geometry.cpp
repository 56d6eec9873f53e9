#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <map>

#include "panoseg/geometry.hpp"
#include "panoseg/rng.hpp"

using namespace panoseg;

namespace {

constexpr double kPi = 3.14159265358979323846;

ProjectionConfig symmetric_config() {
  ProjectionConfig cfg;
  cfg.width = 2048;
  cfg.height = 64;
  cfg.fov_up = 15.0 * kPi / 180.0;
  cfg.fov_down = 15.0 * kPi / 180.0;
  return cfg;
}

ProjectionConfig kitti_config() {
  ProjectionConfig cfg;
  cfg.width = 2048;
  cfg.height = 64;
  cfg.fov_up = 3.0 * kPi / 180.0;
  cfg.fov_down = 25.0 * kPi / 180.0;
  return cfg;
}

PointCloud random_cloud(Rng& rng, size_t n, const ProjectionConfig& cfg) {
  std::vector<LidarPoint> pts;
  pts.reserve(n);
  for (size_t i = 0; i < n; ++i) {
    const double az = rng.uniform(-kPi, kPi);
    const double el = rng.uniform(-cfg.fov_down * 0.98, cfg.fov_up * 0.98);
    const double r = rng.uniform(2.0, 80.0);
    pts.push_back({r * std::cos(el) * std::cos(az), r * std::cos(el) * std::sin(az),
                   r * std::sin(el), rng.uniform()});
  }
  return PointCloud(std::move(pts));
}

}  // namespace

TEST_CASE("project_point maps the forward axis to the image center") {
  auto cfg = symmetric_config();
  auto [u, v] = project_point(10.0, 0.0, 0.0, cfg);
  CHECK(u == doctest::Approx(1024.0).epsilon(1e-12));
  CHECK(v == doctest::Approx(32.0).epsilon(1e-12));
}

TEST_CASE("project_point matches an extended-precision evaluation") {
  // Oracle: the projection formulas evaluated in 50-digit arithmetic for
  // point (1, 1, 0.1) with fov_up=3 deg, fov_down=25 deg, 2048x64.
  auto cfg = kitti_config();
  auto [u, v] = project_point(1.0, 1.0, 0.1, cfg);
  CHECK(u == doctest::Approx(768.0).epsilon(1e-12));
  CHECK(v == doctest::Approx(-2.3878656808828993).epsilon(1e-12));
}

TEST_CASE("project_point rejects the origin") {
  auto cfg = symmetric_config();
  CHECK_THROWS_WITH_AS(project_point(0.0, 0.0, 0.0, cfg), doctest::Contains("degenerate point"),
                       Error);
}

TEST_CASE("projection is monotone in azimuth and elevation") {
  auto cfg = kitti_config();
  Rng rng(7);
  for (int trial = 0; trial < 200; ++trial) {
    const double r = rng.uniform(1.0, 50.0);
    double a1 = rng.uniform(-kPi * 0.99, kPi * 0.99);
    double a2 = rng.uniform(-kPi * 0.99, kPi * 0.99);
    if (a1 > a2) std::swap(a1, a2);
    auto [u1, v1] = project_point(r * std::cos(a1), r * std::sin(a1), 0.0, cfg);
    auto [u2, v2] = project_point(r * std::cos(a2), r * std::sin(a2), 0.0, cfg);
    CHECK(u1 >= u2);  // u decreases as atan2(y,x) increases

    double z1 = rng.uniform(-0.3, 0.3);
    double z2 = rng.uniform(-0.3, 0.3);
    if (z1 > z2) std::swap(z1, z2);
    const double x = rng.uniform(1.0, 20.0);
    auto [ua, va] = project_point(x, 0.0, z1 * x, cfg);
    auto [ub, vb] = project_point(x, 0.0, z2 * x, cfg);
    CHECK(va >= vb);  // v decreases as z grows
  }
}

TEST_CASE("project_cloud stores channels and range for a single point") {
  auto cfg = symmetric_config();
  PointCloud cloud({{10.0, 0.0, 0.0, 0.5}});
  auto res = project_cloud(cloud, cfg);
  int valid_count = 0;
  for (int r = 0; r < cfg.height; ++r) {
    for (int c = 0; c < cfg.width; ++c) {
      if (res.image.valid(r, c)) ++valid_count;
    }
  }
  CHECK(valid_count == 1);
  CHECK(res.image.valid(32, 1024));
  CHECK(res.image.at(0, 32, 1024) == doctest::Approx(10.0));
  CHECK(res.image.at(1, 32, 1024) == doctest::Approx(0.0));
  CHECK(res.image.at(2, 32, 1024) == doctest::Approx(0.0));
  CHECK(res.image.at(3, 32, 1024) == doctest::Approx(0.5));
  CHECK(res.image.at(4, 32, 1024) == doctest::Approx(10.0));
  // fill value everywhere else
  CHECK(res.image.at(0, 0, 0) == RangeImage::kFillValue);
  CHECK(res.image.at(4, 63, 2047) == RangeImage::kFillValue);
}

TEST_CASE("range channel is the 3-4-5 triangle hypotenuse") {
  auto cfg = symmetric_config();
  PointCloud cloud({{3.0, 4.0, 0.0, 0.1}});
  auto res = project_cloud(cloud, cfg);
  double stored_r = -1;
  for (int r = 0; r < cfg.height; ++r) {
    for (int c = 0; c < cfg.width; ++c) {
      if (res.image.valid(r, c)) stored_r = res.image.at(4, r, c);
    }
  }
  CHECK(stored_r == doctest::Approx(5.0).epsilon(1e-12));
}

TEST_CASE("collisions keep the nearest point") {
  auto cfg = symmetric_config();
  // Same direction, different ranges -> same pixel.
  PointCloud cloud({{9.0, 0.0, 0.0, 0.2}, {5.0, 0.0, 0.0, 0.9}});
  auto res = project_cloud(cloud, cfg);
  CHECK(res.image.at(4, 32, 1024) == doctest::Approx(5.0));
  CHECK(res.image.at(3, 32, 1024) == doctest::Approx(0.9));
}

TEST_CASE("project_cloud refuses an empty cloud") {
  auto cfg = symmetric_config();
  PointCloud cloud(std::vector<LidarPoint>{});
  CHECK_THROWS_WITH_AS(project_cloud(cloud, cfg), doctest::Contains("empty cloud"), Error);
}

TEST_CASE("valid pixels reproject into their own cell") {
  auto cfg = kitti_config();
  Rng rng(21);
  for (int scan = 0; scan < 5; ++scan) {
    auto cloud = random_cloud(rng, 5000, cfg);
    auto res = project_cloud(cloud, cfg);
    for (int r = 0; r < cfg.height; ++r) {
      for (int c = 0; c < cfg.width; ++c) {
        if (!res.image.valid(r, c)) continue;
        auto [u, v] = project_point(res.image.at(0, r, c), res.image.at(1, r, c),
                                    res.image.at(2, r, c), cfg);
        int cc = static_cast<int>(std::floor(u));
        int rr = static_cast<int>(std::floor(v));
        cc = std::clamp(cc, 0, cfg.width - 1);
        rr = std::clamp(rr, 0, cfg.height - 1);
        REQUIRE(cc == c);
        REQUIRE(rr == r);
      }
    }
  }
}

TEST_CASE("stored range is the minimum over all colliding points") {
  auto cfg = kitti_config();
  cfg.width = 64;
  cfg.height = 16;  // small grid forces collisions
  Rng rng(333);
  for (int trial = 0; trial < 10; ++trial) {
    auto cloud = random_cloud(rng, 800, cfg);
    auto res = project_cloud(cloud, cfg);
    // Brute-force oracle: min range per pixel over the raw points.
    std::map<std::pair<int, int>, double> expect;
    for (const auto& p : cloud.points()) {
      auto [u, v] = project_point(p.x, p.y, p.z, cfg);
      int c = std::clamp(static_cast<int>(std::floor(u)), 0, cfg.width - 1);
      int r = std::clamp(static_cast<int>(std::floor(v)), 0, cfg.height - 1);
      const double range = std::sqrt(p.x * p.x + p.y * p.y + p.z * p.z);
      auto key = std::make_pair(r, c);
      auto it = expect.find(key);
      if (it == expect.end() || range < it->second) expect[key] = range;
    }
    for (const auto& [key, range] : expect) {
      REQUIRE(res.image.valid(key.first, key.second));
      REQUIRE(res.image.at(4, key.first, key.second) == doctest::Approx(range).epsilon(1e-12));
    }
  }
}

TEST_CASE("full-circle crop is the identity") {
  auto cfg = symmetric_config();
  Rng rng(5);
  auto cloud = random_cloud(rng, 3000, cfg);
  auto res = project_cloud(cloud, cfg);
  auto cropped = crop_to_camera_fov(res.image, 0.0, 2.0 * kPi);
  CHECK(cropped.width() == 2048);
  CHECK(cropped.data() == res.image.data());
  CHECK(cropped.valid_mask() == res.image.valid_mask());
}

TEST_CASE("quarter crop at the forward azimuth is centered on column 1024") {
  auto span = crop_columns(2048, 0.0, kPi / 2.0);
  CHECK(span.width == 512);
  CHECK(span.start == 768);  // columns 768..1279, centered on 1024
}

TEST_CASE("rear-facing crop wraps around the seam") {
  auto span = crop_columns(2048, kPi, kPi / 2.0);
  CHECK(span.width == 512);
  CHECK(span.start == 1792);  // columns 1792..2047 then 0..255
}

TEST_CASE("complementary crop widths sum to the full width") {
  Rng rng(11);
  for (int trial = 0; trial < 100; ++trial) {
    const double fov = rng.uniform(0.05, 2.0 * kPi - 0.05);
    auto a = crop_columns(2048, 0.3, fov);
    auto b = crop_columns(2048, 0.3 + kPi, 2.0 * kPi - fov);
    CHECK(a.width + b.width == 2048);
  }
}

TEST_CASE("cropped slab preserves pixel contents across the wrap") {
  auto cfg = symmetric_config();
  Rng rng(9);
  auto cloud = random_cloud(rng, 4000, cfg);
  auto res = project_cloud(cloud, cfg);
  auto cropped = crop_to_camera_fov(res.image, kPi, kPi / 2.0);
  auto span = crop_columns(2048, kPi, kPi / 2.0);
  for (int j = 0; j < span.width; j += 17) {
    const int src = (span.start + j) % 2048;
    for (int r = 0; r < cfg.height; r += 7) {
      CHECK(cropped.at(4, r, j) == res.image.at(4, r, src));
      CHECK(cropped.valid(r, j) == res.image.valid(r, src));
    }
  }
}
