#include <algorithm>
#include <cmath>
#include <optional>

#include "panoseg/pipeline.hpp"

namespace panoseg {

namespace {

constexpr double kPi = 3.14159265358979323846264338327950288;

double deg(double d) { return d * kPi / 180.0; }

struct Box {
  double cx, cy, hx, hy, z0, z1;
  uint8_t cls;
};

struct Cylinder {
  double cx, cy, radius, z0, z1;
  uint8_t cls;
};

struct Scene {
  double road_half = 4.0;
  double sidewalk_width = 2.0;
  std::vector<Box> boxes;
  std::vector<Cylinder> cylinders;
};

struct Hit {
  double t = 0.0;
  uint8_t cls = kUnlabeled;
};

// Per-class surface reflectance for the intensity channel.
double reflectance(uint8_t cls) { return 0.15 + 0.05 * static_cast<double>(cls); }

uint8_t ground_class(const Scene& scene, double x, double y) {
  (void)x;
  const double a = std::abs(y);
  if (a < scene.road_half) return kRoad;
  if (a < scene.road_half + scene.sidewalk_width) return kSidewalk;
  return kTerrain;
}

std::optional<Hit> hit_ground(const Scene& scene, const std::array<double, 3>& o,
                              const std::array<double, 3>& d, double max_t) {
  if (d[2] >= 0.0) return std::nullopt;
  const double t = -o[2] / d[2];
  if (t <= 1e-9 || t > max_t) return std::nullopt;
  return Hit{t, ground_class(scene, o[0] + t * d[0], o[1] + t * d[1])};
}

std::optional<double> slab_box(const Box& b, const std::array<double, 3>& o,
                               const std::array<double, 3>& d, double max_t) {
  double t0 = 1e-9, t1 = max_t;
  const double lo[3] = {b.cx - b.hx, b.cy - b.hy, b.z0};
  const double hi[3] = {b.cx + b.hx, b.cy + b.hy, b.z1};
  for (int k = 0; k < 3; ++k) {
    if (std::abs(d[k]) < 1e-12) {
      if (o[k] < lo[k] || o[k] > hi[k]) return std::nullopt;
      continue;
    }
    double ta = (lo[k] - o[k]) / d[k];
    double tb = (hi[k] - o[k]) / d[k];
    if (ta > tb) std::swap(ta, tb);
    t0 = std::max(t0, ta);
    t1 = std::min(t1, tb);
    if (t0 > t1) return std::nullopt;
  }
  return t0;
}

std::optional<double> hit_cylinder(const Cylinder& c, const std::array<double, 3>& o,
                                   const std::array<double, 3>& d, double max_t) {
  // Side surface: quadratic in the xy plane.
  const double ox = o[0] - c.cx, oy = o[1] - c.cy;
  const double a = d[0] * d[0] + d[1] * d[1];
  double best = max_t + 1.0;
  if (a > 1e-12) {
    const double b = 2.0 * (ox * d[0] + oy * d[1]);
    const double q = ox * ox + oy * oy - c.radius * c.radius;
    const double disc = b * b - 4.0 * a * q;
    if (disc >= 0.0) {
      const double root = std::sqrt(disc);
      for (double t : {(-b - root) / (2 * a), (-b + root) / (2 * a)}) {
        if (t <= 1e-9 || t >= best || t > max_t) continue;
        const double z = o[2] + t * d[2];
        if (z >= c.z0 && z <= c.z1) best = t;
      }
    }
  }
  // Caps.
  for (double zc : {c.z0, c.z1}) {
    if (std::abs(d[2]) < 1e-12) continue;
    const double t = (zc - o[2]) / d[2];
    if (t <= 1e-9 || t >= best || t > max_t) continue;
    const double x = ox + t * d[0], y = oy + t * d[1];
    if (x * x + y * y <= c.radius * c.radius) best = t;
  }
  if (best > max_t) return std::nullopt;
  return best;
}

std::optional<Hit> raycast(const Scene& scene, const std::array<double, 3>& o,
                           const std::array<double, 3>& d, double max_t) {
  std::optional<Hit> best = hit_ground(scene, o, d, max_t);
  double limit = best ? best->t : max_t;
  for (const auto& b : scene.boxes) {
    if (auto t = slab_box(b, o, d, limit)) {
      best = Hit{*t, b.cls};
      limit = *t;
    }
  }
  for (const auto& c : scene.cylinders) {
    if (auto t = hit_cylinder(c, o, d, limit)) {
      best = Hit{*t, c.cls};
      limit = *t;
    }
  }
  return best;
}

int draw_count(const CountRange& r, Rng& rng) {
  if (r.max <= r.min) return r.min;
  return r.min + static_cast<int>(rng.uniform_index(static_cast<uint64_t>(r.max - r.min + 1)));
}

Scene build_scene(const SyntheticSceneConfig& cfg, Rng& rng) {
  Scene scene;
  scene.road_half = rng.uniform(3.0, 5.0);
  scene.sidewalk_width = rng.uniform(1.5, 2.5);
  const double walk_edge = scene.road_half + scene.sidewalk_width;

  const int n_cars = draw_count(cfg.cars, rng);
  for (int i = 0; i < n_cars; ++i) {
    const double side = rng.bernoulli(0.5) ? 1.0 : -1.0;
    scene.boxes.push_back({side * rng.uniform(6.0, 45.0),
                           rng.uniform(-scene.road_half + 1.2, scene.road_half - 1.2),
                           rng.uniform(1.8, 2.4), rng.uniform(0.8, 1.1), 0.0,
                           rng.uniform(1.4, 1.8), kCar});
  }
  const int n_trucks = draw_count(cfg.trucks, rng);
  for (int i = 0; i < n_trucks; ++i) {
    const double side = rng.bernoulli(0.5) ? 1.0 : -1.0;
    scene.boxes.push_back({side * rng.uniform(10.0, 50.0),
                           rng.uniform(-scene.road_half + 1.4, scene.road_half - 1.4),
                           rng.uniform(3.0, 4.5), rng.uniform(1.2, 1.4), 0.0,
                           rng.uniform(2.6, 3.4), kTruck});
  }
  const int n_buildings = draw_count(cfg.buildings, rng);
  for (int i = 0; i < n_buildings; ++i) {
    const double side = rng.bernoulli(0.5) ? 1.0 : -1.0;
    scene.boxes.push_back({rng.uniform(-50.0, 50.0),
                           side * (walk_edge + rng.uniform(3.0, 14.0)),
                           rng.uniform(4.0, 10.0), rng.uniform(3.0, 8.0), 0.0,
                           rng.uniform(4.0, 12.0), kBuilding});
  }
  const int n_poles = draw_count(cfg.poles, rng);
  for (int i = 0; i < n_poles; ++i) {
    const double side = rng.bernoulli(0.5) ? 1.0 : -1.0;
    scene.cylinders.push_back({rng.uniform(-40.0, 40.0),
                               side * (walk_edge - rng.uniform(0.2, 0.8)),
                               rng.uniform(0.1, 0.16), 0.0, rng.uniform(3.0, 5.0), kPole});
  }
  const int n_persons = draw_count(cfg.persons, rng);
  for (int i = 0; i < n_persons; ++i) {
    const double side = rng.bernoulli(0.5) ? 1.0 : -1.0;
    scene.cylinders.push_back({rng.uniform(-25.0, 25.0),
                               side * (scene.road_half + rng.uniform(0.4, 1.6)),
                               rng.uniform(0.25, 0.35), 0.0, rng.uniform(1.6, 1.9), kPerson});
  }
  const int n_vegetation = draw_count(cfg.vegetation, rng);
  for (int i = 0; i < n_vegetation; ++i) {
    const double side = rng.bernoulli(0.5) ? 1.0 : -1.0;
    scene.cylinders.push_back({rng.uniform(-45.0, 45.0),
                               side * (walk_edge + rng.uniform(1.0, 10.0)),
                               rng.uniform(0.5, 1.6), 0.0, rng.uniform(1.5, 4.5), kVegetation});
  }
  return scene;
}

}  // namespace

ProjectionConfig LidarModel::projection() const {
  ProjectionConfig cfg;
  cfg.width = azimuth_steps;
  cfg.height = beams;
  cfg.fov_up = deg(fov_up_deg);
  cfg.fov_down = deg(fov_down_deg);
  return cfg;
}

void SyntheticSceneConfig::validate() const {
  lidar.projection().validate();
  if (camera.width < 1 || camera.height < 1) {
    throw Error("invalid scene config", "camera dims");
  }
  if (camera.hfov_deg <= 0.0 || camera.hfov_deg > 360.0) {
    throw Error("invalid scene config", "camera hfov");
  }
}

SyntheticSceneConfig scene_config_from(const KeyValues& kv) {
  SyntheticSceneConfig cfg;
  cfg.seed = static_cast<uint64_t>(kv_int(kv, "seed", 1));
  cfg.lidar.beams = static_cast<int>(kv_int(kv, "lidar_beams", cfg.lidar.beams));
  cfg.lidar.azimuth_steps =
      static_cast<int>(kv_int(kv, "lidar_azimuth_steps", cfg.lidar.azimuth_steps));
  cfg.lidar.fov_up_deg = kv_double(kv, "lidar_fov_up_deg", cfg.lidar.fov_up_deg);
  cfg.lidar.fov_down_deg = kv_double(kv, "lidar_fov_down_deg", cfg.lidar.fov_down_deg);
  cfg.lidar.sensor_height = kv_double(kv, "lidar_height", cfg.lidar.sensor_height);
  cfg.lidar.max_range = kv_double(kv, "lidar_max_range", cfg.lidar.max_range);
  cfg.camera.width = static_cast<int>(kv_int(kv, "camera_width", cfg.camera.width));
  cfg.camera.height = static_cast<int>(kv_int(kv, "camera_height", cfg.camera.height));
  cfg.camera.hfov_deg = kv_double(kv, "camera_hfov_deg", cfg.camera.hfov_deg);
  cfg.camera.sensor_height = kv_double(kv, "camera_height_m", cfg.camera.sensor_height);
  auto range = [&](const char* key, CountRange fallback) {
    return CountRange{static_cast<int>(kv_int(kv, std::string(key) + "_min", fallback.min)),
                      static_cast<int>(kv_int(kv, std::string(key) + "_max", fallback.max))};
  };
  cfg.cars = range("cars", cfg.cars);
  cfg.trucks = range("trucks", cfg.trucks);
  cfg.buildings = range("buildings", cfg.buildings);
  cfg.poles = range("poles", cfg.poles);
  cfg.persons = range("persons", cfg.persons);
  cfg.vegetation = range("vegetation", cfg.vegetation);
  cfg.validate();
  return cfg;
}

KeyValues scene_config_to(const SyntheticSceneConfig& cfg) {
  KeyValues kv;
  kv["seed"] = std::to_string(cfg.seed);
  kv["lidar_beams"] = std::to_string(cfg.lidar.beams);
  kv["lidar_azimuth_steps"] = std::to_string(cfg.lidar.azimuth_steps);
  kv["lidar_fov_up_deg"] = std::to_string(cfg.lidar.fov_up_deg);
  kv["lidar_fov_down_deg"] = std::to_string(cfg.lidar.fov_down_deg);
  kv["lidar_height"] = std::to_string(cfg.lidar.sensor_height);
  kv["lidar_max_range"] = std::to_string(cfg.lidar.max_range);
  kv["camera_width"] = std::to_string(cfg.camera.width);
  kv["camera_height"] = std::to_string(cfg.camera.height);
  kv["camera_hfov_deg"] = std::to_string(cfg.camera.hfov_deg);
  kv["camera_height_m"] = std::to_string(cfg.camera.sensor_height);
  auto put = [&](const char* key, const CountRange& r) {
    kv[std::string(key) + "_min"] = std::to_string(r.min);
    kv[std::string(key) + "_max"] = std::to_string(r.max);
  };
  put("cars", cfg.cars);
  put("trucks", cfg.trucks);
  put("buildings", cfg.buildings);
  put("poles", cfg.poles);
  put("persons", cfg.persons);
  put("vegetation", cfg.vegetation);
  return kv;
}

PairedSample synth_scene(const SyntheticSceneConfig& config) {
  config.validate();
  Rng rng(config.seed);
  const Scene scene = build_scene(config, rng);

  // LiDAR rays through pixel centers: each return lands in its own cell.
  const ProjectionConfig proj = config.lidar.projection();
  const double f = proj.vertical_fov();
  const std::array<double, 3> lidar_origin = {0.0, 0.0, config.lidar.sensor_height};
  std::vector<LidarPoint> points;
  std::vector<uint16_t> labels;
  for (int row = 0; row < proj.height; ++row) {
    const double elevation = f * (1.0 - (row + 0.5) / proj.height) - proj.fov_down;
    for (int col = 0; col < proj.width; ++col) {
      const double azimuth = kPi * (1.0 - (2.0 * col + 1.0) / proj.width);
      const std::array<double, 3> dir = {std::cos(elevation) * std::cos(azimuth),
                                         std::cos(elevation) * std::sin(azimuth),
                                         std::sin(elevation)};
      auto hit = raycast(scene, lidar_origin, dir, config.lidar.max_range);
      if (!hit) continue;
      points.push_back({hit->t * dir[0], hit->t * dir[1], hit->t * dir[2],
                        reflectance(hit->cls)});
      labels.push_back(hit->cls);
    }
  }
  if (points.empty()) throw Error("degenerate scene", "no lidar returns");

  PairedSample sample{PointCloud(std::move(points), std::move(labels)), RangeImage(), SegmentMap(),
                      SegmentMap()};

  // Camera view of the same scene.
  const auto& cam = config.camera;
  const double sx = std::tan(deg(cam.hfov_deg) / 2.0) / (cam.width / 2.0);
  const std::array<double, 3> cam_origin = {0.0, 0.0, cam.sensor_height};
  SegmentMap camera_seg(cam.width, cam.height);
  bool camera_any = false;
  for (int v = 0; v < cam.height; ++v) {
    for (int u = 0; u < cam.width; ++u) {
      std::array<double, 3> dir = {1.0, (cam.width / 2.0 - (u + 0.5)) * sx,
                                   (cam.height / 2.0 - (v + 0.5)) * sx};
      const double norm = std::sqrt(dir[0] * dir[0] + dir[1] * dir[1] + dir[2] * dir[2]);
      for (auto& d : dir) d /= norm;
      auto hit = raycast(scene, cam_origin, dir, config.lidar.max_range);
      if (hit) {
        camera_seg.set(v, u, hit->cls);
        camera_any = true;
      }
    }
  }
  if (!camera_any) throw Error("degenerate scene", "empty camera view");
  sample.camera_seg = std::move(camera_seg);

  // Camera-fov crop of the projected scan.
  auto projected = project_cloud(sample.cloud, proj);
  const auto span = crop_columns(proj.width, 0.0, deg(cam.hfov_deg));
  sample.range_crop = crop_to_camera_fov(projected.image, 0.0, deg(cam.hfov_deg));
  auto cropped_labels = crop_label_grid(*projected.label_grid, proj.height, proj.width, span);
  std::vector<uint8_t> seg_ids(cropped_labels.begin(), cropped_labels.end());
  sample.lidar_seg = SegmentMap(span.width, proj.height, std::move(seg_ids));
  return sample;
}

ProjectionResult project_full(const PairedSample& sample, const LidarModel& lidar) {
  return project_cloud(sample.cloud, lidar.projection());
}

uint64_t sample_hash(const PairedSample& sample) {
  // FNV-1a over the sample's defining bytes.
  uint64_t h = 1469598103934665603ULL;
  auto mix_bytes = [&h](const void* data, size_t n) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (size_t i = 0; i < n; ++i) {
      h ^= p[i];
      h *= 1099511628211ULL;
    }
  };
  for (const auto& p : sample.cloud.points()) mix_bytes(&p, sizeof(p));
  if (sample.cloud.has_labels()) {
    mix_bytes(sample.cloud.labels().data(), sample.cloud.labels().size() * sizeof(uint16_t));
  }
  mix_bytes(sample.camera_seg.ids().data(), sample.camera_seg.ids().size());
  mix_bytes(sample.lidar_seg.ids().data(), sample.lidar_seg.ids().size());
  return h;
}

Dataset synth_dataset(SyntheticSceneConfig config, uint64_t base_seed, int count) {
  Dataset out;
  config.seed = base_seed;
  out.config = config;
  out.samples.reserve(count);
  for (int i = 0; i < count; ++i) {
    SyntheticSceneConfig one = config;
    one.seed = base_seed + static_cast<uint64_t>(i);
    out.samples.push_back(synth_scene(one));
  }
  return out;
}

}  // namespace panoseg
