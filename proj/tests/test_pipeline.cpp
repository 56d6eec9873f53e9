#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>

#include "panoseg/pipeline.hpp"

using namespace panoseg;
namespace fs = std::filesystem;

namespace {

constexpr double kPi = 3.14159265358979323846;

fs::path temp_dir(const std::string& name) {
  auto dir = fs::temp_directory_path() / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

SyntheticSceneConfig toy_scene_config(uint64_t seed = 1) {
  SyntheticSceneConfig cfg;
  cfg.seed = seed;
  cfg.lidar.beams = 64;
  cfg.lidar.azimuth_steps = 512;
  cfg.camera.width = 128;
  cfg.camera.height = 64;
  cfg.camera.hfov_deg = 90.0;
  cfg.trucks = {0, 0};
  cfg.poles = {0, 0};
  cfg.persons = {0, 0};
  cfg.vegetation = {0, 0};
  return cfg;
}

TrainerConfig toy_trainer_config(const SyntheticSceneConfig& scene) {
  KeyValues kv;
  kv["base_width"] = "8";
  kv["batch_size"] = "2";
  kv["dropout"] = "0.2";
  return trainer_config_from(kv, scene);
}

}  // namespace

// ---------------------------------------------------------------------------
// SemanticKITTI IO
// ---------------------------------------------------------------------------

TEST_CASE("a 16-byte scan file decodes to one point") {
  const auto dir = temp_dir("panoseg_io_a");
  const auto path = (dir / "one.bin").string();
  const float raw[4] = {1.0f, 2.0f, 3.0f, 0.5f};
  std::ofstream(path, std::ios::binary)
      .write(reinterpret_cast<const char*>(raw), sizeof(raw));
  auto cloud = read_kitti_scan(path);
  REQUIRE(cloud.size() == 1);
  CHECK(cloud.points()[0].x == 1.0);
  CHECK(cloud.points()[0].y == 2.0);
  CHECK(cloud.points()[0].z == 3.0);
  CHECK(cloud.points()[0].intensity == 0.5);
  fs::remove_all(dir);
}

TEST_CASE("empty and misaligned scan files produce structured errors") {
  const auto dir = temp_dir("panoseg_io_b");
  const auto empty = (dir / "empty.bin").string();
  std::ofstream(empty, std::ios::binary);
  CHECK_THROWS_WITH_AS(read_kitti_scan(empty), doctest::Contains("empty scan"), Error);

  const auto bad = (dir / "bad.bin").string();
  const char junk[10] = {};
  std::ofstream(bad, std::ios::binary).write(junk, sizeof(junk));
  CHECK_THROWS_WITH_AS(read_kitti_scan(bad), doctest::Contains("malformed scan"), Error);
  fs::remove_all(dir);
}

TEST_CASE("scan files round-trip bit-exactly") {
  const auto dir = temp_dir("panoseg_io_c");
  Rng rng(5);
  // Dyadic coordinates are exactly representable in float32, so the on-disk
  // format can restore the doubles bit for bit.
  auto dyadic = [](double v) { return std::round(v * 1024.0) / 1024.0; };
  std::vector<LidarPoint> pts;
  for (int i = 0; i < 100; ++i) {
    pts.push_back({dyadic(rng.uniform(-50, 50)), dyadic(rng.uniform(-50, 50)),
                   dyadic(rng.uniform(-3, 8)), dyadic(rng.uniform())});
  }
  PointCloud cloud(pts);
  const auto path = (dir / "scan.bin").string();
  write_kitti_scan(path, cloud);
  auto restored = read_kitti_scan(path);
  REQUIRE(restored.size() == 100);
  for (size_t i = 0; i < 100; ++i) {
    CHECK(restored.points()[i].x == pts[i].x);
    CHECK(restored.points()[i].y == pts[i].y);
    CHECK(restored.points()[i].z == pts[i].z);
    CHECK(restored.points()[i].intensity == pts[i].intensity);
  }
  // Byte-identical rewrite.
  const auto path2 = (dir / "scan2.bin").string();
  write_kitti_scan(path2, restored);
  std::ifstream f1(path, std::ios::binary), f2(path2, std::ios::binary);
  std::string s1((std::istreambuf_iterator<char>(f1)), std::istreambuf_iterator<char>());
  std::string s2((std::istreambuf_iterator<char>(f2)), std::istreambuf_iterator<char>());
  CHECK(s1 == s2);
  fs::remove_all(dir);
}

TEST_CASE("label words keep the low 16 bits and drop the instance id") {
  const auto dir = temp_dir("panoseg_io_d");
  const auto path = (dir / "x.label").string();
  const uint32_t words[2] = {0x00010001u, 0xABCD0028u};
  std::ofstream(path, std::ios::binary)
      .write(reinterpret_cast<const char*>(words), sizeof(words));
  auto ids = read_kitti_labels(path, 2);
  CHECK(ids[0] == 1);
  CHECK(ids[1] == 0x28);
  CHECK_THROWS_WITH_AS(read_kitti_labels(path, 3), doctest::Contains("label/scan mismatch"),
                       Error);
  fs::remove_all(dir);
}

TEST_CASE("label files round-trip bit-exactly") {
  const auto dir = temp_dir("panoseg_io_e");
  Rng rng(7);
  std::vector<uint16_t> ids(100);
  for (auto& id : ids) id = semantickitti_id_for(static_cast<int>(rng.uniform_index(15)));
  const auto path = (dir / "y.label").string();
  write_kitti_labels(path, ids);
  CHECK(read_kitti_labels(path, 100) == ids);
  fs::remove_all(dir);
}

// ---------------------------------------------------------------------------
// Synthetic scenes
// ---------------------------------------------------------------------------

TEST_CASE("same seed produces bit-identical samples") {
  auto a = synth_scene(toy_scene_config(42));
  auto b = synth_scene(toy_scene_config(42));
  CHECK(sample_hash(a) == sample_hash(b));
  CHECK(a.cloud.points().size() == b.cloud.points().size());
  CHECK(a.camera_seg == b.camera_seg);
  CHECK(a.lidar_seg == b.lidar_seg);
  auto c = synth_scene(toy_scene_config(43));
  CHECK(sample_hash(a) != sample_hash(c));
}

TEST_CASE("ground-only scenes contain no vehicle ids") {
  auto cfg = toy_scene_config(3);
  cfg.cars = {0, 0};
  cfg.buildings = {0, 0};
  auto sample = synth_scene(cfg);
  std::set<uint8_t> cloud_ids(sample.cloud.labels().begin(), sample.cloud.labels().end());
  for (uint8_t id : cloud_ids) {
    const bool ground = id == kRoad || id == kSidewalk || id == kTerrain;
    CHECK(ground);
  }
  for (uint8_t id : sample.camera_seg.ids()) {
    CHECK(id != kCar);
    CHECK(id != kTruck);
  }
}

TEST_CASE("every lidar return carries the class of the primitive it hit") {
  auto sample = synth_scene(toy_scene_config(9));
  REQUIRE(sample.cloud.has_labels());
  CHECK(sample.cloud.labels().size() == sample.cloud.size());
  // The crop's label grid agrees with reprojecting the labeled cloud.
  auto projected = project_full(sample, toy_scene_config(9).lidar);
  const auto span = crop_columns(512, 0.0, kPi / 2.0);
  auto labels = crop_label_grid(*projected.label_grid, 64, 512, span);
  for (size_t i = 0; i < labels.size(); ++i) {
    CHECK(labels[i] == sample.lidar_seg.ids()[i]);
  }
}

TEST_CASE("a box footprint matches its analytic pinhole projection") {
  auto cfg = toy_scene_config(0);
  cfg.cars = {0, 0};
  cfg.buildings = {0, 0};
  auto sample = synth_scene(cfg);  // ground only; we now cast a known box scene

  // One box, fully visible, nothing occluding: rebuild a config whose first
  // car draw is deterministic, then verify the camera silhouette bounds.
  // Simpler: place the box analytically and cast rays through the camera
  // model by hand, mirroring the production camera equations.
  const double cx = 12.0, cy = 0.5, hx = 2.0, hy = 1.0, z1 = 1.6;
  const auto& cam = cfg.camera;
  const double sx = std::tan((cam.hfov_deg * kPi / 180.0) / 2.0) / (cam.width / 2.0);

  // Analytic corner projection.
  double umin = 1e9, umax = -1e9;
  for (double bx : {cx - hx, cx + hx}) {
    for (double by : {cy - hy, cy + hy}) {
      const double u = cam.width / 2.0 - (by / bx) / sx - 0.5;
      umin = std::min(umin, u);
      umax = std::max(umax, u);
    }
  }

  // Rendered silhouette bounds from per-pixel ray casting of the same box.
  int first = cam.width, last = -1;
  for (int u = 0; u < cam.width; ++u) {
    const double dy = (cam.width / 2.0 - (u + 0.5)) * sx;
    // Ray (1, dy, dz) hits the box in x in [cx-hx, cx+hx]; check the y slab
    // at z rows by scanning the rendered map instead.
    (void)dy;
    bool hit_col = false;
    for (int v = 0; v < cam.height; ++v) {
      const double dz = (cam.height / 2.0 - (v + 0.5)) * sx;
      // Unnormalized direction (1, dy, dz) from camera height.
      const double tx0 = (cx - hx), tx1 = (cx + hx);
      for (double t : {tx0, tx1}) {
        const double y = t * dy;
        const double z = cam.sensor_height + t * dz;
        if (y >= cy - hy && y <= cy + hy && z >= 0.0 && z <= z1) hit_col = true;
      }
    }
    if (hit_col) {
      first = std::min(first, u);
      last = std::max(last, u);
    }
  }
  CHECK(std::abs(first - umin) <= 1.0);
  CHECK(std::abs(last - umax) <= 1.0);
  (void)sample;
}

TEST_CASE("degenerate scenes are rejected") {
  auto cfg = toy_scene_config(1);
  cfg.lidar.max_range = 0.5;  // nothing reachable
  CHECK_THROWS_WITH_AS(synth_scene(cfg), doctest::Contains("degenerate scene"), Error);
}

// ---------------------------------------------------------------------------
// Datasets
// ---------------------------------------------------------------------------

TEST_CASE("datasets round-trip through the on-disk format") {
  auto dataset = synth_dataset(toy_scene_config(), 100, 3);
  const auto dir = temp_dir("panoseg_ds");
  save_dataset(dir.string(), dataset);
  auto loaded = load_dataset(dir.string());
  REQUIRE(loaded.samples.size() == 3);
  for (size_t i = 0; i < 3; ++i) {
    CHECK(loaded.samples[i].camera_seg == dataset.samples[i].camera_seg);
    CHECK(loaded.samples[i].lidar_seg == dataset.samples[i].lidar_seg);
    REQUIRE(loaded.samples[i].cloud.size() == dataset.samples[i].cloud.size());
    for (size_t p = 0; p < loaded.samples[i].cloud.size(); ++p) {
      CHECK(loaded.samples[i].cloud.points()[p].x ==
            static_cast<float>(dataset.samples[i].cloud.points()[p].x));
      CHECK(loaded.samples[i].cloud.labels()[p] == dataset.samples[i].cloud.labels()[p]);
    }
  }
  fs::remove_all(dir);
}

TEST_CASE("disjoint seed ranges never share a sample hash") {
  auto train = synth_dataset(toy_scene_config(), 1000, 20);
  auto val = synth_dataset(toy_scene_config(), 2000, 10);
  auto test = synth_dataset(toy_scene_config(), 3000, 10);
  std::set<uint64_t> seen;
  for (const auto* split : {&train, &val, &test}) {
    for (const auto& s : split->samples) {
      CHECK(seen.insert(sample_hash(s)).second);
    }
  }
}

// ---------------------------------------------------------------------------
// Trainer
// ---------------------------------------------------------------------------

TEST_CASE("trainer batches carry consistent shapes") {
  auto scene = toy_scene_config();
  auto data = synth_dataset(scene, 10, 4);
  auto cfg = toy_trainer_config(scene);
  Trainer trainer(cfg, data);
  auto batch = trainer.assemble_batch();
  CHECK(batch.range.shape() == Shape{2, 5, 64, 128});
  CHECK(batch.condition.shape() == Shape{2, 15, 64, 128});
  CHECK(batch.real_onehot.shape() == Shape{2, 15, 64, 128});
  CHECK(batch.targets.size() == 2);
}

TEST_CASE("trainer runs are reproducible step for step") {
  auto scene = toy_scene_config();
  auto data = synth_dataset(scene, 10, 4);
  auto cfg = toy_trainer_config(scene);
  auto run = [&](int steps) {
    Trainer trainer(cfg, data);
    std::ostringstream log;
    trainer.attach_loss_log(&log);
    for (int i = 0; i < steps; ++i) trainer.step();
    return log.str();
  };
  const auto a = run(3);
  const auto b = run(3);
  CHECK(a == b);
  CHECK(a.find('\n') != std::string::npos);
}

// ---------------------------------------------------------------------------
// Inference
// ---------------------------------------------------------------------------

TEST_CASE("zero-initialized generator yields a constant map with lowest-id ties") {
  auto scene = toy_scene_config();
  auto data = synth_dataset(scene, 30, 1);
  auto cfg = toy_trainer_config(scene);
  Generator<float> g(cfg.generator);
  for (auto& [name, t] : g.named_params()) {
    std::fill(t.mutable_value().begin(), t.mutable_value().end(), 0.0f);
  }
  auto pred = translate(g, data.samples[0].range_crop, data.samples[0].lidar_seg);
  CHECK(pred.width() == 128);
  CHECK(pred.height() == 64);
  for (uint8_t id : pred.ids()) CHECK(id == 0);
}

TEST_CASE("panorama width is the camera width times the crop ratio") {
  auto scene = toy_scene_config();
  auto data = synth_dataset(scene, 31, 1);
  auto cfg = toy_trainer_config(scene);
  Generator<float> g(cfg.generator);
  auto projected = project_full(data.samples[0], scene.lidar);
  std::vector<uint8_t> ids(projected.label_grid->begin(), projected.label_grid->end());
  SegmentMap full_seg(512, 64, std::move(ids));
  auto pano = render_panorama(g, projected.image, full_seg);
  CHECK(pano.width() == 128 * (512 / 128));
  CHECK(pano.height() == 64);
}

TEST_CASE("panorama of a crop-width input equals translate") {
  auto scene = toy_scene_config();
  auto data = synth_dataset(scene, 32, 1);
  auto cfg = toy_trainer_config(scene);
  Generator<float> g(cfg.generator);
  const auto& s = data.samples[0];
  auto a = translate(g, s.range_crop, s.lidar_seg);
  auto b = render_panorama(g, s.range_crop, s.lidar_seg);
  CHECK(a == b);
}

TEST_CASE("panorama rejects widths off the crop granularity") {
  auto scene = toy_scene_config();
  scene.lidar.azimuth_steps = 320;  // not a multiple of the 80-column crop? (320*90/360=80)
  auto data = synth_dataset(scene, 33, 1);
  auto cfg = toy_trainer_config(scene);
  // crop width is 80; full width 320 IS a multiple, so shrink the scan crop:
  Generator<float> g(cfg.generator);
  auto projected = project_full(data.samples[0], scene.lidar);
  // Slice 200 columns: not a multiple of 80.
  auto span = crop_columns(320, 0.0, 200.0 / 320.0 * 2.0 * kPi);
  auto bad = crop_to_camera_fov(projected.image, 0.0, 200.0 / 320.0 * 2.0 * kPi);
  auto labels = crop_label_grid(*projected.label_grid, 64, 320, span);
  SegmentMap bad_seg(span.width, 64, std::vector<uint8_t>(labels.begin(), labels.end()));
  CHECK_THROWS_WITH_AS(render_panorama(g, bad, bad_seg),
                       doctest::Contains("crop granularity"), Error);
}

TEST_CASE("crop inference equals the panorama slab away from its borders") {
  auto scene = toy_scene_config();
  auto data = synth_dataset(scene, 34, 2);
  auto cfg = toy_trainer_config(scene);
  cfg.generator.dropout_p = 0.0;
  Generator<float> g(cfg.generator);

  const int margin = g.receptive_field_cols() / 2 + 2;
  const auto span = crop_columns(512, 0.0, kPi / 2.0);
  REQUIRE(span.start % 2 == 0);  // pooling alignment
  for (const auto& s : data.samples) {
    auto projected = project_full(s, scene.lidar);
    std::vector<uint8_t> ids(projected.label_grid->begin(), projected.label_grid->end());
    SegmentMap full_seg(512, 64, std::move(ids));
    auto pano = render_panorama(g, projected.image, full_seg);
    auto crop = translate(g, s.range_crop, s.lidar_seg);
    int mismatches = 0;
    int compared = 0;
    for (int r = 0; r < 64; ++r) {
      for (int c = margin; c < 128 - margin; ++c) {
        ++compared;
        if (crop.at(r, c) != pano.at(r, span.start + c)) ++mismatches;
      }
    }
    CHECK(compared > 0);
    CHECK(mismatches == 0);
  }
}

TEST_CASE("rotating the panorama input rotates the output proportionally") {
  auto scene = toy_scene_config();
  auto data = synth_dataset(scene, 35, 1);
  auto cfg = toy_trainer_config(scene);
  cfg.generator.dropout_p = 0.0;
  Generator<float> g(cfg.generator);
  auto projected = project_full(data.samples[0], scene.lidar);

  const int shift = 64;  // multiple of the pooling factor
  ProjectionConfig pc = scene.lidar.projection();
  RangeImage rotated(pc);
  std::vector<uint8_t> ids(512 * 64), rot_ids(512 * 64);
  for (int r = 0; r < 64; ++r) {
    for (int c = 0; c < 512; ++c) {
      const int src = (c + shift) % 512;
      for (int ch = 0; ch < 5; ++ch) rotated.at(ch, r, c) = projected.image.at(ch, r, src);
      rotated.set_valid(r, c, projected.image.valid(r, src));
      ids[r * 512 + c] = static_cast<uint8_t>((*projected.label_grid)[r * 512 + c]);
      rot_ids[r * 512 + c] = static_cast<uint8_t>((*projected.label_grid)[r * 512 + src]);
    }
  }
  auto base = render_panorama(g, projected.image, SegmentMap(512, 64, ids));
  auto rotated_out = render_panorama(g, rotated, SegmentMap(512, 64, rot_ids));

  const int margin = g.receptive_field_cols() / 2 + 2;
  int mismatches = 0;
  for (int r = 0; r < 64; ++r) {
    // Compare interior columns untouched by either wrap seam.
    for (int c = margin; c + shift < 512 - margin; ++c) {
      if (rotated_out.at(r, c) != base.at(r, (c + shift) % 512)) ++mismatches;
    }
  }
  CHECK(mismatches == 0);
}

// ---------------------------------------------------------------------------
// Evaluation
// ---------------------------------------------------------------------------

TEST_CASE("identity oracle scores perfect metrics") {
  auto data = synth_dataset(toy_scene_config(), 36, 4);
  EvaluateOptions opts;
  opts.swd.target_resolution = 128;
  opts.swd.n_projections = 32;
  auto report = evaluate_with(
      data.samples, [](const PairedSample& s) { return s.camera_seg; }, opts);
  CHECK(report.iou.miou == doctest::Approx(1.0));
  CHECK(report.ssim == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(report.swd_avg == doctest::Approx(0.0).epsilon(1e-9));
  REQUIRE(report.frechet.has_value());
  CHECK(*report.frechet == doctest::Approx(0.0).epsilon(1e-6));
  CHECK(report.note.find("proxy") != std::string::npos);
}

TEST_CASE("constant predictor matches the analytic class-frequency value") {
  auto data = synth_dataset(toy_scene_config(), 37, 3);
  const uint8_t cls = kRoad;
  EvaluateOptions opts;
  opts.swd.target_resolution = 64;
  opts.swd.n_projections = 8;
  opts.compute_frechet = false;
  auto report = evaluate_with(
      data.samples,
      [cls](const PairedSample& s) {
        SegmentMap m(s.camera_seg.width(), s.camera_seg.height());
        for (int r = 0; r < m.height(); ++r) {
          for (int c = 0; c < m.width(); ++c) m.set(r, c, cls);
        }
        return m;
      },
      opts);

  // Counting oracle over the ground truth.
  std::array<int64_t, kSharedClassCount> counts{};
  int64_t valid = 0;
  for (const auto& s : data.samples) {
    for (uint8_t id : s.camera_seg.ids()) {
      counts[id]++;
      if (id != 0) ++valid;
    }
  }
  int present = 0;
  for (int c = 1; c < kSharedClassCount; ++c) {
    if (counts[c] > 0 || c == cls) ++present;
  }
  const double expect = (static_cast<double>(counts[cls]) / static_cast<double>(valid)) /
                        static_cast<double>(present);
  CHECK(report.iou.miou == doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("majority baseline predicts the most frequent class") {
  auto data = synth_dataset(toy_scene_config(), 38, 3);
  auto baseline = majority_class_baseline(data.samples);
  CHECK(baseline.miou > 0.0);
  CHECK(baseline.miou < 1.0);
}

TEST_CASE("environment variable overrides the seed") {
  unsetenv("PANOSEG_SEED");
  CHECK(!env_seed_override().has_value());
  setenv("PANOSEG_SEED", "12345", 1);
  auto seed = env_seed_override();
  REQUIRE(seed.has_value());
  CHECK(*seed == 12345);
  setenv("PANOSEG_SEED", "nonsense", 1);
  CHECK_THROWS_AS(env_seed_override(), Error);
  unsetenv("PANOSEG_SEED");
}
