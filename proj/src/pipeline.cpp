#include "panoseg/pipeline.hpp"

#include <algorithm>
#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>

namespace panoseg {

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// SemanticKITTI formats
// ---------------------------------------------------------------------------

PointCloud read_kitti_scan(const std::string& path) {
  std::ifstream in(path, std::ios::binary | std::ios::ate);
  if (!in) throw Error("unreadable path", path);
  const auto size = static_cast<size_t>(in.tellg());
  if (size % 16 != 0) {
    throw Error("malformed scan", path + " has size " + std::to_string(size));
  }
  if (size == 0) throw Error("empty scan", path);
  in.seekg(0);
  std::vector<float> raw(size / 4);
  in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(size));
  if (static_cast<size_t>(in.gcount()) != size) throw Error("malformed scan", "short read");
  std::vector<LidarPoint> points(raw.size() / 4);
  for (size_t i = 0; i < points.size(); ++i) {
    points[i] = {raw[4 * i], raw[4 * i + 1], raw[4 * i + 2], raw[4 * i + 3]};
  }
  return PointCloud(std::move(points));
}

void write_kitti_scan(const std::string& path, const PointCloud& cloud) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("unwritable path", path);
  std::vector<float> raw;
  raw.reserve(cloud.size() * 4);
  for (const auto& p : cloud.points()) {
    raw.push_back(static_cast<float>(p.x));
    raw.push_back(static_cast<float>(p.y));
    raw.push_back(static_cast<float>(p.z));
    raw.push_back(static_cast<float>(p.intensity));
  }
  out.write(reinterpret_cast<const char*>(raw.data()),
            static_cast<std::streamsize>(raw.size() * sizeof(float)));
  if (!out) throw Error("unwritable path", path);
}

std::vector<uint16_t> read_kitti_labels(const std::string& path, size_t n_points) {
  std::ifstream in(path, std::ios::binary | std::ios::ate);
  if (!in) throw Error("unreadable path", path);
  const auto size = static_cast<size_t>(in.tellg());
  if (size != n_points * 4) {
    throw Error("label/scan mismatch", path + " holds " + std::to_string(size / 4) +
                                           " words for " + std::to_string(n_points) + " points");
  }
  in.seekg(0);
  std::vector<uint32_t> words(n_points);
  in.read(reinterpret_cast<char*>(words.data()), static_cast<std::streamsize>(size));
  if (static_cast<size_t>(in.gcount()) != size) throw Error("label/scan mismatch", "short read");
  std::vector<uint16_t> semantic(n_points);
  for (size_t i = 0; i < n_points; ++i) {
    semantic[i] = static_cast<uint16_t>(words[i] & 0xFFFFu);  // high bits: instance id
  }
  return semantic;
}

void write_kitti_labels(const std::string& path, const std::vector<uint16_t>& semantic_ids,
                        const std::vector<uint16_t>* instance_ids) {
  if (instance_ids && instance_ids->size() != semantic_ids.size()) {
    throw Error("label/scan mismatch", "instance id count");
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("unwritable path", path);
  std::vector<uint32_t> words(semantic_ids.size());
  for (size_t i = 0; i < words.size(); ++i) {
    const uint32_t inst = instance_ids ? (*instance_ids)[i] : 0u;
    words[i] = (inst << 16) | semantic_ids[i];
  }
  out.write(reinterpret_cast<const char*>(words.data()),
            static_cast<std::streamsize>(words.size() * sizeof(uint32_t)));
  if (!out) throw Error("unwritable path", path);
}

// ---------------------------------------------------------------------------
// Datasets on disk
// ---------------------------------------------------------------------------

void save_dataset(const std::string& dir, const Dataset& dataset) {
  fs::create_directories(dir);
  write_key_values((fs::path(dir) / "config.txt").string(), scene_config_to(dataset.config));
  char name[32];
  for (size_t i = 0; i < dataset.samples.size(); ++i) {
    std::snprintf(name, sizeof(name), "%06zu", i);
    const fs::path sample_dir = fs::path(dir) / "samples" / name;
    fs::create_directories(sample_dir);
    const auto& sample = dataset.samples[i];
    write_kitti_scan((sample_dir / "scan.bin").string(), sample.cloud);
    std::vector<uint16_t> raw(sample.cloud.size());
    for (size_t p = 0; p < raw.size(); ++p) {
      raw[p] = semantickitti_id_for(sample.cloud.labels()[p]);
    }
    write_kitti_labels((sample_dir / "scan.label").string(), raw);
    ImageGray cam(sample.camera_seg.width(), sample.camera_seg.height());
    std::copy(sample.camera_seg.ids().begin(), sample.camera_seg.ids().end(),
              cam.pixels.begin());
    write_pgm((sample_dir / "camera.pgm").string(), cam);
  }
}

Dataset load_dataset(const std::string& dir) {
  Dataset out;
  out.config = scene_config_from(read_key_values((fs::path(dir) / "config.txt").string()));
  const fs::path samples = fs::path(dir) / "samples";
  if (!fs::is_directory(samples)) throw Error("unreadable path", samples.string());
  std::vector<fs::path> entries;
  for (const auto& e : fs::directory_iterator(samples)) {
    if (e.is_directory()) entries.push_back(e.path());
  }
  std::sort(entries.begin(), entries.end());
  const ProjectionConfig proj = out.config.lidar.projection();
  for (const auto& sample_dir : entries) {
    PointCloud bare = read_kitti_scan((sample_dir / "scan.bin").string());
    auto raw = read_kitti_labels((sample_dir / "scan.label").string(), bare.size());
    std::vector<uint16_t> shared(raw.size());
    for (size_t i = 0; i < raw.size(); ++i) shared[i] = map_semantickitti(raw[i]);
    PointCloud cloud(bare.points(), std::move(shared));

    ImageGray cam = read_pgm((sample_dir / "camera.pgm").string());
    SegmentMap camera_seg(cam.width, cam.height,
                          std::vector<uint8_t>(cam.pixels.begin(), cam.pixels.end()));

    auto projected = project_cloud(cloud, proj);
    const auto span = crop_columns(proj.width, 0.0, out.config.camera.hfov_deg * M_PI / 180.0);
    auto crop = crop_to_camera_fov(projected.image, 0.0, out.config.camera.hfov_deg * M_PI / 180.0);
    auto labels = crop_label_grid(*projected.label_grid, proj.height, proj.width, span);
    SegmentMap lidar_seg(span.width, proj.height,
                         std::vector<uint8_t>(labels.begin(), labels.end()));
    out.samples.push_back({std::move(cloud), std::move(crop), std::move(lidar_seg),
                           std::move(camera_seg)});
  }
  if (out.samples.empty()) throw Error("empty scan", "no samples under " + dir);
  return out;
}

// ---------------------------------------------------------------------------
// Batch assembly
// ---------------------------------------------------------------------------

std::array<double, 5> range_channel_scales() { return {0.02, 0.02, 0.02, 1.0, 0.02}; }

namespace {

void append_range_values(const RangeImage& image, std::vector<float>& out) {
  const auto scales = range_channel_scales();
  const auto& data = image.data();
  const size_t plane = static_cast<size_t>(image.height()) * image.width();
  for (int c = 0; c < RangeImage::kChannels; ++c) {
    const double s = scales[c];
    for (size_t i = 0; i < plane; ++i) {
      out.push_back(static_cast<float>(data[c * plane + i] * s));
    }
  }
}

void append_onehot_values(const SegmentMap& seg, std::vector<float>& out) {
  const size_t plane = static_cast<size_t>(seg.width()) * seg.height();
  const size_t base = out.size();
  out.resize(base + plane * kSharedClassCount, 0.0f);
  for (size_t i = 0; i < plane; ++i) {
    out[base + static_cast<size_t>(seg.ids()[i]) * plane + i] = 1.0f;
  }
}

}  // namespace

Tensor<float> range_to_tensor(const RangeImage& image) {
  std::vector<float> v;
  v.reserve(static_cast<size_t>(RangeImage::kChannels) * image.height() * image.width());
  append_range_values(image, v);
  return Tensor<float>::constant({1, RangeImage::kChannels, image.height(), image.width()},
                                 std::move(v));
}

Tensor<float> seg_to_condition(const SegmentMap& seg) {
  std::vector<float> v;
  append_onehot_values(seg, v);
  return Tensor<float>::constant({1, kSharedClassCount, seg.height(), seg.width()}, std::move(v));
}

// ---------------------------------------------------------------------------
// Trainer
// ---------------------------------------------------------------------------

TrainerConfig trainer_config_from(const KeyValues& kv, const SyntheticSceneConfig& scene) {
  TrainerConfig cfg;
  const auto span = crop_columns(scene.lidar.azimuth_steps, 0.0,
                                 scene.camera.hfov_deg * M_PI / 180.0);
  cfg.generator.range_channels = 5;
  cfg.generator.condition_channels = kSharedClassCount;
  cfg.generator.class_count = kSharedClassCount;
  cfg.generator.base_width = static_cast<int>(kv_int(kv, "base_width", 8));
  cfg.generator.encoder_stages = static_cast<int>(kv_int(kv, "encoder_stages", 1));
  cfg.generator.block_dilations = kv_int_list(kv, "dilations", {1, 2});
  cfg.generator.in_height = scene.lidar.beams;
  cfg.generator.in_width = span.width;
  cfg.generator.out_height = scene.camera.height;
  cfg.generator.out_width = scene.camera.width;
  cfg.generator.dropout_p = kv_double(kv, "dropout", 0.2);
  const std::string norm = kv_string(kv, "norm", "none");
  if (norm != "none" && norm != "instance") throw Error("invalid config value", "norm = " + norm);
  cfg.generator.norm = norm == "instance" ? NormKind::Instance : NormKind::None;
  cfg.generator.init_seed = static_cast<uint64_t>(kv_int(kv, "init_seed_g", 101));

  cfg.discriminator.candidate_channels = kSharedClassCount;
  cfg.discriminator.condition_channels = kSharedClassCount;
  cfg.discriminator.cand_height = scene.camera.height;
  cfg.discriminator.cand_width = scene.camera.width;
  const int d_width = static_cast<int>(kv_int(kv, "d_base_width", 8));
  const int halvings = static_cast<int>(kv_int(kv, "d_halvings", 5));
  cfg.discriminator.blocks.clear();
  for (int i = 0; i < 6; ++i) {
    const int ch = d_width << std::min(i, 2);
    if (i < halvings) {
      cfg.discriminator.blocks.push_back({ch, 4, 2, 1});
    } else {
      cfg.discriminator.blocks.push_back({ch, 3, 1, 1});
    }
  }
  cfg.discriminator.init_seed = static_cast<uint64_t>(kv_int(kv, "init_seed_d", 202));

  cfg.train.adam.lr = kv_double(kv, "lr", 1e-4);
  cfg.train.adam.beta1 = kv_double(kv, "beta1", 0.5);
  cfg.train.adam.beta2 = kv_double(kv, "beta2", 0.999);
  cfg.train.batch_size = static_cast<int>(kv_int(kv, "batch_size", 10));
  cfg.train.max_steps = static_cast<int>(kv_int(kv, "max_steps", 2000));
  cfg.train.seed = static_cast<uint64_t>(kv_int(kv, "train_seed", 1));
  cfg.train.augment.flip_prob = kv_double(kv, "flip_prob", 0.5);
  cfg.train.augment.drop_prob = kv_double(kv, "point_drop_prob", 0.5);
  cfg.train.augment.max_drop_fraction = kv_double(kv, "max_drop_fraction", 0.1);
  cfg.train.lambda_gp = kv_double(kv, "lambda_gp", 10.0);
  cfg.train.n_critic = static_cast<int>(kv_int(kv, "n_critic", 1));
  const std::string guiding = kv_string(kv, "guiding", "lovasz");
  if (guiding == "lovasz") {
    cfg.train.guiding = GuidingLoss::Lovasz;
  } else if (guiding == "mse") {
    cfg.train.guiding = GuidingLoss::Mse;
  } else if (guiding == "none") {
    cfg.train.guiding = GuidingLoss::None;
  } else {
    throw Error("invalid config value", "guiding = " + guiding);
  }
  cfg.train.validate();
  cfg.generator.validate();
  cfg.discriminator.validate();
  return cfg;
}

Trainer::Trainer(TrainerConfig config, const Dataset& data)
    : config_(std::move(config)),
      data_(data),
      models_{Generator<float>(config_.generator), Discriminator<float>(config_.discriminator),
              Adam<float>(), Adam<float>()},
      rng_(config_.train.seed) {
  if (data_.samples.empty()) throw Error("empty scan", "trainer needs a non-empty dataset");
  models_.adam_g =
      Adam<float>(config_.train.adam, param_tensors(models_.generator.named_params()));
  models_.adam_d =
      Adam<float>(config_.train.adam, param_tensors(models_.discriminator.named_params()));
}

TrainBatch<float> Trainer::assemble_batch() {
  const auto& scene = data_.config;
  const ProjectionConfig proj = scene.lidar.projection();
  const double hfov = scene.camera.hfov_deg * M_PI / 180.0;
  const auto span = crop_columns(proj.width, 0.0, hfov);

  TrainBatch<float> batch;
  std::vector<float> range_values, cond_values, real_values;
  const int n = config_.train.batch_size;
  for (int b = 0; b < n; ++b) {
    const auto& sample = data_.samples[rng_.uniform_index(data_.samples.size())];
    auto [cloud, camera_seg] = augment(sample.cloud, sample.camera_seg, config_.train.augment,
                                       rng_);
    auto projected = project_cloud(cloud, proj);
    auto crop = crop_to_camera_fov(projected.image, 0.0, hfov);
    auto labels = crop_label_grid(*projected.label_grid, proj.height, proj.width, span);
    SegmentMap lidar_seg(span.width, proj.height,
                         std::vector<uint8_t>(labels.begin(), labels.end()));
    append_range_values(crop, range_values);
    append_onehot_values(lidar_seg, cond_values);
    append_onehot_values(camera_seg, real_values);
    batch.targets.push_back(std::move(camera_seg));
  }
  batch.range = Tensor<float>::constant({n, RangeImage::kChannels, proj.height, span.width},
                                        std::move(range_values));
  batch.condition = Tensor<float>::constant({n, kSharedClassCount, proj.height, span.width},
                                            std::move(cond_values));
  batch.real_onehot = Tensor<float>::constant(
      {n, kSharedClassCount, scene.camera.height, scene.camera.width}, std::move(real_values));
  return batch;
}

LossReport<float> Trainer::step() {
  auto batch = assemble_batch();
  LossReport<float> report;
  try {
    report = train_step(models_.generator, models_.discriminator, models_.adam_g, models_.adam_d,
                        batch, config_.train, rng_);
  } catch (const Error& e) {
    if (std::string(e.code()) == "training diverged") {
      throw Error("training diverged", "at step " + std::to_string(steps_));
    }
    throw;
  }
  ++steps_;
  if (log_) {
    char line[256];
    std::snprintf(line, sizeof(line), "%" PRId64 ",%.9g,%.9g,%.9g,%.9g\n", steps_,
                  static_cast<double>(report.d_loss), static_cast<double>(report.g_adv_loss),
                  static_cast<double>(report.lovasz_loss), static_cast<double>(report.gp_term));
    (*log_) << line;
  }
  return report;
}

// ---------------------------------------------------------------------------
// Inference
// ---------------------------------------------------------------------------

namespace {

SegmentMap argmax_map(const Tensor<float>& probs) {
  const int64_t c = probs.dim(1), h = probs.dim(2), w = probs.dim(3);
  const int64_t hw = h * w;
  SegmentMap out(static_cast<int>(w), static_cast<int>(h));
  for (int64_t i = 0; i < hw; ++i) {
    int best = 0;
    float best_v = probs.value()[i];
    for (int64_t ch = 1; ch < c; ++ch) {
      const float v = probs.value()[ch * hw + i];
      if (v > best_v) {  // ties keep the lowest id
        best_v = v;
        best = static_cast<int>(ch);
      }
    }
    out.set(static_cast<int>(i / w), static_cast<int>(i % w), static_cast<uint8_t>(best));
  }
  return out;
}

SegmentMap run_generator(Generator<float>& g, const RangeImage& range, const SegmentMap& seg) {
  if (seg.width() != range.width() || seg.height() != range.height()) {
    throw Error("shape mismatch", "range/segment dims differ");
  }
  auto range_t = range_to_tensor(range);
  auto cond_t = seg_to_condition(seg);
  Rng dummy(0);
  auto logits = g.forward(range_t, cond_t, /*training=*/false, dummy);
  return argmax_map(softmax(logits, 1));
}

}  // namespace

SegmentMap translate(Generator<float>& g, const RangeImage& range_crop,
                     const SegmentMap& lidar_seg) {
  if (range_crop.width() != g.config().in_width ||
      range_crop.height() != g.config().in_height) {
    throw Error("shape mismatch", "translate expects the training crop dimensions");
  }
  return run_generator(g, range_crop, lidar_seg);
}

SegmentMap render_panorama(Generator<float>& g, const RangeImage& range_full,
                           const SegmentMap& lidar_seg_full) {
  if (range_full.width() % g.config().in_width != 0) {
    throw Error("width not a multiple of the training crop granularity",
                std::to_string(range_full.width()) + " vs crop " +
                    std::to_string(g.config().in_width));
  }
  return run_generator(g, range_full, lidar_seg_full);
}

// ---------------------------------------------------------------------------
// Evaluation
// ---------------------------------------------------------------------------

MetricReport evaluate(std::span<const PairedSample> samples, Generator<float>& g,
                      const EvaluateOptions& options) {
  return evaluate_with(
      samples,
      [&g](const PairedSample& s) { return translate(g, s.range_crop, s.lidar_seg); }, options);
}

MetricReport evaluate_with(std::span<const PairedSample> samples, const TranslateFn& predictor,
                           const EvaluateOptions& options) {
  if (samples.empty()) throw Error("empty scan", "evaluate needs samples");
  std::vector<SegmentMap> preds(samples.size());
#pragma omp parallel for schedule(static)
  for (int64_t i = 0; i < static_cast<int64_t>(samples.size()); ++i) {
    preds[i] = predictor(samples[i]);
  }

  ConfusionMatrix confusion;
  std::vector<ImageRGB> pred_rgb, gt_rgb;
  double ssim_sum = 0.0;
  for (size_t i = 0; i < samples.size(); ++i) {
    confusion.add(preds[i], samples[i].camera_seg);
    pred_rgb.push_back(colorize(preds[i]));
    gt_rgb.push_back(colorize(samples[i].camera_seg));
    ssim_sum += ssim_rgb(pred_rgb.back(), gt_rgb.back());
  }

  MetricReport report;
  report.iou = confusion.iou();
  report.ssim = ssim_sum / static_cast<double>(samples.size());
  Rng rng(options.metric_seed);
  report.swd_per_level = swd_pyramid(pred_rgb, gt_rgb, options.swd, rng);
  double avg = 0.0;
  for (const auto& level : report.swd_per_level) avg += level.value;
  report.swd_avg = avg / static_cast<double>(report.swd_per_level.size());
  if (options.compute_frechet) {
    HistogramFeatures features;
    report.frechet = frechet_from_images(pred_rgb, gt_rgb, features);
    report.feature_extractor = features.name();
  }
  report.note =
      "metrics compare colorized segment maps (desk-scale proxy; no RGB synthesis model)";
  return report;
}

IouReport majority_class_baseline(std::span<const PairedSample> samples) {
  if (samples.empty()) throw Error("empty scan", "baseline needs samples");
  std::array<int64_t, kSharedClassCount> counts{};
  for (const auto& s : samples) {
    for (uint8_t id : s.camera_seg.ids()) counts[id]++;
  }
  int majority = 1;
  for (int c = 2; c < kSharedClassCount; ++c) {
    if (counts[c] > counts[majority]) majority = c;
  }
  ConfusionMatrix confusion;
  for (const auto& s : samples) {
    SegmentMap constant(s.camera_seg.width(), s.camera_seg.height());
    for (int r = 0; r < constant.height(); ++r) {
      for (int c = 0; c < constant.width(); ++c) {
        constant.set(r, c, static_cast<uint8_t>(majority));
      }
    }
    confusion.add(constant, s.camera_seg);
  }
  return confusion.iou();
}

std::optional<uint64_t> env_seed_override() {
  const char* value = std::getenv("PANOSEG_SEED");
  if (!value || !*value) return std::nullopt;
  char* end = nullptr;
  const unsigned long long parsed = std::strtoull(value, &end, 10);
  if (end == value || *end != '\0') {
    throw Error("invalid config value", std::string("PANOSEG_SEED = ") + value);
  }
  return static_cast<uint64_t>(parsed);
}

}  // namespace panoseg
