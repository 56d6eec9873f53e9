#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "panoseg/config_io.hpp"
#include "panoseg/geometry.hpp"
#include "panoseg/labels.hpp"
#include "panoseg/metrics.hpp"
#include "panoseg/net.hpp"
#include "panoseg/train.hpp"

namespace panoseg {

// ---------------------------------------------------------------------------
// SemanticKITTI on-disk formats
// ---------------------------------------------------------------------------

// Scan files are consecutive little-endian float32 quadruplets (x, y, z, i).
// Throws "malformed scan" when the size is not a multiple of 16 and
// "empty scan" on zero points.
PointCloud read_kitti_scan(const std::string& path);
void write_kitti_scan(const std::string& path, const PointCloud& cloud);

// Label files hold one little-endian u32 per point; the semantic class id is
// the low 16 bits (the high 16 bits carry an instance id and are discarded).
// Throws "label/scan mismatch" when the count differs from n_points.
std::vector<uint16_t> read_kitti_labels(const std::string& path, size_t n_points);
void write_kitti_labels(const std::string& path, const std::vector<uint16_t>& semantic_ids,
                        const std::vector<uint16_t>* instance_ids = nullptr);

// ---------------------------------------------------------------------------
// Synthetic paired scenes
// ---------------------------------------------------------------------------

struct LidarModel {
  int beams = 64;
  int azimuth_steps = 2048;
  double fov_up_deg = 3.0;
  double fov_down_deg = 25.0;
  double sensor_height = 1.9;
  double max_range = 120.0;

  ProjectionConfig projection() const;
};

struct CameraModel {
  int width = 512;
  int height = 64;
  double hfov_deg = 90.0;
  double sensor_height = 1.7;
};

struct CountRange {
  int min = 0;
  int max = 0;
};

struct SyntheticSceneConfig {
  uint64_t seed = 1;
  LidarModel lidar;
  CameraModel camera;
  CountRange cars{1, 4};
  CountRange trucks{0, 1};
  CountRange buildings{1, 3};
  CountRange poles{0, 3};
  CountRange persons{0, 2};
  CountRange vegetation{0, 3};

  void validate() const;
};

SyntheticSceneConfig scene_config_from(const KeyValues& kv);
KeyValues scene_config_to(const SyntheticSceneConfig& cfg);

// A LiDAR scan paired with camera-view ground truth of the same scene.
struct PairedSample {
  PointCloud cloud;       // labeled with shared ids, sensor frame
  RangeImage range_crop;  // camera-fov slab of the projected scan
  SegmentMap lidar_seg;   // shared ids over the slab (0 where no return)
  SegmentMap camera_seg;  // camera-view ground truth
};

// Deterministic in config.seed. Throws "degenerate scene" if nothing is hit.
PairedSample synth_scene(const SyntheticSceneConfig& config);

// Full-width projection of the sample's cloud (for panoramic inference).
ProjectionResult project_full(const PairedSample& sample, const LidarModel& lidar);

uint64_t sample_hash(const PairedSample& sample);

// ---------------------------------------------------------------------------
// Datasets
// ---------------------------------------------------------------------------

struct Dataset {
  SyntheticSceneConfig config;  // generation parameters (seed = base seed)
  std::vector<PairedSample> samples;
};

// Samples with seeds base_seed + [0, count).
Dataset synth_dataset(SyntheticSceneConfig config, uint64_t base_seed, int count);

// On-disk layout: <dir>/config.txt plus per-sample directories holding
// scan.bin / scan.label (SemanticKITTI formats, labels as canonical raw ids)
// and camera.pgm (y_s id map).
void save_dataset(const std::string& dir, const Dataset& dataset);
Dataset load_dataset(const std::string& dir);

// ---------------------------------------------------------------------------
// Batch assembly and training orchestration
// ---------------------------------------------------------------------------

// Fixed per-channel input scaling for (x, y, z, i, r) range planes.
std::array<double, 5> range_channel_scales();

Tensor<float> range_to_tensor(const RangeImage& image);
Tensor<float> seg_to_condition(const SegmentMap& seg);

struct TrainerConfig {
  GeneratorConfig generator;
  DiscriminatorConfig discriminator;
  TrainConfig train;
};

TrainerConfig trainer_config_from(const KeyValues& kv, const SyntheticSceneConfig& scene);

// Drives train_step over a dataset: seeded batch sampling, pre-projection
// augmentation, projection, one-hot encoding, loss logging.
class Trainer {
 public:
  Trainer(TrainerConfig config, const Dataset& data);

  // Runs one optimizer step; appends "step,d_loss,g_adv,lovasz,gp" to the log
  // when one is attached.
  LossReport<float> step();

  void attach_loss_log(std::ostream* log) { log_ = log; }
  int64_t steps_done() const { return steps_; }
  GanModels<float>& models() { return models_; }
  const TrainerConfig& config() const { return config_; }

  TrainBatch<float> assemble_batch();  // exposed for tests

 private:
  TrainerConfig config_;
  const Dataset& data_;
  GanModels<float> models_;
  Rng rng_;
  std::ostream* log_ = nullptr;
  int64_t steps_ = 0;
};

// ---------------------------------------------------------------------------
// Inference and evaluation
// ---------------------------------------------------------------------------

// argmax of the generator's softmax over a camera-fov crop.
SegmentMap translate(Generator<float>& g, const RangeImage& range_crop,
                     const SegmentMap& lidar_seg);

// Fully convolutional full-scan inference. The full width must be a multiple
// of the training crop width; the output width is camera width times that
// ratio. Throws "width not a multiple of the training crop granularity".
SegmentMap render_panorama(Generator<float>& g, const RangeImage& range_full,
                           const SegmentMap& lidar_seg_full);

struct EvaluateOptions {
  SwdConfig swd;
  bool compute_frechet = true;
  uint64_t metric_seed = 99;
};

// Translates every sample, accumulates confusion counts, and compares
// colorized segment maps (SSIM, pyramid SWD, histogram-feature Frechet).
MetricReport evaluate(std::span<const PairedSample> samples, Generator<float>& g,
                      const EvaluateOptions& options = {});

// Same evaluation driven by an arbitrary predictor (oracles in tests).
using TranslateFn = std::function<SegmentMap(const PairedSample&)>;
MetricReport evaluate_with(std::span<const PairedSample> samples, const TranslateFn& predictor,
                           const EvaluateOptions& options = {});

// mIoU of the constant predictor that always answers the majority class of
// the given samples.
IouReport majority_class_baseline(std::span<const PairedSample> samples);

// Environment override hook for RNG seeds (PANOSEG_SEED).
std::optional<uint64_t> env_seed_override();

}  // namespace panoseg
