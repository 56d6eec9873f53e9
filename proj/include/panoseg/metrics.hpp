#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "panoseg/image.hpp"
#include "panoseg/labels.hpp"
#include "panoseg/rng.hpp"

namespace panoseg {

// Grayscale raster with double precision values (nominally in [0,1]).
struct Grid {
  int width = 0;
  int height = 0;
  std::vector<double> v;

  Grid() = default;
  Grid(int w, int h) : width(w), height(h), v(static_cast<size_t>(w) * h, 0.0) {}
  double at(int row, int col) const { return v[static_cast<size_t>(row) * width + col]; }
  double& at(int row, int col) { return v[static_cast<size_t>(row) * width + col]; }
};

Grid to_gray(const ImageRGB& image);                 // Rec.601 luma in [0,1]
std::array<Grid, 3> to_channels(const ImageRGB& image);
Grid bilinear_resize(const Grid& g, int out_w, int out_h);

// ---------------------------------------------------------------------------
// Intersection over union
// ---------------------------------------------------------------------------

struct IouReport {
  std::array<double, kSharedClassCount> per_class{};  // NaN when class absent
  std::array<bool, kSharedClassCount> present{};
  double miou = 0.0;
};

// Confusion counts over (gt, pred) pairs; pixels with gt == ignore_id are
// excluded entirely. Accumulators merge associatively.
class ConfusionMatrix {
 public:
  void add(const SegmentMap& pred, const SegmentMap& gt, int ignore_id = 0);
  void merge(const ConfusionMatrix& other);
  IouReport iou(int ignore_id = 0) const;
  int64_t count(int gt_id, int pred_id) const { return counts_[gt_id][pred_id]; }

 private:
  std::array<std::array<int64_t, kSharedClassCount>, kSharedClassCount> counts_{};
};

IouReport miou(const SegmentMap& pred, const SegmentMap& gt, int ignore_id = 0);

// ---------------------------------------------------------------------------
// SSIM
// ---------------------------------------------------------------------------

// Mean SSIM over all valid (unpadded) windows, uniform window, constants
// C1=(0.01)^2, C2=(0.03)^2 for a unit dynamic range.
double ssim(const Grid& a, const Grid& b, int window = 11);
double ssim_rgb(const ImageRGB& a, const ImageRGB& b, int window = 11);

// ---------------------------------------------------------------------------
// Laplacian pyramid and sliced Wasserstein distance
// ---------------------------------------------------------------------------

// Band-pass levels of a square power-of-two image down to the low-pass
// residual at min_resolution (the last entry). Upsample-and-add reconstructs
// the input exactly up to floating point error.
std::vector<Grid> laplacian_pyramid(const Grid& image, int min_resolution = 16);
Grid reconstruct_pyramid(const std::vector<Grid>& levels);

// Internals exposed for oracle tests.
Grid pyramid_reduce(const Grid& g);
Grid pyramid_expand(const Grid& g);

// Flat set of equally sized patch descriptors.
struct PatchSet {
  int dim = 0;
  std::vector<double> data;  // count x dim, row-major
  size_t count() const { return dim == 0 ? 0 : data.size() / dim; }
};

// Mean over random unit projections of the exact sorted 1-D Wasserstein-1
// distance. Counts are equalized by downsampling the larger set.
double swd(const PatchSet& a, const PatchSet& b, int n_projections, Rng& rng);

struct SwdConfig {
  int target_resolution = 1024;  // images are resized here first
  int min_resolution = 16;
  int patch_size = 7;
  int patches_per_image = 128;
  size_t max_patches_per_level = size_t(1) << 14;
  int n_projections = 512;
};

struct SwdLevel {
  int resolution = 0;
  double value = 0.0;
};

// Full pipeline over two image sets: resize, per-channel pyramids, patch
// extraction with per-channel set normalization, per-level SWD.
std::vector<SwdLevel> swd_pyramid(std::span<const ImageRGB> set_a, std::span<const ImageRGB> set_b,
                                  const SwdConfig& config, Rng& rng);

// ---------------------------------------------------------------------------
// Frechet distance
// ---------------------------------------------------------------------------

struct SquareMatrix {
  int n = 0;
  std::vector<double> v;  // n x n row-major

  SquareMatrix() = default;
  explicit SquareMatrix(int size) : n(size), v(static_cast<size_t>(size) * size, 0.0) {}
  double at(int r, int c) const { return v[static_cast<size_t>(r) * n + c]; }
  double& at(int r, int c) { return v[static_cast<size_t>(r) * n + c]; }
};

struct GaussianStats {
  std::vector<double> mean;
  SquareMatrix cov;
};

GaussianStats fit_gaussian(const std::vector<std::vector<double>>& features);

// ||mu1-mu2||^2 + tr(S1 + S2 - 2 (S1 S2)^{1/2}); the matrix square root uses a
// symmetric eigendecomposition with negative eigenvalues clipped at zero.
// Throws on asymmetric or non-PSD inputs beyond tolerance 1e-6.
double frechet_distance(const std::vector<double>& mu1, const SquareMatrix& sigma1,
                        const std::vector<double>& mu2, const SquareMatrix& sigma2);

// Pluggable image feature extraction for distribution distances. The default
// histogram features are NOT comparable with Inception-based scores.
class FeatureExtractor {
 public:
  virtual ~FeatureExtractor() = default;
  virtual std::vector<double> extract(const ImageRGB& image) const = 0;
  virtual std::string name() const = 0;
};

// 64-bin per-channel histograms of a 64x64 downsample (192-dim features).
class HistogramFeatures : public FeatureExtractor {
 public:
  std::vector<double> extract(const ImageRGB& image) const override;
  std::string name() const override { return "histogram64"; }
};

double frechet_from_images(std::span<const ImageRGB> set_a, std::span<const ImageRGB> set_b,
                           const FeatureExtractor& features);

// ---------------------------------------------------------------------------
// Reports
// ---------------------------------------------------------------------------

struct MetricReport {
  IouReport iou;
  double ssim = 0.0;
  std::vector<SwdLevel> swd_per_level;
  double swd_avg = 0.0;
  std::optional<double> frechet;
  std::string feature_extractor;
  std::string note;  // provenance of the compared images
};

void write_report_csv(const std::string& path, const MetricReport& report);
std::string format_report_table(const MetricReport& report);

}  // namespace panoseg
