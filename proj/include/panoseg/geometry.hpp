#pragma once

#include <cstdint>
#include <optional>
#include <utility>
#include <vector>

#include "panoseg/error.hpp"

namespace panoseg {

struct LidarPoint {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;
  double intensity = 0.0;
};

// A LiDAR scan: points in the sensor frame, optionally with per-point class ids.
class PointCloud {
 public:
  PointCloud(std::vector<LidarPoint> points,
             std::optional<std::vector<uint16_t>> labels = std::nullopt);

  const std::vector<LidarPoint>& points() const { return points_; }
  bool has_labels() const { return labels_.has_value(); }
  const std::vector<uint16_t>& labels() const { return *labels_; }
  size_t size() const { return points_.size(); }

 private:
  std::vector<LidarPoint> points_;
  std::optional<std::vector<uint16_t>> labels_;
};

// Range-view grid geometry. fov_up and fov_down are both stored as positive
// magnitudes (radians above / below the horizon); f = fov_up + fov_down.
struct ProjectionConfig {
  int width = 2048;
  int height = 64;
  double fov_up = 0.0;
  double fov_down = 0.0;

  double vertical_fov() const { return fov_up + fov_down; }
  void validate() const;
};

// h x w x 5 grid of (x, y, z, intensity, range) planes plus a validity mask.
// Invalid pixels hold the fill value -1 in every channel.
class RangeImage {
 public:
  static constexpr int kChannels = 5;
  static constexpr double kFillValue = -1.0;

  RangeImage() = default;
  explicit RangeImage(const ProjectionConfig& config);

  const ProjectionConfig& config() const { return config_; }
  int width() const { return config_.width; }
  int height() const { return config_.height; }

  double at(int channel, int row, int col) const {
    return data_[(static_cast<size_t>(channel) * config_.height + row) * config_.width + col];
  }
  double& at(int channel, int row, int col) {
    return data_[(static_cast<size_t>(channel) * config_.height + row) * config_.width + col];
  }
  bool valid(int row, int col) const {
    return valid_[static_cast<size_t>(row) * config_.width + col] != 0;
  }
  void set_valid(int row, int col, bool v) {
    valid_[static_cast<size_t>(row) * config_.width + col] = v ? 1 : 0;
  }

  // Planar (channel, row, col) storage; handy for tensor assembly.
  const std::vector<double>& data() const { return data_; }
  const std::vector<uint8_t>& valid_mask() const { return valid_; }

 private:
  ProjectionConfig config_;
  std::vector<double> data_;
  std::vector<uint8_t> valid_;
};

// Projection of a labeled cloud also yields a per-pixel label grid
// (0 where no point landed).
struct ProjectionResult {
  RangeImage image;
  std::optional<std::vector<uint16_t>> label_grid;
};

// Spherical projection of one point to real-valued image coordinates
// (before flooring/clamping). Throws "degenerate point" on zero range.
std::pair<double, double> project_point(double x, double y, double z,
                                        const ProjectionConfig& config);

// Projects a full cloud; pixel collisions keep the nearest point. Throws
// "empty cloud".
ProjectionResult project_cloud(const PointCloud& cloud, const ProjectionConfig& config);

// Column span (start may be negative: wraps around the +-pi seam).
struct ColumnSpan {
  int start = 0;
  int width = 0;
};

// Columns of a width-w range view whose azimuths fall within
// center +- horizontal_fov/2.
ColumnSpan crop_columns(int image_width, double center_azimuth, double horizontal_fov);

// Contiguous (wrap-aware) column slab of the range image covering the given
// horizontal field of view.
RangeImage crop_to_camera_fov(const RangeImage& image, double center_azimuth,
                              double horizontal_fov);

// Same slab applied to a per-pixel label grid of the matching width.
std::vector<uint16_t> crop_label_grid(const std::vector<uint16_t>& grid, int height,
                                      int image_width, const ColumnSpan& span);

}  // namespace panoseg
