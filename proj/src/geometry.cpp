#include "panoseg/geometry.hpp"

#include <cmath>

namespace panoseg {

namespace {
constexpr double kPi = 3.14159265358979323846264338327950288;
}

PointCloud::PointCloud(std::vector<LidarPoint> points,
                       std::optional<std::vector<uint16_t>> labels)
    : points_(std::move(points)), labels_(std::move(labels)) {
  if (labels_ && labels_->size() != points_.size()) {
    throw Error("label/scan mismatch", "labels: " + std::to_string(labels_->size()) +
                                           ", points: " + std::to_string(points_.size()));
  }
  for (const auto& p : points_) {
    if (!std::isfinite(p.x) || !std::isfinite(p.y) || !std::isfinite(p.z)) {
      throw Error("degenerate point", "non-finite coordinates");
    }
    if (p.x == 0.0 && p.y == 0.0 && p.z == 0.0) {
      throw Error("degenerate point", "zero range");
    }
  }
}

void ProjectionConfig::validate() const {
  if (width < 1 || height < 1) {
    throw Error("invalid projection config", "width and height must be >= 1");
  }
  if (!(vertical_fov() > 0.0)) {
    throw Error("invalid projection config", "fov_up + fov_down must be > 0");
  }
}

RangeImage::RangeImage(const ProjectionConfig& config) : config_(config) {
  config_.validate();
  data_.assign(static_cast<size_t>(kChannels) * config_.height * config_.width, kFillValue);
  valid_.assign(static_cast<size_t>(config_.height) * config_.width, 0);
}

std::pair<double, double> project_point(double x, double y, double z,
                                        const ProjectionConfig& config) {
  const double r = std::sqrt(x * x + y * y + z * z);
  if (r == 0.0) throw Error("degenerate point", "zero range");
  const double f = config.vertical_fov();
  const double u = 0.5 * (1.0 - std::atan2(y, x) / kPi) * config.width;
  const double v = (1.0 - (std::asin(z / r) + config.fov_down) / f) * config.height;
  return {u, v};
}

ProjectionResult project_cloud(const PointCloud& cloud, const ProjectionConfig& config) {
  config.validate();
  if (cloud.size() == 0) throw Error("empty cloud");

  ProjectionResult out;
  out.image = RangeImage(config);
  if (cloud.has_labels()) {
    out.label_grid.emplace(static_cast<size_t>(config.height) * config.width, 0);
  }

  const int w = config.width;
  const int h = config.height;
  // Per-pixel best range so far; collisions keep the nearest point.
  std::vector<double> best(static_cast<size_t>(h) * w, -1.0);

  for (size_t i = 0; i < cloud.size(); ++i) {
    const LidarPoint& p = cloud.points()[i];
    const double r = std::sqrt(p.x * p.x + p.y * p.y + p.z * p.z);
    auto [u, v] = project_point(p.x, p.y, p.z, config);
    int col = static_cast<int>(std::floor(u));
    int row = static_cast<int>(std::floor(v));
    col = col < 0 ? 0 : (col >= w ? w - 1 : col);
    row = row < 0 ? 0 : (row >= h ? h - 1 : row);

    const size_t pix = static_cast<size_t>(row) * w + col;
    if (best[pix] >= 0.0 && best[pix] <= r) continue;
    best[pix] = r;
    out.image.at(0, row, col) = p.x;
    out.image.at(1, row, col) = p.y;
    out.image.at(2, row, col) = p.z;
    out.image.at(3, row, col) = p.intensity;
    out.image.at(4, row, col) = r;
    out.image.set_valid(row, col, true);
    if (out.label_grid) (*out.label_grid)[pix] = cloud.labels()[i];
  }
  return out;
}

ColumnSpan crop_columns(int image_width, double center_azimuth, double horizontal_fov) {
  if (!(horizontal_fov > 0.0) || horizontal_fov > 2.0 * kPi + 1e-12) {
    throw Error("invalid crop", "horizontal_fov must be in (0, 2*pi]");
  }
  const int width = static_cast<int>(std::llround(image_width * horizontal_fov / (2.0 * kPi)));
  const double u_center = 0.5 * (1.0 - center_azimuth / kPi) * image_width;
  int start = static_cast<int>(std::floor(u_center)) - width / 2;
  // Normalize into [0, image_width); the slab may still wrap past the seam.
  start %= image_width;
  if (start < 0) start += image_width;
  return {start, width};
}

RangeImage crop_to_camera_fov(const RangeImage& image, double center_azimuth,
                              double horizontal_fov) {
  const ColumnSpan span = crop_columns(image.width(), center_azimuth, horizontal_fov);
  ProjectionConfig cfg = image.config();
  cfg.width = span.width;
  RangeImage out(cfg);
  for (int c = 0; c < RangeImage::kChannels; ++c) {
    for (int row = 0; row < image.height(); ++row) {
      for (int j = 0; j < span.width; ++j) {
        const int src = (span.start + j) % image.width();
        out.at(c, row, j) = image.at(c, row, src);
      }
    }
  }
  for (int row = 0; row < image.height(); ++row) {
    for (int j = 0; j < span.width; ++j) {
      const int src = (span.start + j) % image.width();
      out.set_valid(row, j, image.valid(row, src));
    }
  }
  return out;
}

std::vector<uint16_t> crop_label_grid(const std::vector<uint16_t>& grid, int height,
                                      int image_width, const ColumnSpan& span) {
  std::vector<uint16_t> out(static_cast<size_t>(height) * span.width, 0);
  for (int row = 0; row < height; ++row) {
    for (int j = 0; j < span.width; ++j) {
      const int src = (span.start + j) % image_width;
      out[static_cast<size_t>(row) * span.width + j] =
          grid[static_cast<size_t>(row) * image_width + src];
    }
  }
  return out;
}

}  // namespace panoseg
