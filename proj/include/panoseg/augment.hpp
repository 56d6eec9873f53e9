#pragma once

#include <utility>

#include "panoseg/geometry.hpp"
#include "panoseg/labels.hpp"
#include "panoseg/rng.hpp"

namespace panoseg {

struct AugmentConfig {
  double flip_prob = 0.5;
  double drop_prob = 0.5;
  double max_drop_fraction = 0.1;
};

// Pre-projection augmentation of a paired sample. Flipping negates the y
// coordinate of every point, which mirrors the scene left-right; the paired
// camera segment map is mirrored along its columns to stay consistent.
// Point dropping removes a uniformly chosen fraction (up to the cap) of the
// points. The two branches fire independently.
inline std::pair<PointCloud, SegmentMap> augment(const PointCloud& cloud,
                                                 const SegmentMap& camera_map,
                                                 const AugmentConfig& cfg, Rng& rng) {
  const bool do_flip = rng.bernoulli(cfg.flip_prob);
  const bool do_drop = rng.bernoulli(cfg.drop_prob);

  std::vector<LidarPoint> pts = cloud.points();
  std::optional<std::vector<uint16_t>> labels;
  if (cloud.has_labels()) labels = cloud.labels();
  SegmentMap cam = camera_map;

  if (do_flip) {
    for (auto& p : pts) p.y = -p.y;
    SegmentMap mirrored(cam.width(), cam.height());
    for (int r = 0; r < cam.height(); ++r) {
      for (int c = 0; c < cam.width(); ++c) {
        mirrored.set(r, c, cam.at(r, cam.width() - 1 - c));
      }
    }
    cam = std::move(mirrored);
  }

  if (do_drop && !pts.empty()) {
    const double fraction = rng.uniform(0.0, cfg.max_drop_fraction);
    const uint64_t k = static_cast<uint64_t>(fraction * static_cast<double>(pts.size()));
    if (k > 0) {
      auto drop = rng.sample_indices(pts.size(), k);
      std::vector<bool> dead(pts.size(), false);
      for (uint64_t i : drop) dead[i] = true;
      std::vector<LidarPoint> kept;
      kept.reserve(pts.size() - k);
      std::optional<std::vector<uint16_t>> kept_labels;
      if (labels) kept_labels.emplace();
      for (size_t i = 0; i < pts.size(); ++i) {
        if (dead[i]) continue;
        kept.push_back(pts[i]);
        if (labels) kept_labels->push_back((*labels)[i]);
      }
      pts = std::move(kept);
      labels = std::move(kept_labels);
    }
  }

  return {PointCloud(std::move(pts), std::move(labels)), std::move(cam)};
}

}  // namespace panoseg
