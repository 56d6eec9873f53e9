#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "panoseg/error.hpp"
#include "panoseg/image.hpp"

namespace panoseg {

// Shared label space bridging the two source taxonomies: id 0 is Unlabeled,
// ids 1..14 are the named classes common to both.
inline constexpr int kSharedClassCount = 15;

enum SharedId : uint8_t {
  kUnlabeled = 0,
  kCar,
  kBicycle,
  kMotorcycle,
  kTruck,
  kOtherVehicle,
  kPerson,
  kRoad,
  kSidewalk,
  kBuilding,
  kFence,
  kVegetation,
  kTerrain,
  kPole,
  kTrafficSign,
};

const char* shared_class_name(int shared_id);

// Per-class RGB color (Cityscapes convention palette); entries are distinct.
std::array<uint8_t, 3> class_color(int shared_id);

// Shared id for a raw SemanticKITTI class id. Throws "unmapped label".
uint8_t map_semantickitti(uint16_t raw_id);

// Shared id for a raw Cityscapes label id. Throws "unmapped label".
uint8_t map_cityscapes(uint16_t raw_id);

// Canonical raw SemanticKITTI id representing a shared class (used when
// emitting scan fixtures in the on-disk format).
uint16_t semantickitti_id_for(int shared_id);

// Grid of shared class ids.
class SegmentMap {
 public:
  SegmentMap() = default;
  SegmentMap(int w, int h) : width_(w), height_(h), ids_(static_cast<size_t>(w) * h, 0) {}
  SegmentMap(int w, int h, std::vector<uint8_t> ids);

  int width() const { return width_; }
  int height() const { return height_; }
  uint8_t at(int row, int col) const { return ids_[static_cast<size_t>(row) * width_ + col]; }
  void set(int row, int col, uint8_t id);
  const std::vector<uint8_t>& ids() const { return ids_; }

  bool operator==(const SegmentMap& other) const = default;

 private:
  int width_ = 0;
  int height_ = 0;
  std::vector<uint8_t> ids_;
};

// Per-pixel palette lookup.
ImageRGB colorize(const SegmentMap& map);

// Inverse palette lookup; empty when the color is not a class color.
std::optional<uint8_t> color_to_class(const std::array<uint8_t, 3>& rgb);

// Exact inverse of colorize. Throws "unmapped label" on non-palette pixels.
SegmentMap from_colorized(const ImageRGB& image);

// Emits the full mapping table as plain text, one
// "<taxonomy> <source-id> <source-name> <shared-id>" line per class, so the
// tables can be audited without reading code.
void write_mapping_table(const std::string& path);

// Row of the mapping table file.
struct MappingRow {
  std::string taxonomy;
  uint16_t source_id = 0;
  std::string source_name;
  uint8_t shared_id = 0;
};
std::vector<MappingRow> read_mapping_table(const std::string& path);
std::vector<MappingRow> builtin_mapping_rows();

}  // namespace panoseg

#include "panoseg/tensor.hpp"

namespace panoseg {

// One-hot encoding as a [C, h, w] tensor. With include_unlabeled=false the
// channels cover ids 1..14 and Unlabeled pixels are all-zero.
template <class T>
Tensor<T> one_hot(const SegmentMap& map, bool include_unlabeled) {
  const int channels = include_unlabeled ? kSharedClassCount : kSharedClassCount - 1;
  const int64_t hw = static_cast<int64_t>(map.width()) * map.height();
  std::vector<T> v(static_cast<size_t>(channels) * hw, T(0));
  for (int64_t i = 0; i < hw; ++i) {
    const int id = map.ids()[i];
    if (!include_unlabeled && id == kUnlabeled) continue;
    const int ch = include_unlabeled ? id : id - 1;
    v[static_cast<size_t>(ch) * hw + i] = T(1);
  }
  return Tensor<T>::constant({channels, map.height(), map.width()}, std::move(v));
}

}  // namespace panoseg
