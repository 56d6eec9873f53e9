#include "panoseg/labels.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

namespace panoseg {

namespace {

struct SourceClass {
  uint16_t id;
  const char* name;
  uint8_t shared;
};

// SemanticKITTI raw semantic ids -> shared ids. Riders fold into Person,
// Parking into Sidewalk, Trunk into Vegetation, Other-Ground into Unlabeled.
constexpr SourceClass kSemanticKitti[] = {
    {0, "Unlabeled", kUnlabeled},
    {10, "Car", kCar},
    {11, "Bicycle", kBicycle},
    {15, "Motorcycle", kMotorcycle},
    {18, "Truck", kTruck},
    {20, "Other-Vehicle", kOtherVehicle},
    {30, "Person", kPerson},
    {31, "Bicyclist", kPerson},
    {32, "Motorcyclist", kPerson},
    {40, "Road", kRoad},
    {44, "Parking", kSidewalk},
    {48, "Sidewalk", kSidewalk},
    {49, "Other-Ground", kUnlabeled},
    {50, "Building", kBuilding},
    {51, "Fence", kFence},
    {70, "Vegetation", kVegetation},
    {71, "Trunk", kVegetation},
    {72, "Terrain", kTerrain},
    {80, "Pole", kPole},
    {81, "Traffic-Sign", kTrafficSign},
};

// Cityscapes label ids for the 14 shared names plus Unlabeled; identity at the
// name level. Other-Vehicle is sourced from the bus id.
constexpr SourceClass kCityscapes[] = {
    {0, "Unlabeled", kUnlabeled},
    {26, "Car", kCar},
    {33, "Bicycle", kBicycle},
    {32, "Motorcycle", kMotorcycle},
    {27, "Truck", kTruck},
    {28, "Other-Vehicle", kOtherVehicle},
    {24, "Person", kPerson},
    {7, "Road", kRoad},
    {8, "Sidewalk", kSidewalk},
    {11, "Building", kBuilding},
    {13, "Fence", kFence},
    {21, "Vegetation", kVegetation},
    {22, "Terrain", kTerrain},
    {17, "Pole", kPole},
    {20, "Traffic-Sign", kTrafficSign},
};

constexpr const char* kSharedNames[kSharedClassCount] = {
    "Unlabeled", "Car",      "Bicycle",    "Motorcycle", "Truck",
    "Other-Vehicle", "Person", "Road",     "Sidewalk",   "Building",
    "Fence",     "Vegetation", "Terrain",  "Pole",       "Traffic-Sign",
};

constexpr std::array<uint8_t, 3> kPalette[kSharedClassCount] = {
    {0, 0, 0},        // Unlabeled
    {0, 0, 142},      // Car
    {119, 11, 32},    // Bicycle
    {0, 0, 230},      // Motorcycle
    {0, 0, 70},       // Truck
    {0, 60, 100},     // Other-Vehicle
    {220, 20, 60},    // Person
    {128, 64, 128},   // Road
    {244, 35, 232},   // Sidewalk
    {70, 70, 70},     // Building
    {190, 153, 153},  // Fence
    {107, 142, 35},   // Vegetation
    {152, 251, 152},  // Terrain
    {153, 153, 153},  // Pole
    {220, 220, 0},    // Traffic-Sign
};

void check_shared_id(int id) {
  if (id < 0 || id >= kSharedClassCount) {
    throw Error("unmapped label", "shared id out of range: " + std::to_string(id));
  }
}

}  // namespace

const char* shared_class_name(int shared_id) {
  check_shared_id(shared_id);
  return kSharedNames[shared_id];
}

std::array<uint8_t, 3> class_color(int shared_id) {
  check_shared_id(shared_id);
  return kPalette[shared_id];
}

uint8_t map_semantickitti(uint16_t raw_id) {
  for (const auto& row : kSemanticKitti) {
    if (row.id == raw_id) return row.shared;
  }
  throw Error("unmapped label", "SemanticKITTI id " + std::to_string(raw_id));
}

uint8_t map_cityscapes(uint16_t raw_id) {
  for (const auto& row : kCityscapes) {
    if (row.id == raw_id) return row.shared;
  }
  throw Error("unmapped label", "Cityscapes id " + std::to_string(raw_id));
}

uint16_t semantickitti_id_for(int shared_id) {
  check_shared_id(shared_id);
  for (const auto& row : kSemanticKitti) {
    if (row.shared == shared_id &&
        std::string(row.name) == kSharedNames[shared_id]) {
      return row.id;
    }
  }
  // Unlabeled and classes reached only by folding resolve to id 0.
  return 0;
}

SegmentMap::SegmentMap(int w, int h, std::vector<uint8_t> ids)
    : width_(w), height_(h), ids_(std::move(ids)) {
  if (ids_.size() != static_cast<size_t>(w) * h) {
    throw Error("invalid segment map", "id count does not match dimensions");
  }
  for (uint8_t id : ids_) check_shared_id(id);
}

void SegmentMap::set(int row, int col, uint8_t id) {
  check_shared_id(id);
  ids_[static_cast<size_t>(row) * width_ + col] = id;
}

ImageRGB colorize(const SegmentMap& map) {
  ImageRGB img(map.width(), map.height());
  for (int r = 0; r < map.height(); ++r) {
    for (int c = 0; c < map.width(); ++c) {
      img.at(r, c) = kPalette[map.at(r, c)];
    }
  }
  return img;
}

std::optional<uint8_t> color_to_class(const std::array<uint8_t, 3>& rgb) {
  for (int id = 0; id < kSharedClassCount; ++id) {
    if (kPalette[id] == rgb) return static_cast<uint8_t>(id);
  }
  return std::nullopt;
}

SegmentMap from_colorized(const ImageRGB& image) {
  SegmentMap map(image.width, image.height);
  for (int r = 0; r < image.height; ++r) {
    for (int c = 0; c < image.width; ++c) {
      auto id = color_to_class(image.at(r, c));
      if (!id) throw Error("unmapped label", "pixel color is not a class color");
      map.set(r, c, *id);
    }
  }
  return map;
}

std::vector<MappingRow> builtin_mapping_rows() {
  std::vector<MappingRow> rows;
  for (const auto& r : kSemanticKitti) {
    rows.push_back({"semantickitti", r.id, r.name, r.shared});
  }
  for (const auto& r : kCityscapes) {
    rows.push_back({"cityscapes", r.id, r.name, r.shared});
  }
  return rows;
}

void write_mapping_table(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error("unwritable path", path);
  out << "# taxonomy source-id source-name shared-id\n";
  out << "# shared ids: ";
  for (int i = 0; i < kSharedClassCount; ++i) {
    out << i << "=" << kSharedNames[i] << (i + 1 < kSharedClassCount ? " " : "\n");
  }
  for (const auto& r : builtin_mapping_rows()) {
    out << r.taxonomy << " " << r.source_id << " " << r.source_name << " "
        << static_cast<int>(r.shared_id) << "\n";
  }
}

std::vector<MappingRow> read_mapping_table(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("unreadable path", path);
  std::vector<MappingRow> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ss(line);
    MappingRow row;
    int source_id = 0, shared_id = 0;
    if (!(ss >> row.taxonomy >> source_id >> row.source_name >> shared_id)) {
      throw Error("unmapped label", "malformed mapping row: " + line);
    }
    row.source_id = static_cast<uint16_t>(source_id);
    row.shared_id = static_cast<uint8_t>(shared_id);
    rows.push_back(row);
  }
  return rows;
}

}  // namespace panoseg
