#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "objfield/geometry.hpp"
#include "objfield/image.hpp"
#include "objfield/masks.hpp"

namespace objfield {

// Zero-padded view id used across the dataset layout ("000", "001", ...).
std::string view_name(int index);

struct DatasetView {
  Camera camera;
  std::string view_id;
};

// On-disk layout: cameras.json, images/*.png, masks/<view>/<k>.png,
// clean/<view>/<k>.png, labels/<view>.png.
struct SceneDataset {
  std::filesystem::path root;
  int width = 0, height = 0;
  Vec3f background{0, 0, 0};
  std::vector<DatasetView> views;

  int num_views() const { return static_cast<int>(views.size()); }

  ImageF load_image(int view) const;
  ImageU16 load_labels(int view) const;
  MaskSet load_masks(int view) const;  // corrupted / ingested supervision
  MaskSet load_clean(int view) const;  // ground-truth instance silhouettes
  bool has_labels() const;
  bool has_masks() const;
  bool has_clean() const;
};

SceneDataset load_dataset(const std::filesystem::path& root);
void save_cameras(const SceneDataset& dataset);

}  // namespace objfield
