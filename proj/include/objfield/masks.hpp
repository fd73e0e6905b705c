#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "objfield/fields.hpp"
#include "objfield/image.hpp"
#include "objfield/renderer.hpp"

namespace objfield {

// Per-view collection of binary masks (values 0/1) with optional quality
// scores. Masks may overlap and need not cover the image.
struct MaskSet {
  std::string view_id;
  int height = 0, width = 0;
  std::vector<ImageU8> masks;
  struct Scores {
    float predicted_iou = 0, stability = 0;
  };
  std::vector<std::optional<Scores>> scores;  // parallel to masks
  std::vector<bool> is_background;            // parallel to masks
  bool processed = false;                     // postprocess already applied

  int count() const { return static_cast<int>(masks.size()); }
  void push(ImageU8 mask, std::optional<Scores> score = std::nullopt, bool background = false) {
    masks.push_back(std::move(mask));
    scores.push_back(score);
    is_background.push_back(background);
  }
};

// Synthesizes the cross-view inconsistency of zero-shot masks: random drops,
// straight-cut splits, merges of touching masks, morphological jitter, and a
// shuffled per-view order.
struct CorruptionConfig {
  double drop_prob = 0;
  double split_prob = 0;
  double merge_prob = 0;
  int jitter_px = 0;
  uint64_t seed = 0;

  void validate() const {
    if (drop_prob < 0 || drop_prob > 1 || split_prob < 0 || split_prob > 1 || merge_prob < 0 ||
        merge_prob > 1)
      throw ConfigError("corruption probabilities must lie in [0,1]");
    if (jitter_px < 0) throw ConfigError("jitter_px must be >= 0");
  }
};

int mask_area(const ImageU8& mask);
ImageU8 dilate(const ImageU8& mask, int radius);
ImageU8 erode(const ImageU8& mask, int radius);

// Containment removal, then the relative-area filter, then the score filter,
// then dilation of the survivors. Idempotent: a processed set passes through
// unchanged (dilation is counted once).
MaskSet postprocess(const MaskSet& raw, double min_area_frac = 0.03, double min_score = 0.70,
                    int dilate_px = 5);

// A pixel is background when its ray escapes (opacity < 0.5) or its expected
// termination point leaves the unit sphere.
template <class S>
ImageU8 background_mask(const Camera& camera, RadianceField<S>& radiance,
                        const SamplingConfig& cfg, LevelMask mask, uint64_t seed) {
  auto [rgb, prob] = render_image(camera, radiance, static_cast<ObjectField<S>*>(nullptr), cfg,
                                  mask, seed);
  (void)rgb;
  ImageU8 bg(camera.height, camera.width, 1);
  for (int i = 0; i < camera.height; ++i)
    for (int j = 0; j < camera.width; ++j) {
      Ray ray = generate_ray(camera, i, j);
      float opacity = prob.opacity.at(i, j);
      Vec3f term = ray.origin + ray.direction * prob.depth.at(i, j);
      bg.at(i, j) = (opacity < 0.5f || term.norm() > 1.0f) ? 1 : 0;
    }
  return bg;
}

MaskSet corrupt_masks(const MaskSet& clean, const CorruptionConfig& cfg, uint64_t view_index = 0);

// Directory layout: <dir>/<view_id>/<k>.png (8-bit, 0/255) plus optional
// meta.json with {"k": {"predicted_iou": f, "stability": f}}. Masks at
// foreign resolutions are nearest-neighbor resized to (height, width).
MaskSet load_mask_set(const std::filesystem::path& masks_dir, const std::string& view_id,
                      int height, int width);
void save_mask_set(const std::filesystem::path& masks_dir, const MaskSet& set);

}  // namespace objfield
