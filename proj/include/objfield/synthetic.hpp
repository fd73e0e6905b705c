#pragma once

#include <filesystem>
#include <optional>
#include <vector>

#include "objfield/geometry.hpp"
#include "objfield/image.hpp"
#include "objfield/masks.hpp"
#include "objfield/vec.hpp"

namespace objfield {

// Axis-aligned analytic solids with constant density and flat albedo. The
// ground-truth field behind every derived oracle in the test suite.
struct Primitive {
  enum class Kind { kSphere, kBox, kDisk } kind = Kind::kSphere;
  Vec3f center;
  // sphere: x = radius; box: half extents; disk: x = radius, y = half thickness (z axis).
  Vec3f size;
  Vec3f albedo;
  uint16_t instance_id = 0;

  bool contains(const Vec3f& p) const;
};

struct AnalyticScene {
  std::vector<Primitive> primitives;
  Vec3f background{0, 0, 0};
  float solid_density = 500.0f;  // near-opaque at scene scale

  void validate() const;
};

// The default acceptance scene: three spheres and a box resting on a ground
// disk, all inside the unit sphere.
AnalyticScene default_scene();

struct ScenePointSample {
  float sigma = 0;
  Vec3f color;
  uint16_t instance_id = 0;  // 0 = empty space
};

// Overlaps resolve to the first primitive in list order.
ScenePointSample sample_scene(const AnalyticScene& scene, const Vec3f& x);

// Exact interval compositing along a ray (assumes disjoint primitives):
// the independent oracle for the quadrature renderer.
struct AnalyticRayResult {
  Vec3f color;
  float opacity = 0;
  float depth = 0;
  uint16_t first_hit_id = 0;  // instance of the nearest entered primitive
};
AnalyticRayResult analytic_render_ray(const AnalyticScene& scene, const Ray& ray);

ImageF analytic_render_image(const AnalyticScene& scene, const Camera& camera);
// First-hit instance ids (the 3D-consistent ground-truth label map).
ImageU16 analytic_label_map(const AnalyticScene& scene, const Camera& camera);

// Cameras on a sphere around the origin, look-at poses, golden-angle spiral.
std::vector<Camera> camera_ring(int num_views, int resolution, float radius = 2.2f,
                                float focal = 80.0f);

// Writes the full dataset layout consumed by the CLI: cameras.json,
// images/, clean per-instance masks, corrupted masks/, and labels/.
// Deterministic given the corruption seed.
void emit_dataset(const AnalyticScene& scene, int num_views, int resolution,
                  const CorruptionConfig& corruption, const std::filesystem::path& out_dir,
                  float camera_radius = 2.2f, float focal = 80.0f);

}  // namespace objfield
