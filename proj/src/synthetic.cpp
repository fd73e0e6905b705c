#include "objfield/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>

#include "json.hpp"
#include "objfield/dataset.hpp"

namespace objfield {

bool Primitive::contains(const Vec3f& p) const {
  Vec3f d = p - center;
  switch (kind) {
    case Kind::kSphere:
      return d.norm2() <= size.x * size.x;
    case Kind::kBox:
      return std::abs(d.x) <= size.x && std::abs(d.y) <= size.y && std::abs(d.z) <= size.z;
    case Kind::kDisk:
      return d.x * d.x + d.y * d.y <= size.x * size.x && std::abs(d.z) <= size.y;
  }
  return false;
}

void AnalyticScene::validate() const {
  std::set<uint16_t> ids;
  for (const Primitive& p : primitives) {
    if (p.instance_id < 1) throw ConfigError("primitive instance ids must be >= 1");
    if (!ids.insert(p.instance_id).second) throw ConfigError("duplicate primitive instance id");
    float reach = p.center.norm() + std::max({p.size.x, p.size.y, p.size.z});
    if (reach >= 1.0f) throw ConfigError("primitives must stay inside the unit sphere");
  }
}

AnalyticScene default_scene() {
  AnalyticScene scene;
  scene.primitives = {
      {Primitive::Kind::kSphere, {-0.32f, -0.18f, -0.10f}, {0.22f, 0, 0}, {0.85f, 0.20f, 0.15f}, 1},
      {Primitive::Kind::kSphere, {0.33f, -0.22f, -0.13f}, {0.19f, 0, 0}, {0.15f, 0.65f, 0.90f}, 2},
      {Primitive::Kind::kSphere, {0.02f, 0.34f, -0.08f}, {0.24f, 0, 0}, {0.25f, 0.80f, 0.25f}, 3},
      {Primitive::Kind::kBox, {0.04f, 0.02f, -0.22f}, {0.14f, 0.14f, 0.10f}, {0.95f, 0.80f, 0.20f}, 4},
      {Primitive::Kind::kDisk, {0.0f, 0.0f, -0.36f}, {0.62f, 0.03f, 0}, {0.45f, 0.40f, 0.55f}, 5},
  };
  scene.validate();
  return scene;
}

ScenePointSample sample_scene(const AnalyticScene& scene, const Vec3f& x) {
  for (const Primitive& p : scene.primitives)
    if (p.contains(x)) return {scene.solid_density, p.albedo, p.instance_id};
  return {0.0f, scene.background, 0};
}

namespace {

struct HitInterval {
  float t0, t1;
  int prim;
};

// Entry/exit parameters of a ray against one primitive, or nullopt.
std::optional<std::pair<float, float>> intersect(const Primitive& p, const Ray& ray) {
  const Vec3f o = ray.origin - p.center;
  const Vec3f& d = ray.direction;
  switch (p.kind) {
    case Primitive::Kind::kSphere: {
      float b = o.dot(d);
      float c = o.norm2() - p.size.x * p.size.x;
      float disc = b * b - c;
      if (disc <= 0) return std::nullopt;
      float s = std::sqrt(disc);
      return std::make_pair(-b - s, -b + s);
    }
    case Primitive::Kind::kBox: {
      float t0 = -1e30f, t1 = 1e30f;
      for (int a = 0; a < 3; ++a) {
        if (std::abs(d[a]) < 1e-12f) {
          if (std::abs(o[a]) > p.size[a]) return std::nullopt;
          continue;
        }
        float lo = (-p.size[a] - o[a]) / d[a];
        float hi = (p.size[a] - o[a]) / d[a];
        if (lo > hi) std::swap(lo, hi);
        t0 = std::max(t0, lo);
        t1 = std::min(t1, hi);
      }
      if (t0 >= t1) return std::nullopt;
      return std::make_pair(t0, t1);
    }
    case Primitive::Kind::kDisk: {
      // z slab
      float t0, t1;
      if (std::abs(d.z) < 1e-12f) {
        if (std::abs(o.z) > p.size.y) return std::nullopt;
        t0 = -1e30f;
        t1 = 1e30f;
      } else {
        t0 = (-p.size.y - o.z) / d.z;
        t1 = (p.size.y - o.z) / d.z;
        if (t0 > t1) std::swap(t0, t1);
      }
      // infinite cylinder along z
      float a = d.x * d.x + d.y * d.y;
      if (a < 1e-12f) {
        if (o.x * o.x + o.y * o.y > p.size.x * p.size.x) return std::nullopt;
      } else {
        float b = (o.x * d.x + o.y * d.y) / a;
        float c = (o.x * o.x + o.y * o.y - p.size.x * p.size.x) / a;
        float disc = b * b - c;
        if (disc <= 0) return std::nullopt;
        float s = std::sqrt(disc);
        t0 = std::max(t0, -b - s);
        t1 = std::min(t1, -b + s);
      }
      if (t0 >= t1) return std::nullopt;
      return std::make_pair(t0, t1);
    }
  }
  return std::nullopt;
}

}  // namespace

AnalyticRayResult analytic_render_ray(const AnalyticScene& scene, const Ray& ray) {
  std::vector<HitInterval> hits;
  for (size_t k = 0; k < scene.primitives.size(); ++k) {
    auto span = intersect(scene.primitives[k], ray);
    if (!span) continue;
    float t0 = std::max(span->first, ray.t_near);
    float t1 = std::min(span->second, ray.t_far);
    if (t0 < t1) hits.push_back({t0, t1, static_cast<int>(k)});
  }
  std::sort(hits.begin(), hits.end(), [](const HitInterval& a, const HitInterval& b) {
    return a.t0 < b.t0;
  });

  AnalyticRayResult res;
  res.color = {0, 0, 0};
  double T = 1.0;
  const double sigma = scene.solid_density;
  for (const HitInterval& h : hits) {
    if (res.first_hit_id == 0) res.first_hit_id = scene.primitives[h.prim].instance_id;
    double len = h.t1 - h.t0;
    double absorb = std::exp(-sigma * len);
    double w = T * (1.0 - absorb);
    res.color += scene.primitives[h.prim].albedo * static_cast<float>(w);
    res.opacity += static_cast<float>(w);
    // Exact expected-depth contribution of a constant-density span.
    double inv = 1.0 / sigma;
    res.depth += static_cast<float>(T * (h.t0 + inv - absorb * (h.t1 + inv)));
    T *= absorb;
  }
  res.color += scene.background * static_cast<float>(T);
  return res;
}

ImageF analytic_render_image(const AnalyticScene& scene, const Camera& camera) {
  ImageF img(camera.height, camera.width, 3);
  for (int i = 0; i < camera.height; ++i)
    for (int j = 0; j < camera.width; ++j) {
      AnalyticRayResult r = analytic_render_ray(scene, generate_ray(camera, i, j));
      img.at(i, j, 0) = r.color.x;
      img.at(i, j, 1) = r.color.y;
      img.at(i, j, 2) = r.color.z;
    }
  return img;
}

ImageU16 analytic_label_map(const AnalyticScene& scene, const Camera& camera) {
  ImageU16 labels(camera.height, camera.width, 1);
  for (int i = 0; i < camera.height; ++i)
    for (int j = 0; j < camera.width; ++j)
      labels.at(i, j) = analytic_render_ray(scene, generate_ray(camera, i, j)).first_hit_id;
  return labels;
}

std::vector<Camera> camera_ring(int num_views, int resolution, float radius, float focal) {
  std::vector<Camera> cams;
  const float golden = 2.39996323f;
  for (int v = 0; v < num_views; ++v) {
    float az = golden * static_cast<float>(v);
    // Elevation sweeps 15..55 degrees so tops and sides are both covered.
    float el = (15.0f + 40.0f * (num_views > 1 ? float(v) / (num_views - 1) : 0.5f)) *
               static_cast<float>(M_PI) / 180.0f;
    Vec3f pos{radius * std::cos(el) * std::cos(az), radius * std::cos(el) * std::sin(az),
              radius * std::sin(el)};
    Vec3f z_cam = pos.normalized();  // camera looks along -z toward the origin
    Vec3f up{0, 0, 1};
    Vec3f x_cam = up.cross(z_cam).normalized();
    Vec3f y_cam = z_cam.cross(x_cam);
    Camera cam;
    for (int r = 0; r < 3; ++r) {
      cam.camera_to_world.rotation(r, 0) = x_cam[r];
      cam.camera_to_world.rotation(r, 1) = y_cam[r];
      cam.camera_to_world.rotation(r, 2) = z_cam[r];
    }
    cam.camera_to_world.translation = pos;
    cam.width = cam.height = resolution;
    cam.focal_x = cam.focal_y = focal * resolution / 64.0f;
    cam.principal_x = resolution / 2.0f;
    cam.principal_y = resolution / 2.0f;
    cam.validate();
    cams.push_back(cam);
  }
  return cams;
}

void emit_dataset(const AnalyticScene& scene, int num_views, int resolution,
                  const CorruptionConfig& corruption, const std::filesystem::path& out_dir,
                  float camera_radius, float focal) {
  namespace fs = std::filesystem;
  if (num_views < 2) throw ConfigError("emit_dataset needs at least 2 views");
  scene.validate();
  corruption.validate();
  fs::create_directories(out_dir / "images");
  fs::create_directories(out_dir / "labels");

  std::vector<Camera> cams = camera_ring(num_views, resolution, camera_radius, focal);
  SceneDataset ds;
  ds.root = out_dir;
  ds.width = ds.height = resolution;
  ds.background = scene.background;

  for (int v = 0; v < num_views; ++v) {
    std::string id = view_name(v);
    Camera& cam = cams[v];
    cam.image_path = "images/" + id + ".png";
    write_png8(out_dir / cam.image_path, quantize_to_u8(analytic_render_image(scene, cam)));

    ImageU16 labels = analytic_label_map(scene, cam);
    write_png16(out_dir / "labels" / (id + ".png"), labels);

    // Clean per-instance masks: exactly the pixels whose label equals the id.
    MaskSet clean;
    clean.view_id = id;
    clean.height = clean.width = resolution;
    for (const Primitive& p : scene.primitives) {
      ImageU8 mask(resolution, resolution, 1);
      bool any = false;
      for (size_t q = 0; q < labels.data.size(); ++q) {
        mask.data[q] = labels.data[q] == p.instance_id ? 1 : 0;
        any |= mask.data[q] != 0;
      }
      if (any) clean.push(std::move(mask));
    }
    save_mask_set(out_dir / "clean", clean);
    save_mask_set(out_dir / "masks", corrupt_masks(clean, corruption, static_cast<uint64_t>(v)));

    ds.views.push_back({cam, id});
  }
  save_cameras(ds);
}

}  // namespace objfield
