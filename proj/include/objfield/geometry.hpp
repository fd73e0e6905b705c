#pragma once

#include <optional>
#include <string>

#include "objfield/errors.hpp"
#include "objfield/vec.hpp"

namespace objfield {

// Pinhole camera. Convention: camera-forward is -z, +x right, +y up in
// camera space; pixel (i, j) = (row, column) with rays cast through the
// pixel center (j + 0.5, i + 0.5).
struct Camera {
  RigidTransformF camera_to_world;
  float focal_x = 0, focal_y = 0;
  float principal_x = 0, principal_y = 0;  // (px, py) = (along width, along height)
  int width = 0, height = 0;
  std::string image_path;

  // Checks the rotation block is orthonormal with det +1 (tol 1e-5) and the
  // image size is sane. Loaders call this on every ingested camera.
  void validate() const;

  Vec3f position() const { return camera_to_world.translation; }

  // World point -> (u, v) pixel coordinates (u along width). Returns nullopt
  // for points at or behind the camera plane.
  std::optional<std::pair<float, float>> project(const Vec3f& world) const;
};

struct Ray {
  Vec3f origin;
  Vec3f direction;  // unit norm
  float t_near = 0, t_far = 0;

  bool degenerate() const { return !(t_near < t_far); }
  Vec3f at(float t) const { return origin + direction * t; }
};

struct ContractionConfig {
  float inner_radius = 1.0f;
  float outer_bound = 2.0f;
};

// Radial contraction: identity inside the unit ball, (2 - 1/|x|) * x/|x|
// outside. Maps all of space into the open ball of radius outer_bound.
template <class T>
Vec3<T> contract(const Vec3<T>& x) {
  T n = x.norm();
  if (n <= T(1)) return x;
  return x * ((T(2) - T(1) / n) / n);
}

// Ray through the center of pixel (i, j) = (row, column). t_near defaults to
// 0.05; t_far is where the ray exits the |x| = outer_bound ball (the extent
// of the contracted sampling domain). Rays that miss the ball come back with
// t_far = t_near and render empty.
Ray generate_ray(const Camera& camera, int i, int j, float t_near = 0.05f,
                 float outer_bound = 2.0f);

}  // namespace objfield
