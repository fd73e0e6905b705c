#include "objfield/geometry.hpp"

#include <cmath>

namespace objfield {

void Camera::validate() const {
  const Mat3f& r = camera_to_world.rotation;
  Mat3f rtr = r.transposed() * r;
  for (int a = 0; a < 3; ++a)
    for (int b = 0; b < 3; ++b) {
      float want = a == b ? 1.0f : 0.0f;
      if (std::abs(rtr(a, b) - want) > 1e-5f)
        throw InputDomainError("camera rotation is not orthonormal");
    }
  if (std::abs(r.det() - 1.0f) > 1e-4f)
    throw InputDomainError("camera rotation determinant is not +1");
  if (width < 1 || height < 1) throw InputDomainError("camera image size must be >= 1");
  if (!(focal_x > 0) || !(focal_y > 0)) throw InputDomainError("camera focal must be positive");
}

std::optional<std::pair<float, float>> Camera::project(const Vec3f& world) const {
  RigidTransformF w2c = camera_to_world.inverse();
  Vec3f p = w2c.apply(world);
  if (p.z >= -1e-9f) return std::nullopt;  // at or behind the camera
  float inv_depth = -1.0f / p.z;
  float u = principal_x + focal_x * p.x * inv_depth;
  float v = principal_y - focal_y * p.y * inv_depth;
  return std::make_pair(u, v);
}

Ray generate_ray(const Camera& camera, int i, int j, float t_near, float outer_bound) {
  if (i < 0 || i >= camera.height || j < 0 || j >= camera.width)
    throw InputDomainError("pixel out of bounds");
  float u = static_cast<float>(j) + 0.5f;
  float v = static_cast<float>(i) + 0.5f;
  Vec3f dir_cam{(u - camera.principal_x) / camera.focal_x,
                -(v - camera.principal_y) / camera.focal_y, -1.0f};
  Ray ray;
  ray.origin = camera.camera_to_world.translation;
  ray.direction = camera.camera_to_world.apply_dir(dir_cam).normalized();

  // Exit point of the |x| = outer_bound ball bounds the sampling segment.
  float od = ray.origin.dot(ray.direction);
  float disc = od * od - (ray.origin.norm2() - outer_bound * outer_bound);
  ray.t_near = t_near;
  if (disc <= 0) {
    ray.t_far = t_near;  // misses the sampling domain
    return ray;
  }
  float t_exit = -od + std::sqrt(disc);
  ray.t_far = t_exit > t_near ? t_exit : t_near;
  return ray;
}

}  // namespace objfield
