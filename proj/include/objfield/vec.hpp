#pragma once

#include <array>
#include <cmath>
#include <cstdint>

namespace objfield {

template <class T>
struct Vec3 {
  T x = 0, y = 0, z = 0;

  Vec3() = default;
  Vec3(T x_, T y_, T z_) : x(x_), y(y_), z(z_) {}

  T& operator[](int i) { return (&x)[i]; }
  T operator[](int i) const { return (&x)[i]; }

  Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
  Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
  Vec3 operator*(T s) const { return {x * s, y * s, z * s}; }
  Vec3 operator/(T s) const { return {x / s, y / s, z / s}; }
  Vec3 operator-() const { return {-x, -y, -z}; }
  Vec3& operator+=(const Vec3& o) { x += o.x; y += o.y; z += o.z; return *this; }

  T dot(const Vec3& o) const { return x * o.x + y * o.y + z * o.z; }
  Vec3 cross(const Vec3& o) const {
    return {y * o.z - z * o.y, z * o.x - x * o.z, x * o.y - y * o.x};
  }
  T norm2() const { return dot(*this); }
  T norm() const { return std::sqrt(norm2()); }
  Vec3 normalized() const { T n = norm(); return n > 0 ? *this / n : Vec3{}; }

  template <class U>
  Vec3<U> cast() const { return {U(x), U(y), U(z)}; }
};

template <class T>
Vec3<T> operator*(T s, const Vec3<T>& v) { return v * s; }

using Vec3f = Vec3<float>;
using Vec3d = Vec3<double>;

// Row-major 3x3 rotation block.
template <class T>
struct Mat3 {
  std::array<T, 9> m{1, 0, 0, 0, 1, 0, 0, 0, 1};

  T& operator()(int r, int c) { return m[r * 3 + c]; }
  T operator()(int r, int c) const { return m[r * 3 + c]; }

  Vec3<T> operator*(const Vec3<T>& v) const {
    return {m[0] * v.x + m[1] * v.y + m[2] * v.z,
            m[3] * v.x + m[4] * v.y + m[5] * v.z,
            m[6] * v.x + m[7] * v.y + m[8] * v.z};
  }
  Mat3 operator*(const Mat3& o) const {
    Mat3 r;
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) {
        T s = 0;
        for (int k = 0; k < 3; ++k) s += (*this)(i, k) * o(k, j);
        r(i, j) = s;
      }
    return r;
  }
  Mat3 transposed() const {
    Mat3 r;
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) r(i, j) = (*this)(j, i);
    return r;
  }
  T det() const {
    return m[0] * (m[4] * m[8] - m[5] * m[7]) - m[1] * (m[3] * m[8] - m[5] * m[6]) +
           m[2] * (m[3] * m[7] - m[4] * m[6]);
  }
};

using Mat3f = Mat3<float>;
using Mat3d = Mat3<double>;

// Rigid transform: x_world = R * x_local + t.
template <class T>
struct RigidTransform {
  Mat3<T> rotation;
  Vec3<T> translation;

  Vec3<T> apply(const Vec3<T>& p) const { return rotation * p + translation; }
  Vec3<T> apply_dir(const Vec3<T>& d) const { return rotation * d; }
  RigidTransform inverse() const {
    RigidTransform inv;
    inv.rotation = rotation.transposed();
    inv.translation = -(inv.rotation * translation);
    return inv;
  }
};

using RigidTransformF = RigidTransform<float>;

}  // namespace objfield
