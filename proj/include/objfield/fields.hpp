#pragma once

#include <vector>

#include "objfield/hash_grid.hpp"
#include "objfield/mlp.hpp"
#include "objfield/tape.hpp"
#include "objfield/vec.hpp"

namespace objfield {

// Real spherical harmonics through degree 4 (25 coefficients), the usual
// view-direction encoding for the color head.
inline constexpr int kShDim = 25;

template <class S>
void sh_encode(const Vec3<S>& d, S* out) {
  S x = d.x, y = d.y, z = d.z;
  S xx = x * x, yy = y * y, zz = z * z;
  out[0] = S(0.28209479177387814);
  out[1] = S(0.4886025119029199) * y;
  out[2] = S(0.4886025119029199) * z;
  out[3] = S(0.4886025119029199) * x;
  out[4] = S(1.0925484305920792) * x * y;
  out[5] = S(1.0925484305920792) * y * z;
  out[6] = S(0.9461746957575601) * zz - S(0.31539156525252005);
  out[7] = S(1.0925484305920792) * x * z;
  out[8] = S(0.5462742152960396) * (xx - yy);
  out[9] = S(0.5900435899266435) * y * (S(3) * xx - yy);
  out[10] = S(2.890611442640554) * x * y * z;
  out[11] = S(0.4570457994644658) * y * (S(5) * zz - S(1));
  out[12] = S(0.3731763325901154) * z * (S(5) * zz - S(3));
  out[13] = S(0.4570457994644658) * x * (S(5) * zz - S(1));
  out[14] = S(1.445305721320277) * z * (xx - yy);
  out[15] = S(0.5900435899266435) * x * (xx - S(3) * yy);
  out[16] = S(2.5033429417967046) * x * y * (xx - yy);
  out[17] = S(1.7701307697799304) * y * z * (S(3) * xx - yy);
  out[18] = S(0.9461746957575601) * x * y * (S(7) * zz - S(1));
  out[19] = S(0.6690465435572892) * y * z * (S(7) * zz - S(3));
  out[20] = S(0.10578554691520431) * (S(35) * zz * zz - S(30) * zz + S(3));
  out[21] = S(0.6690465435572892) * x * z * (S(7) * zz - S(3));
  out[22] = S(0.47308734787878004) * (xx - yy) * (S(7) * zz - S(1));
  out[23] = S(1.7701307697799304) * x * z * (xx - S(3) * yy);
  out[24] = S(0.6258357354491761) * (xx * (xx - S(3) * yy) - yy * (S(3) * xx - yy));
}

struct RadianceFieldConfig {
  HashGridConfig grid;  // 16 levels by default
  int density_hidden = 64;
  int density_layers = 3;
  int color_hidden = 32;
  int color_layers = 3;
  int geo_feature_dim = 15;
  float density_clamp = 1e4f;
};

// Density + view-dependent color. Density depends only on position; the
// color head sees the geometry feature and the SH-encoded direction.
template <class S>
struct RadianceField {
  RadianceFieldConfig config;
  HashGrid<S> grid;
  Mlp<S> density_mlp;  // grid features -> 1 + geo_feature_dim
  Mlp<S> color_mlp;    // geo_feature_dim + kShDim -> 3

  void set_frozen(bool frozen) {
    for (auto& level : grid.levels) level.frozen = frozen;
    density_mlp.set_frozen(frozen);
    color_mlp.set_frozen(frozen);
  }

  std::vector<ParamBlock<S>*> params() {
    std::vector<ParamBlock<S>*> out;
    for (auto& level : grid.levels) out.push_back(&level);
    for (auto& l : density_mlp.layers) {
      out.push_back(&l.weight);
      out.push_back(&l.bias);
    }
    for (auto& l : color_mlp.layers) {
      out.push_back(&l.weight);
      out.push_back(&l.bias);
    }
    return out;
  }

  template <class U>
  RadianceField<U> cast() const {
    RadianceField<U> out;
    out.config = config;
    out.grid = grid.template cast<U>();
    out.density_mlp = density_mlp.template cast<U>();
    out.color_mlp = color_mlp.template cast<U>();
    return out;
  }
};

template <class S>
RadianceField<S> make_radiance_field(const RadianceFieldConfig& cfg, Rng& rng) {
  RadianceField<S> f;
  f.config = cfg;
  f.grid = make_hash_grid<S>(cfg.grid, "radiance.grid", rng);
  std::vector<int> ddims{f.grid.feature_dim()};
  for (int i = 0; i < cfg.density_layers; ++i) ddims.push_back(cfg.density_hidden);
  ddims.push_back(1 + cfg.geo_feature_dim);
  f.density_mlp = make_mlp<S>(ddims, "radiance.density", rng);
  std::vector<int> cdims{cfg.geo_feature_dim + kShDim};
  for (int i = 0; i < cfg.color_layers; ++i) cdims.push_back(cfg.color_hidden);
  cdims.push_back(3);
  f.color_mlp = make_mlp<S>(cdims, "radiance.color", rng);
  return f;
}

struct ObjectFieldConfig {
  HashGridConfig grid;  // 8 levels by default
  int hidden = 32;
  int hidden_layers = 2;
  int num_slots = 0;  // N, fixed by the slot budget before training

  ObjectFieldConfig() { grid.num_levels = 8; }
};

// Per-point probability vector over N anonymous object slots (softmax head).
// Input is the grid encoding of the position only: labels must not depend on
// the view direction.
template <class S>
struct ObjectField {
  ObjectFieldConfig config;
  HashGrid<S> grid;
  Mlp<S> object_mlp;  // grid features -> N logits

  int num_slots() const { return config.num_slots; }

  void set_frozen(bool frozen) {
    for (auto& level : grid.levels) level.frozen = frozen;
    object_mlp.set_frozen(frozen);
  }

  std::vector<ParamBlock<S>*> params() {
    std::vector<ParamBlock<S>*> out;
    for (auto& level : grid.levels) out.push_back(&level);
    for (auto& l : object_mlp.layers) {
      out.push_back(&l.weight);
      out.push_back(&l.bias);
    }
    return out;
  }

  template <class U>
  ObjectField<U> cast() const {
    ObjectField<U> out;
    out.config = config;
    out.grid = grid.template cast<U>();
    out.object_mlp = object_mlp.template cast<U>();
    return out;
  }
};

template <class S>
ObjectField<S> make_object_field(const ObjectFieldConfig& cfg, Rng& rng) {
  if (cfg.num_slots < 1) throw ConfigError("object field needs num_slots >= 1");
  ObjectField<S> f;
  f.config = cfg;
  f.grid = make_hash_grid<S>(cfg.grid, "object.grid", rng);
  std::vector<int> dims{f.grid.feature_dim()};
  for (int i = 0; i < cfg.hidden_layers; ++i) dims.push_back(cfg.hidden);
  dims.push_back(cfg.num_slots);
  f.object_mlp = make_mlp<S>(dims, "object.mlp", rng);
  return f;
}

// ---- batch evaluation on a tape ----

template <class S>
struct RadianceEval {
  typename Tape<S>::Var sigma;  // P x 1, exp-activated and clamped
  typename Tape<S>::Var color;  // P x 3, sigmoid-activated
};

// Density head only (importance sampling, background probes).
template <class S>
typename Tape<S>::Var eval_density(Tape<S>& tape, RadianceField<S>& field,
                                   const std::vector<Vec3<S>>& points, LevelMask mask) {
  auto feat = hash_encode(tape, field.grid, points, mask);
  auto h = field.density_mlp.forward(tape, feat);
  auto raw = tape.slice_cols(h, 0, 1);
  return tape.exp_clamped(raw, static_cast<S>(field.config.density_clamp));
}

template <class S>
RadianceEval<S> eval_radiance(Tape<S>& tape, RadianceField<S>& field,
                              const std::vector<Vec3<S>>& points,
                              const std::vector<Vec3<S>>& directions, LevelMask mask) {
  if (points.size() != directions.size())
    throw InputDomainError("eval_radiance: points/directions size mismatch");
  if (!field.grid.levels.empty() && !field.grid.levels[0].all_finite())
    throw DivergenceError("radiance field parameters are not finite");
  auto feat = hash_encode(tape, field.grid, points, mask);
  auto h = field.density_mlp.forward(tape, feat);
  auto raw = tape.slice_cols(h, 0, 1);
  auto sigma = tape.exp_clamped(raw, static_cast<S>(field.config.density_clamp));
  auto geo = tape.slice_cols(h, 1, 1 + field.config.geo_feature_dim);

  Tensor<S> sh(static_cast<int64_t>(points.size()), kShDim);
  for (size_t p = 0; p < directions.size(); ++p)
    sh_encode(directions[p], sh.v.data() + p * kShDim);
  auto color_in = tape.concat_cols(geo, tape.constant(std::move(sh)));
  auto color = tape.sigmoid(field.color_mlp.forward(tape, color_in));
  return {sigma, color};
}

// P x N softmax probabilities.
template <class S>
typename Tape<S>::Var eval_object(Tape<S>& tape, ObjectField<S>& field,
                                  const std::vector<Vec3<S>>& points, LevelMask mask) {
  auto feat = hash_encode(tape, field.grid, points, mask);
  auto logits = field.object_mlp.forward(tape, feat);
  return tape.softmax_rows(logits);
}

// ---- single-point convenience wrappers ----

template <class S>
std::pair<S, Vec3<S>> eval_radiance_point(RadianceField<S>& field, const Vec3<S>& x,
                                          const Vec3<S>& d, LevelMask mask) {
  Tape<S> tape;
  auto r = eval_radiance(tape, field, {x}, {d.normalized()}, mask);
  const Tensor<S>& c = tape.val(r.color);
  return {tape.val(r.sigma).v[0], Vec3<S>{c.v[0], c.v[1], c.v[2]}};
}

template <class S>
std::vector<S> eval_object_point(ObjectField<S>& field, const Vec3<S>& x, LevelMask mask) {
  Tape<S> tape;
  auto o = eval_object(tape, field, {x}, mask);
  return tape.val(o).v;
}

}  // namespace objfield
