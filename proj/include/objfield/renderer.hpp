#pragma once

#include <algorithm>
#include <memory>
#include <vector>

#include "objfield/fields.hpp"
#include "objfield/geometry.hpp"
#include "objfield/image.hpp"
#include "objfield/tape.hpp"

namespace objfield {

struct SamplingConfig {
  int coarse_samples = 64;
  int fine_samples = 64;
  bool stratified = false;        // jitter sample positions within bins
  bool importance_resample = true;
  Vec3f background{0, 0, 0};      // composited where transmittance survives

  void validate() const {
    if (coarse_samples < 2) throw ConfigError("coarse_samples must be >= 2");
    if (fine_samples < 0) throw ConfigError("fine_samples must be >= 0");
  }
};

// Rendered per-pixel slot probabilities plus opacity and depth channels.
// Per pixel, the slot sum equals opacity up to float rounding.
struct ProbabilityImage {
  int num_slots = 0, height = 0, width = 0;
  std::vector<float> values;  // [n][i][j]
  ImageF opacity;             // H x W
  ImageF depth;

  ProbabilityImage() = default;
  ProbabilityImage(int n, int h, int w)
      : num_slots(n), height(h), width(w),
        values(static_cast<size_t>(n) * h * w, 0.0f), opacity(h, w, 1), depth(h, w, 1) {}

  float& at(int n, int i, int j) {
    return values[(static_cast<size_t>(n) * height + i) * width + j];
  }
  float at(int n, int i, int j) const {
    return values[(static_cast<size_t>(n) * height + i) * width + j];
  }
  const float* slot_plane(int n) const {
    return values.data() + static_cast<size_t>(n) * height * width;
  }
};

template <class S>
struct RayRenderResult {
  Vec3<S> color;
  S opacity = 0;
  S depth = 0;
  std::vector<S> obj_probs;
};

namespace detail {

// Quadrature geometry for a batch of rays: sorted sample positions with bin
// widths that partition [t_near, t_far] exactly, so constant-density
// transmittance is reproduced to machine precision.
template <class S>
struct SampleGeometry {
  std::vector<S> t;             // flattened positions
  std::vector<S> delta;         // bin widths
  std::vector<int64_t> offset;  // per-ray begin, size R+1
  int64_t num_rays() const { return static_cast<int64_t>(offset.size()) - 1; }
};

// Bin edges at midpoints between consecutive samples, clamped to the
// segment: deltas always sum to t_far - t_near.
template <class S>
void positions_to_bins(const std::vector<S>& pos, S t_near, S t_far, std::vector<S>& t,
                       std::vector<S>& delta) {
  size_t n = pos.size();
  for (size_t i = 0; i < n; ++i) {
    S lo = i == 0 ? t_near : (pos[i - 1] + pos[i]) / S(2);
    S hi = i + 1 == n ? t_far : (pos[i] + pos[i + 1]) / S(2);
    t.push_back(pos[i]);
    delta.push_back(hi - lo);
  }
}

// Uniform coarse positions over [t_near, t_far]: bin midpoints, or a
// jittered point per bin in stratified mode.
template <class S>
std::vector<S> coarse_positions(S t_near, S t_far, int n, bool stratified, Rng& rng) {
  std::vector<S> pos(n);
  S w = (t_far - t_near) / static_cast<S>(n);
  for (int i = 0; i < n; ++i) {
    S u = stratified ? static_cast<S>(rng.uniform()) : S(0.5);
    pos[i] = t_near + (static_cast<S>(i) + u) * w;
  }
  return pos;
}

// Inverse-CDF draw of n positions from per-bin masses w (with a uniform
// floor so empty rays fall back to uniform sampling).
template <class S>
std::vector<S> importance_positions(const std::vector<S>& edges, const std::vector<S>& w, int n,
                                    bool stratified, Rng& rng) {
  size_t bins = w.size();
  std::vector<S> cum(bins + 1, S(0));
  S floor_mass = S(0.01) / static_cast<S>(bins);
  S total = S(0);
  for (S v : w) total += v;
  S scale = total > S(0) ? S(1) / total : S(0);
  for (size_t i = 0; i < bins; ++i) cum[i + 1] = cum[i] + w[i] * scale + floor_mass;
  std::vector<S> out(n);
  for (int k = 0; k < n; ++k) {
    S u = (static_cast<S>(k) + (stratified ? static_cast<S>(rng.uniform()) : S(0.5))) /
          static_cast<S>(n) * cum[bins];
    auto it = std::upper_bound(cum.begin(), cum.end(), u);
    size_t b = std::min(bins - 1, static_cast<size_t>(std::max<int64_t>(0, it - cum.begin() - 1)));
    S mass = cum[b + 1] - cum[b];
    S frac = mass > S(0) ? (u - cum[b]) / mass : S(0.5);
    out[k] = edges[b] + frac * (edges[b + 1] - edges[b]);
  }
  return out;
}

// Plain compositing of one ray; shared by the tape op, oracles, and the ray
// cache. Fills per-sample weights and the surviving transmittance.
template <class S>
void composite_weights(const S* sigma, const S* delta, int64_t n, std::vector<S>& w, S& T_out) {
  w.resize(n);
  S T = S(1);
  for (int64_t i = 0; i < n; ++i) {
    S absorb = std::exp(-sigma[i] * delta[i]);
    w[i] = T * (S(1) - absorb);
    T *= absorb;
  }
  T_out = T;
}

// Coarse pass + optional density-driven importance resampling. The probe
// evaluation runs on its own tape and never contributes gradients.
template <class S>
struct PreparedSamples {
  std::shared_ptr<SampleGeometry<S>> geom;
  std::vector<Vec3<S>> points;  // contracted
  std::vector<Vec3<S>> dirs;
};

template <class S>
PreparedSamples<S> prepare_samples(const std::vector<Ray>& rays, RadianceField<S>* radiance,
                                   const SamplingConfig& cfg, LevelMask mask, uint64_t seed) {
  cfg.validate();
  const int64_t R = static_cast<int64_t>(rays.size());
  PreparedSamples<S> prep;
  prep.geom = std::make_shared<SampleGeometry<S>>();
  prep.geom->offset.assign(R + 1, 0);

  std::vector<std::vector<S>> pos(R);
  for (int64_t r = 0; r < R; ++r) {
    if (rays[r].degenerate()) continue;
    Rng rng(derive_seed(seed, 0xc0a53eULL, static_cast<uint64_t>(r)));
    pos[r] = coarse_positions<S>(static_cast<S>(rays[r].t_near), static_cast<S>(rays[r].t_far),
                                 cfg.coarse_samples, cfg.stratified, rng);
  }

  if (cfg.importance_resample && cfg.fine_samples > 0 && radiance) {
    std::vector<Vec3<S>> probe;
    for (int64_t r = 0; r < R; ++r)
      for (S t : pos[r]) probe.push_back(contract(rays[r].at(static_cast<float>(t)).template cast<S>()));
    std::vector<S> sigma;
    if (!probe.empty()) {
      Tape<S> probe_tape;
      auto sig = eval_density(probe_tape, *radiance, probe, mask);
      sigma = std::move(probe_tape.val(sig).v);
    }
    size_t at = 0;
    std::vector<S> w, edges, t_tmp, d_tmp;
    for (int64_t r = 0; r < R; ++r) {
      size_t n = pos[r].size();
      if (n == 0) continue;
      t_tmp.clear();
      d_tmp.clear();
      positions_to_bins(pos[r], static_cast<S>(rays[r].t_near), static_cast<S>(rays[r].t_far),
                        t_tmp, d_tmp);
      S T;
      composite_weights(sigma.data() + at, d_tmp.data(), static_cast<int64_t>(n), w, T);
      at += n;
      edges.assign(n + 1, S(0));
      edges[0] = static_cast<S>(rays[r].t_near);
      for (size_t i = 0; i < n; ++i) edges[i + 1] = edges[i] + d_tmp[i];
      Rng rng(derive_seed(seed, 0xf13eULL, static_cast<uint64_t>(r)));
      std::vector<S> fine = importance_positions(edges, w, cfg.fine_samples, cfg.stratified, rng);
      pos[r].insert(pos[r].end(), fine.begin(), fine.end());
      std::sort(pos[r].begin(), pos[r].end());
    }
  }

  for (int64_t r = 0; r < R; ++r) {
    if (!pos[r].empty())
      positions_to_bins(pos[r], static_cast<S>(rays[r].t_near), static_cast<S>(rays[r].t_far),
                        prep.geom->t, prep.geom->delta);
    prep.geom->offset[r + 1] = static_cast<int64_t>(prep.geom->t.size());
    Vec3<S> dir = rays[r].direction.template cast<S>();
    for (S t : pos[r]) {
      prep.points.push_back(contract(rays[r].at(static_cast<float>(t)).template cast<S>()));
      prep.dirs.push_back(dir);
    }
  }
  return prep;
}

}  // namespace detail

template <class S>
struct RenderVars {
  typename Tape<S>::Var out = -1;  // R x (5 + N): [rgb | opacity | depth | slots]
  int64_t num_rays = 0;
  int64_t num_slots = 0;

  typename Tape<S>::Var color(Tape<S>& t) const { return t.slice_cols(out, 0, 3); }
  typename Tape<S>::Var opacity(Tape<S>& t) const { return t.slice_cols(out, 3, 4); }
  typename Tape<S>::Var depth(Tape<S>& t) const { return t.slice_cols(out, 4, 5); }
  typename Tape<S>::Var obj(Tape<S>& t) const { return t.slice_cols(out, 5, 5 + num_slots); }
};

// Differentiable alpha-compositing of per-sample sigma (Px1), color (Px3,
// optional) and slot probabilities (PxN, optional) into per-ray outputs.
// d/d(sigma) uses the standard suffix-sum form.
template <class S>
RenderVars<S> composite_op(Tape<S>& tape, typename Tape<S>::Var sigma,
                           typename Tape<S>::Var color, typename Tape<S>::Var obj,
                           std::shared_ptr<detail::SampleGeometry<S>> geom,
                           Vec3<S> background = {}) {
  const int64_t R = geom->num_rays();
  const int64_t N = obj >= 0 ? tape.val(obj).cols : 0;
  const int64_t C = 5 + N;
  const bool has_color = color >= 0;
  Tensor<S> out(R, C);
  const Tensor<S>& sig_v = tape.val(sigma);
  const Tensor<S>* col_v = has_color ? &tape.val(color) : nullptr;
  const Tensor<S>* obj_v = obj >= 0 ? &tape.val(obj) : nullptr;
  if (sig_v.rows != static_cast<int64_t>(geom->t.size()))
    throw InputDomainError("composite_op: sample count mismatch");

  parallel_ranges(R, kScatterPartitions, [&](int, int64_t rb, int64_t re) {
    std::vector<S> w;
    for (int64_t r = rb; r < re; ++r) {
      int64_t b = geom->offset[r], e = geom->offset[r + 1];
      S T;
      detail::composite_weights(sig_v.v.data() + b, geom->delta.data() + b, e - b, w, T);
      S* o = out.v.data() + r * C;
      for (int64_t i = b; i < e; ++i) {
        S wi = w[i - b];
        if (has_color) {
          const S* c = col_v->v.data() + i * 3;
          o[0] += wi * c[0];
          o[1] += wi * c[1];
          o[2] += wi * c[2];
        }
        o[3] += wi;
        o[4] += wi * geom->t[i];
        if (N > 0) {
          const S* op = obj_v->v.data() + i * N;
          for (int64_t n = 0; n < N; ++n) o[5 + n] += wi * op[n];
        }
      }
      if (has_color) {
        o[0] += T * background.x;
        o[1] += T * background.y;
        o[2] += T * background.z;
      }
    }
  });

  bool ng = tape.needs_grad(sigma) || (has_color && tape.needs_grad(color)) ||
            (obj >= 0 && tape.needs_grad(obj));
  auto node = tape.add_node(
      std::move(out), ng,
      [sigma, color, obj, geom, background, N, C, has_color](Tape<S>& t,
                                                             typename Tape<S>::Var self) {
        const Tensor<S>& g = t.grad(self);
        const Tensor<S>& sig_v = t.val(sigma);
        const int64_t R = geom->num_rays();
        const bool need_sigma = t.needs_grad(sigma);
        const bool need_color = has_color && t.needs_grad(color);
        const bool need_obj = obj >= 0 && t.needs_grad(obj);
        Tensor<S>* gsig = need_sigma ? &t.grad(sigma) : nullptr;
        Tensor<S>* gcol = need_color ? &t.grad(color) : nullptr;
        Tensor<S>* gobj = need_obj ? &t.grad(obj) : nullptr;
        const Tensor<S>* col_v = has_color ? &t.val(color) : nullptr;
        const Tensor<S>* obj_v = obj >= 0 ? &t.val(obj) : nullptr;

        parallel_ranges(R, kScatterPartitions, [&](int, int64_t rb, int64_t re) {
          std::vector<S> w, t_next, a;
          for (int64_t r = rb; r < re; ++r) {
            int64_t b = geom->offset[r], e = geom->offset[r + 1];
            int64_t n_s = e - b;
            if (n_s == 0) continue;
            S T;
            detail::composite_weights(sig_v.v.data() + b, geom->delta.data() + b, n_s, w, T);
            t_next.resize(n_s);  // T_{i+1}: transmittance after sample i
            S Tacc = S(1);
            for (int64_t i = 0; i < n_s; ++i) {
              Tacc *= std::exp(-sig_v.v[b + i] * geom->delta[b + i]);
              t_next[i] = Tacc;
            }
            const S* gr = g.v.data() + r * C;
            a.resize(n_s);
            for (int64_t i = 0; i < n_s; ++i) {
              // a_i = d(outputs_r)/d(w_i) . upstream; the background term
              // enters through dT/dw = -1 per unit weight.
              S ai = gr[3] + gr[4] * geom->t[b + i];
              if (has_color) {
                const S* c = col_v->v.data() + (b + i) * 3;
                ai += (c[0] - background.x) * gr[0] + (c[1] - background.y) * gr[1] +
                      (c[2] - background.z) * gr[2];
              }
              if (N > 0) {
                const S* op = obj_v->v.data() + (b + i) * N;
                for (int64_t n = 0; n < N; ++n) ai += op[n] * gr[5 + n];
              }
              a[i] = ai;
              if (need_color) {
                S* gc = gcol->v.data() + (b + i) * 3;
                gc[0] += w[i] * gr[0];
                gc[1] += w[i] * gr[1];
                gc[2] += w[i] * gr[2];
              }
              if (need_obj) {
                S* go = gobj->v.data() + (b + i) * N;
                for (int64_t n = 0; n < N; ++n) go[n] += w[i] * gr[5 + n];
              }
            }
            if (need_sigma) {
              S suffix = S(0);  // sum_{j > i} w_j a_j
              for (int64_t i = n_s - 1; i >= 0; --i) {
                gsig->v[b + i] += geom->delta[b + i] * (t_next[i] * a[i] - suffix);
                suffix += w[i] * a[i];
              }
            }
          }
        });
      });
  return RenderVars<S>{node, R, N};
}

// Full differentiable render of a ray batch.
template <class S>
RenderVars<S> render_rays(Tape<S>& tape, const std::vector<Ray>& rays, RadianceField<S>& radiance,
                          ObjectField<S>* objects, const SamplingConfig& cfg, LevelMask mask,
                          uint64_t seed) {
  auto prep = detail::prepare_samples(rays, &radiance, cfg, mask, seed);
  auto rad = eval_radiance(tape, radiance, prep.points, prep.dirs, mask);
  typename Tape<S>::Var obj = -1;
  if (objects) obj = eval_object(tape, *objects, prep.points, objects->grid.full_mask());
  return composite_op(tape, rad.sigma, rad.color, obj, prep.geom,
                      cfg.background.template cast<S>());
}

template <class S>
RayRenderResult<S> render_ray(const Ray& ray, RadianceField<S>& radiance, ObjectField<S>* objects,
                              const SamplingConfig& cfg, LevelMask mask, uint64_t seed) {
  if (ray.degenerate()) throw InputDomainError("render_ray: t_near must be below t_far");
  Tape<S> tape;
  auto rv = render_rays(tape, std::vector<Ray>{ray}, radiance, objects, cfg, mask, seed);
  const Tensor<S>& o = tape.val(rv.out);
  RayRenderResult<S> res;
  res.color = {o.v[0], o.v[1], o.v[2]};
  res.opacity = o.v[3];
  res.depth = o.v[4];
  res.obj_probs.assign(o.v.begin() + 5, o.v.begin() + 5 + rv.num_slots);
  return res;
}

// Forward-only whole-image render; deterministic given seed, tiled to bound
// peak memory. Degenerate rays (missing the sampling domain) render empty.
template <class S>
std::pair<ImageF, ProbabilityImage> render_image(const Camera& camera, RadianceField<S>& radiance,
                                                 ObjectField<S>* objects,
                                                 const SamplingConfig& cfg, LevelMask mask,
                                                 uint64_t seed, float t_near = 0.05f) {
  const int H = camera.height, W = camera.width;
  const int N = objects ? objects->num_slots() : 0;
  ImageF rgb(H, W, 3);
  ProbabilityImage prob(N, H, W);
  const int64_t total = static_cast<int64_t>(H) * W;
  const int64_t chunk = 4096;
  for (int64_t begin = 0; begin < total; begin += chunk) {
    int64_t end = std::min(total, begin + chunk);
    std::vector<Ray> rays;
    rays.reserve(end - begin);
    for (int64_t p = begin; p < end; ++p)
      rays.push_back(
          generate_ray(camera, static_cast<int>(p / W), static_cast<int>(p % W), t_near));
    Tape<S> tape;
    auto rv = render_rays(tape, rays, radiance, objects, cfg, mask,
                          derive_seed(seed, 0x1397ULL, static_cast<uint64_t>(begin)));
    const Tensor<S>& o = tape.val(rv.out);
    for (int64_t k = 0; k < end - begin; ++k) {
      int i = static_cast<int>((begin + k) / W), j = static_cast<int>((begin + k) % W);
      const S* row = o.v.data() + k * o.cols;
      rgb.at(i, j, 0) = static_cast<float>(row[0]);
      rgb.at(i, j, 1) = static_cast<float>(row[1]);
      rgb.at(i, j, 2) = static_cast<float>(row[2]);
      prob.opacity.at(i, j) = static_cast<float>(row[3]);
      prob.depth.at(i, j) = static_cast<float>(row[4]);
      for (int n = 0; n < N; ++n) prob.at(n, i, j) = static_cast<float>(row[5 + n]);
    }
  }
  return {std::move(rgb), std::move(prob)};
}

// ---- frozen-radiance ray cache for object training ----
//
// With the radiance weights frozen and fixed-midpoint samples, per-view
// sample positions and compositing weights never change during object
// training, so they are computed once per view. Samples below the prune
// threshold are dropped; per-ray opacity is the sum of kept weights, which
// keeps the slot-sum identity exact within the cache.
template <class S>
struct ViewRayCache {
  int height = 0, width = 0;
  std::vector<Vec3<S>> points;  // contracted positions of kept samples
  std::vector<S> weight;        // fixed compositing weights
  std::vector<int64_t> offset;  // per ray, size H*W+1
  std::vector<S> opacity;       // per ray
  std::vector<S> depth;
  int64_t num_rays() const { return static_cast<int64_t>(offset.size()) - 1; }
};

template <class S>
ViewRayCache<S> build_ray_cache(const Camera& camera, RadianceField<S>& radiance,
                                const SamplingConfig& cfg, LevelMask mask, uint64_t seed,
                                S prune_threshold = S(1e-3), float t_near = 0.05f) {
  SamplingConfig fixed = cfg;
  fixed.stratified = false;  // affinities must be stable across iterations
  ViewRayCache<S> cache;
  cache.height = camera.height;
  cache.width = camera.width;
  cache.offset.push_back(0);
  const int64_t total = static_cast<int64_t>(camera.height) * camera.width;
  const int64_t chunk = 8192;
  for (int64_t begin = 0; begin < total; begin += chunk) {
    int64_t end = std::min(total, begin + chunk);
    std::vector<Ray> rays;
    for (int64_t p = begin; p < end; ++p)
      rays.push_back(generate_ray(camera, static_cast<int>(p / camera.width),
                                  static_cast<int>(p % camera.width), t_near));
    auto prep = detail::prepare_samples(rays, &radiance, fixed, mask,
                                        derive_seed(seed, 0xcacd3ULL,
                                                    static_cast<uint64_t>(begin)));
    std::vector<S> sigma;
    if (!prep.points.empty()) {
      Tape<S> tape;
      auto sig = eval_density(tape, radiance, prep.points, mask);
      sigma = std::move(tape.val(sig).v);
    }
    std::vector<S> w;
    for (int64_t r = 0; r < end - begin; ++r) {
      int64_t b = prep.geom->offset[r], e = prep.geom->offset[r + 1];
      S T;
      detail::composite_weights(sigma.data() + b, prep.geom->delta.data() + b, e - b, w, T);
      S opacity = S(0), depth = S(0);
      for (int64_t i = b; i < e; ++i) {
        S wi = w[i - b];
        if (wi < prune_threshold) continue;
        cache.points.push_back(prep.points[i]);
        cache.weight.push_back(wi);
        opacity += wi;
        depth += wi * prep.geom->t[i];
      }
      cache.offset.push_back(static_cast<int64_t>(cache.points.size()));
      cache.opacity.push_back(opacity);
      cache.depth.push_back(depth);
    }
  }
  return cache;
}

// O[r, n] = sum_i w_i * obj[i, n] over the cached samples of ray r. The
// gradient into obj is w_i per sample; writes are disjoint per ray.
template <class S>
typename Tape<S>::Var weighted_composite(Tape<S>& tape, typename Tape<S>::Var obj,
                                         const ViewRayCache<S>& cache) {
  const int64_t R = cache.num_rays();
  const int64_t N = tape.val(obj).cols;
  if (tape.val(obj).rows != static_cast<int64_t>(cache.points.size()))
    throw InputDomainError("weighted_composite: sample count mismatch");
  Tensor<S> out(R, N);
  const Tensor<S>& ov = tape.val(obj);
  parallel_ranges(R, kScatterPartitions, [&](int, int64_t rb, int64_t re) {
    for (int64_t r = rb; r < re; ++r) {
      S* dst = out.v.data() + r * N;
      for (int64_t i = cache.offset[r]; i < cache.offset[r + 1]; ++i) {
        const S* src = ov.v.data() + i * N;
        S wi = cache.weight[i];
        for (int64_t n = 0; n < N; ++n) dst[n] += wi * src[n];
      }
    }
  });
  const ViewRayCache<S>* cp = &cache;
  return tape.add_node(std::move(out), tape.needs_grad(obj),
                       [obj, cp, N](Tape<S>& t, typename Tape<S>::Var self) {
                         if (!t.needs_grad(obj)) return;
                         const Tensor<S>& g = t.grad(self);
                         Tensor<S>& go = t.grad(obj);
                         const int64_t R = cp->num_rays();
                         parallel_ranges(R, kScatterPartitions, [&](int, int64_t rb, int64_t re) {
                           for (int64_t r = rb; r < re; ++r) {
                             const S* gr = g.v.data() + r * N;
                             for (int64_t i = cp->offset[r]; i < cp->offset[r + 1]; ++i) {
                               S* dst = go.v.data() + i * N;
                               S wi = cp->weight[i];
                               for (int64_t n = 0; n < N; ++n) dst[n] += wi * gr[n];
                             }
                           }
                         });
                       });
}

}  // namespace objfield
